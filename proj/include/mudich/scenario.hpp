#pragma once

#include "mudich/dichotomy.hpp"
#include "mudich/nonlinearity.hpp"
#include "mudich/nonuniform.hpp"
#include "mudich/transform.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

namespace mudich {

/// A parsed scenario file: the system, rate and nonlinearity plus the
/// command-specific options. Positions and multi-indices are 1-based in
/// the file (as printed in reports) and 0-based here.
struct Scenario {
    std::string name;
    GrowthRate rate = GrowthRate::exponential();
    std::shared_ptr<const BlockSystem> system;
    IntegratorOptions integrator;
    std::optional<Nonlinearity> nonlinearity;

    // spectrum
    double window_lo = -5.0, window_hi = 5.0;
    double spectrum_tol = 0.05;
    DichotomyMode mode = DichotomyMode::Uniform;
    DichotomyOptions dichotomy;
    std::optional<Spectrum> given_spectrum; ///< explicit intervals, skips the scan

    // resonance
    int resonance_ell = 2;

    // eliminate / normal-form
    std::optional<std::pair<int, MultiIndex>> target;
    int normal_form_ell = 2;
    TransformOptions transform;

    // verify
    double verify_roundtrip_tol = 1e-8;
    double verify_conjugacy_tol = 1e-4;
    double verify_coeff_tol = 1e-5;
    double conjugacy_t0 = 0.0;
    double conjugacy_horizon = 5.0;
    std::optional<Vector> conjugacy_x0; ///< default: half the trumpet radius

    // nonuniform-report
    double nonuniform_eps = 0.25;
    std::vector<double> nonuniform_grid = {-2.0, -1.0, 0.0, 1.0, 2.0};
    std::optional<NonuniformContext> given_context;

    nlohmann::ordered_json echo; ///< raw config, embedded in reports
};

/// Parse and validate a scenario file. ConfigError messages carry the
/// line of the offending construct where available.
[[nodiscard]] Scenario load_scenario(const std::string& path);
[[nodiscard]] Scenario parse_scenario(const std::string& text, const std::string& origin);

struct RunFlags {
    std::string out_dir = ".";
    std::uint64_t seed = 20250810;
    bool fixed_clock = false;
    std::string tol_profile = "accurate"; ///< "fast" loosens scan grids
};

/// Execute one pipeline command against a scenario, writing report.json
/// and the CSV series into out_dir. Returns the process exit status:
/// 0 success, 2 verification failure, 3 precondition failure,
/// 4 numerical failure. (Parse failures throw ConfigError before this.)
[[nodiscard]] int run_command(const std::string& command, const Scenario& scenario,
                              const RunFlags& flags);

} // namespace mudich
