#include "mudich/scenario.hpp"

#include "mudich/errors.hpp"
#include "mudich/homological.hpp"
#include "mudich/resonance.hpp"

#include <chrono>
#include <random>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mudich {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void config_fail(const std::string& where, const std::string& msg) {
    throw ConfigError(where + ": " + msg);
}

int line_of_byte(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

Matrix parse_matrix(const ordered_json& rows, const std::string& where) {
    if (!rows.is_array() || rows.empty()) config_fail(where, "matrix must be a nonempty array of rows");
    const std::size_t n = rows.size();
    Matrix m(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        if (!rows[r].is_array() || rows[r].size() != n)
            config_fail(where, "matrix rows must all have length " + std::to_string(n));
        for (std::size_t c = 0; c < n; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
}

GrowthRate parse_rate(const ordered_json& j) {
    const std::string kind = j.value("kind", "exp");
    if (kind == "exp") return GrowthRate::exponential();
    if (kind == "poly") return GrowthRate::polynomial();
    if (kind == "induced") {
        if (j.contains("preset")) {
            const std::string preset = j["preset"].get<std::string>();
            if (preset == "quadratic")
                return GrowthRate::induced([](double t) { return (t + 1.0) * (t + 1.0); },
                                           [](double t) { return 2.0 * (t + 1.0); }, false,
                                           "quadratic");
            if (preset == "exp")
                return GrowthRate::induced([](double t) { return std::exp(t); },
                                           [](double t) { return std::exp(t); }, false,
                                           "induced-exp");
            config_fail("rate.preset", "unknown induced preset '" + preset + "'");
        }
        if (j.contains("table")) {
            const auto& tab = j["table"];
            return GrowthRate::induced_from_table(tab.at("t").get<std::vector<double>>(),
                                                  tab.at("nu").get<std::vector<double>>());
        }
        config_fail("rate", "induced rate needs a preset or a table");
    }
    config_fail("rate.kind", "unknown kind '" + kind + "' (exp | poly | induced)");
}

BlockCoefficient parse_block(const ordered_json& j, const GrowthRate& rate, int index) {
    const std::string where = "system.blocks[" + std::to_string(index) + "]";
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant") return BlockCoefficient::constant_block(parse_matrix(j.at("matrix"), where));
    if (kind == "piecewise") {
        std::vector<Matrix> pieces;
        for (const auto& p : j.at("matrices")) pieces.push_back(parse_matrix(p, where));
        return BlockCoefficient::piecewise_block(j.at("breakpoints").get<std::vector<double>>(),
                                                 std::move(pieces));
    }
    if (kind == "smooth") {
        const std::string preset = j.value("preset", "");
        if (preset == "gamma-shift") {
            const double c = j.value("c", 1.0);
            return BlockCoefficient::smooth_block(
                [rate, c](double t) {
                    Matrix m(1, 1);
                    m(0, 0) = c * shift_coefficient(rate, t);
                    return m;
                },
                1, "gamma-shift",
                rate.kind() == RateKind::Exponential ? std::vector<double>{}
                                                     : std::vector<double>{0.0});
        }
        if (preset == "rotating") {
            const double a = j.value("a", -0.5);
            const double omega = j.value("omega", 1.0);
            return BlockCoefficient::smooth_block(
                [a, omega](double t) {
                    Matrix m(2, 2);
                    const double w = std::sin(omega * t);
                    m << a, w, -w, a;
                    return m;
                },
                2, "rotating");
        }
        if (preset == "oscillating") {
            const double a = j.value("a", -1.0);
            const double amp = j.value("amplitude", 0.3);
            const double omega = j.value("omega", 1.0);
            return BlockCoefficient::smooth_block(
                [a, amp, omega](double t) {
                    Matrix m(1, 1);
                    m(0, 0) = a + amp * std::cos(omega * t);
                    return m;
                },
                1, "oscillating");
        }
        config_fail(where, "unknown smooth preset '" + preset +
                               "' (gamma-shift | rotating | oscillating)");
    }
    config_fail(where, "unknown block kind '" + kind + "' (constant | piecewise | smooth)");
}

AdmissibleCandidate parse_psi(const ordered_json& j) {
    const std::string kind = j.value("kind", "bounded-const");
    if (kind == "zero") return AdmissibleCandidate::zero();
    if (kind == "gaussian") return AdmissibleCandidate::gaussian(j.value("amplitude", 1.0));
    if (kind == "exp-tent")
        return AdmissibleCandidate::exp_tent(j.value("amplitude", 1.0), j.value("lambda", 1.0));
    if (kind == "bounded-const") return AdmissibleCandidate::bounded_const(j.value("c", 1.0));
    if (kind == "poly") return AdmissibleCandidate::poly(j.at("coeffs").get<std::vector<double>>());
    if (kind == "tabulated") {
        if (!j.contains("decay"))
            config_fail("psi", "tabulated psi requires a decay descriptor");
        const auto& d = j["decay"];
        return AdmissibleCandidate::tabulated(
            j.at("t").get<std::vector<double>>(), j.at("values").get<std::vector<double>>(),
            {d.value("poly_power", 0.0), d.value("exp_rate", 0.0), d.value("gauss_rate", 0.0)});
    }
    config_fail("psi.kind", "unknown kind '" + kind + "'");
}

std::pair<std::function<double(double)>, bool> parse_profile(const ordered_json& j,
                                                             std::string& name) {
    if (j.is_null()) {
        name = "const";
        return {nullptr, true};
    }
    const std::string kind = j.value("kind", "const");
    const double amp = j.value("amplitude", 1.0);
    name = kind;
    if (kind == "const") {
        if (amp == 1.0) return {nullptr, true};
        return {[amp](double) { return amp; }, true};
    }
    if (kind == "gaussian") return {[amp](double t) { return amp * std::exp(-t * t); }, false};
    if (kind == "exp-tent") {
        const double lambda = j.value("lambda", 1.0);
        return {[amp, lambda](double t) { return amp * std::exp(-lambda * std::abs(t)); }, false};
    }
    if (kind == "linear") return {[amp](double t) { return amp * t; }, false};
    config_fail("profile.kind", "unknown kind '" + kind + "'");
}

Nonlinearity parse_nonlinearity(const ordered_json& j, const std::vector<int>& dims) {
    const int order = j.value("order", 2);
    if (order < 2) config_fail("nonlinearity.order", "order must be >= 2");
    int dim = 0;
    for (int d : dims) dim += d;

    std::vector<NonlinearTerm> terms;
    int index = 0;
    for (const auto& tj : j.value("terms", ordered_json::array())) {
        const std::string where = "nonlinearity.terms[" + std::to_string(index++) + "]";
        const int position = tj.at("position").get<int>() - 1; // files are 1-based
        if (position < 0 || position >= static_cast<int>(dims.size()))
            config_fail(where, "position out of range");
        MultiIndex k = tj.at("k").get<MultiIndex>();
        if (static_cast<int>(k.size()) != static_cast<int>(dims.size()))
            config_fail(where, "k must have one entry per block");
        CoeffTensor base = CoeffTensor::zero(position, k, dims);
        for (const auto& e : tj.at("entries")) {
            auto beta = e.at("beta").get<std::vector<int>>();
            auto value = e.at("value").get<std::vector<double>>();
            if (static_cast<int>(beta.size()) != dim)
                config_fail(where, "entry beta must have one exponent per coordinate");
            if (static_cast<int>(value.size()) != dims[position])
                config_fail(where, "entry value must live in the target block");
            Vector v(dims[position]);
            for (std::size_t c = 0; c < value.size(); ++c) v(c) = value[c];
            base.insert(std::move(beta), std::move(v));
        }
        NonlinearTerm term;
        term.base = std::move(base);
        std::string pname;
        auto [profile, constant] =
            parse_profile(tj.contains("profile") ? tj["profile"] : ordered_json(), pname);
        term.profile = std::move(profile);
        term.profile_name = pname;
        term.profile_constant = constant;
        terms.push_back(std::move(term));
    }

    Nonlinearity::EvalFn remainder = nullptr;
    if (j.contains("remainder")) {
        const auto& r = j["remainder"];
        if (r.value("kind", "power") != "power")
            config_fail("nonlinearity.remainder", "unknown remainder preset");
        const double coeff = r.value("coeff", 0.0);
        const int power = r.value("power", order + 1);
        if (power <= order)
            config_fail("nonlinearity.remainder", "power must exceed the declared order");
        remainder = [coeff, power](double, const Vector& x) {
            return Vector(coeff * std::pow(x.norm(), power - 1) * x);
        };
    }

    AdmissibleCandidate psi = j.contains("psi") ? parse_psi(j["psi"])
                                                : AdmissibleCandidate::bounded_const(1.0);
    try {
        return Nonlinearity::from_terms(dims, order, std::move(terms), std::move(psi), remainder);
    } catch (const PreconditionError& e) {
        config_fail("nonlinearity", e.what());
    }
}

Spectrum parse_spectrum_literal(const ordered_json& j) {
    Spectrum s;
    for (const auto& iv : j.at("intervals")) {
        if (!iv.is_array() || iv.size() != 2)
            config_fail("spectrum.intervals", "each interval is a [lo, hi] pair");
        s.intervals.push_back({iv[0].get<double>(), iv[1].get<double>()});
    }
    for (std::size_t i = 0; i + 1 < s.intervals.size(); ++i)
        if (!(s.intervals[i].hi < s.intervals[i + 1].lo))
            config_fail("spectrum.intervals", "intervals must be sorted and disjoint");
    s.tol = j.value("tol", 0.0);
    if (j.contains("gap_ranks")) s.gap_ranks = j["gap_ranks"].get<std::vector<int>>();
    return s;
}

MultiIndex parse_target_k(const ordered_json& j, int n, const std::string& where) {
    MultiIndex k = j.get<MultiIndex>();
    if (static_cast<int>(k.size()) != n) config_fail(where, "k must have one entry per block");
    return k;
}

} // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::ostringstream os;
        os << origin << ":" << line_of_byte(text, e.byte) << ": " << e.what();
        throw ConfigError(os.str());
    }

    Scenario sc;
    sc.echo = j;
    sc.name = j.value("name", origin);
    try {
        sc.rate = parse_rate(j.value("rate", ordered_json{{"kind", "exp"}}));

        if (!j.contains("system")) config_fail("system", "missing");
        std::vector<BlockCoefficient> blocks;
        int index = 0;
        for (const auto& bj : j["system"].at("blocks")) blocks.push_back(parse_block(bj, sc.rate, index++));
        if (blocks.empty()) config_fail("system.blocks", "need at least one block");
        sc.system = std::make_shared<BlockSystem>(std::move(blocks));

        if (j.contains("integrator")) {
            sc.integrator.rel_tol = j["integrator"].value("rel_tol", sc.integrator.rel_tol);
            sc.integrator.abs_tol = j["integrator"].value("abs_tol", sc.integrator.abs_tol);
        }

        std::vector<int> dims;
        for (int b = 0; b < sc.system->block_count(); ++b) dims.push_back(sc.system->block_dim(b));
        const int n = sc.system->block_count();

        if (j.contains("nonlinearity")) sc.nonlinearity = parse_nonlinearity(j["nonlinearity"], dims);

        if (j.contains("spectrum")) {
            const auto& sj = j["spectrum"];
            if (sj.contains("intervals")) {
                sc.given_spectrum = parse_spectrum_literal(sj);
                if (sc.given_spectrum->count() != n)
                    config_fail("spectrum.intervals",
                                "explicit spectrum must have one interval per block");
            }
            if (sj.contains("window")) {
                sc.window_lo = sj["window"].at(0).get<double>();
                sc.window_hi = sj["window"].at(1).get<double>();
            }
            sc.spectrum_tol = sj.value("tol", sc.spectrum_tol);
            sc.mode = sj.value("mode", "uniform") == "nonuniform" ? DichotomyMode::Nonuniform
                                                                  : DichotomyMode::Uniform;
        }
        if (j.contains("tolerances")) {
            const auto& tj = j["tolerances"];
            sc.dichotomy.margin = tj.value("dichotomy_margin", sc.dichotomy.margin);
            sc.dichotomy.horizon_u = tj.value("horizon_u", sc.dichotomy.horizon_u);
            sc.dichotomy.nodes = tj.value("nodes", sc.dichotomy.nodes);
            sc.transform.elimination_threshold =
                tj.value("elimination_threshold", sc.transform.elimination_threshold);
            sc.transform.homological.tail_tol =
                tj.value("tail_tol", sc.transform.homological.tail_tol);
            sc.transform.homological.fit_horizon_u =
                tj.value("fit_horizon_u", sc.transform.homological.fit_horizon_u);
        }
        if (j.contains("resonance")) sc.resonance_ell = j["resonance"].value("ell", 2);
        if (j.contains("eliminate")) {
            const auto& ej = j["eliminate"];
            const int position = ej.at("position").get<int>() - 1;
            if (position < 0 || position >= n) config_fail("eliminate.position", "out of range");
            sc.target = {position, parse_target_k(ej.at("k"), n, "eliminate.k")};
        }
        if (j.contains("normal_form")) {
            sc.normal_form_ell = j["normal_form"].value("ell", 2);
            sc.transform.elimination_threshold =
                j["normal_form"].value("threshold", sc.transform.elimination_threshold);
        }
        if (j.contains("verify")) {
            const auto& vj = j["verify"];
            sc.verify_roundtrip_tol = vj.value("roundtrip_tol", sc.verify_roundtrip_tol);
            sc.verify_conjugacy_tol = vj.value("conjugacy_tol", sc.verify_conjugacy_tol);
            sc.verify_coeff_tol = vj.value("coeff_tol", sc.verify_coeff_tol);
            sc.conjugacy_t0 = vj.value("t0", sc.conjugacy_t0);
            sc.conjugacy_horizon = vj.value("horizon", sc.conjugacy_horizon);
            if (vj.contains("x0")) {
                const auto x0 = vj["x0"].get<std::vector<double>>();
                Vector v(x0.size());
                for (std::size_t c = 0; c < x0.size(); ++c) v(c) = x0[c];
                sc.conjugacy_x0 = v;
            }
        }
        if (j.contains("nonuniform")) {
            const auto& nj = j["nonuniform"];
            sc.nonuniform_eps = nj.value("eps", sc.nonuniform_eps);
            if (nj.contains("t_grid")) sc.nonuniform_grid = nj["t_grid"].get<std::vector<double>>();
            if (nj.contains("constants")) {
                const auto& cj = nj["constants"];
                sc.given_context = NonuniformContext::from_constants(
                    cj.at("alpha").get<std::vector<double>>(),
                    cj.at("beta").get<std::vector<double>>(),
                    cj.at("theta").get<std::vector<double>>(),
                    cj.at("nu").get<std::vector<double>>(), cj.value("K", 1.0),
                    nj.value("eps", 0.25));
            }
        }
        // Cross-validation: spectra and nonlinearities agree with the system.
        if (sc.nonlinearity && sc.nonlinearity->dim() != sc.system->dim())
            config_fail("nonlinearity", "dimensions inconsistent with the system");
    } catch (const ConfigError&) {
        throw;
    } catch (const PreconditionError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open scenario file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Command runner
// ---------------------------------------------------------------------------

namespace {

std::string format_k(const MultiIndex& k) {
    std::string out = "(";
    for (std::size_t i = 0; i < k.size(); ++i) out += (i ? "," : "") + std::to_string(k[i]);
    return out + ")";
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct Emitter {
    ordered_json report;
    std::filesystem::path out_dir;

    void write_report() const {
        std::ofstream out(out_dir / "report.json");
        out << report.dump(2) << "\n";
    }
    void write_csv(const std::string& name, const std::string& header,
                   const std::vector<std::vector<std::string>>& rows) const {
        std::ofstream out(out_dir / name);
        out << header << "\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
            out << "\n";
        }
    }
};

ordered_json spectrum_to_json(const Spectrum& s) {
    ordered_json out;
    out["intervals"] = ordered_json::array();
    for (const auto& iv : s.intervals) out["intervals"].push_back({iv.lo, iv.hi});
    out["gap_ranks"] = s.gap_ranks;
    out["tol"] = s.tol;
    out["growth_warning"] = s.growth_warning;
    out["probes"] = ordered_json::array();
    for (const auto& p : s.probes)
        out["probes"].push_back({{"gamma", p.gamma},
                                 {"admits", p.admits},
                                 {"rank", p.rank},
                                 {"alpha", p.alpha},
                                 {"beta", p.beta}});
    return out;
}

Spectrum obtain_spectrum(const Scenario& sc, Emitter& em) {
    if (sc.given_spectrum) {
        em.report["spectrum"] = spectrum_to_json(*sc.given_spectrum);
        em.report["spectrum"]["source"] = "scenario";
        return *sc.given_spectrum;
    }
    EvolutionOperator op(sc.system, sc.integrator);
    Spectrum s = compute_spectrum(op, sc.rate, sc.window_lo, sc.window_hi, sc.spectrum_tol,
                                  sc.mode, sc.dichotomy);
    em.report["spectrum"] = spectrum_to_json(s);
    em.report["spectrum"]["source"] = "computed";
    return s;
}

const Nonlinearity& require_nonlinearity(const Scenario& sc) {
    if (!sc.nonlinearity)
        throw PreconditionError("this command needs a nonlinearity section in the scenario");
    return *sc.nonlinearity;
}

std::pair<int, MultiIndex> require_target(const Scenario& sc, const Spectrum& spectrum,
                                          const Nonlinearity& nl) {
    if (sc.target) return *sc.target;
    // Default: the first nonzero analytic term, graded-lex.
    const int n = nl.block_count();
    for (int ord = 2; ord <= nl.order(); ++ord)
        for (const auto& k : multi_indices(n, ord))
            for (int jj = 0; jj < n; ++jj)
                if (!nl.taylor_coeff(jj, k, 0.0).is_zero(1e-14)) return {jj, k};
    (void)spectrum;
    throw PreconditionError("no eliminate target given and no nonzero term found");
}

ordered_json step_to_json(const EliminationStep& s) {
    ordered_json out;
    out["position"] = s.position + 1; // presentation is 1-based
    out["k"] = s.k;
    out["direction"] = s.direction;
    out["dist"] = s.dist;
    out["eps"] = s.eps;
    out["K"] = s.K;
    out["delta"] = s.delta;
    out["xi_at_origin"] = s.xi_at_origin;
    out["coeff_before"] = s.coeff_before;
    out["coeff_after"] = s.coeff_after;
    out["roundtrip_residual"] = s.roundtrip_residual;
    return out;
}

int cmd_spectrum(const Scenario& sc, Emitter& em) {
    EvolutionOperator op(sc.system, sc.integrator);
    const Spectrum s = compute_spectrum(op, sc.rate, sc.window_lo, sc.window_hi, sc.spectrum_tol,
                                        sc.mode, sc.dichotomy);
    em.report["spectrum"] = spectrum_to_json(s);
    const auto growth = fit_bounded_growth(op, sc.rate,
                                           growth_fit_pairs(sc.rate, sc.dichotomy.horizon_u / 2.0));
    em.report["bounded_growth"] = {{"K", growth.K},
                                   {"a", growth.a},
                                   {"epsilon", growth.epsilon},
                                   {"admits", growth.admits}};
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : s.probes)
        rows.push_back({csv_num(p.gamma), p.admits ? "1" : "0", std::to_string(p.rank),
                        csv_num(p.alpha), csv_num(p.beta)});
    em.write_csv("spectrum.csv", "gamma,admits,rank,alpha,beta", rows);
    return 0;
}

int cmd_resonance(const Scenario& sc, Emitter& em) {
    Spectrum s = obtain_spectrum(sc, em);
    const auto rep = check_H3(s, sc.resonance_ell);
    em.report["h3"] = {{"ell", sc.resonance_ell},
                       {"pass", rep.pass},
                       {"pairs_checked", rep.pairs_checked},
                       {"min_dist", rep.min_dist},
                       {"violations", rep.violations.size()}};
    std::vector<std::vector<std::string>> rows;
    const int n = s.count();
    for (int ord = 2; ord <= sc.resonance_ell; ++ord)
        for (const auto& k : multi_indices(n, ord))
            for (int jj = 0; jj < n; ++jj) {
                const auto v = check_nonresonance(s, jj, k);
                rows.push_back({std::to_string(jj + 1), format_k(k), to_string(v.status),
                                csv_num(v.dist)});
            }
    em.write_csv("resonance.csv", "j,k,status,dist", rows);
    return rep.pass ? 0 : 2;
}

void emit_domain_csv(const ConjugationMap& map, const Scenario& sc, Emitter& em) {
    std::vector<std::vector<std::string>> rows;
    for (double t : admissibility_grid(sc.rate, 5.0, 41))
        rows.push_back({csv_num(t), csv_num(map.trumpet_radius(t)), csv_num(map.zeta(t))});
    em.write_csv("domain.csv", "t,xi,zeta", rows);
}

int cmd_eliminate(const Scenario& sc, Emitter& em) {
    const auto& nl = require_nonlinearity(sc);
    Spectrum s = obtain_spectrum(sc, em);
    auto op = std::make_shared<EvolutionOperator>(sc.system, sc.integrator);
    const auto [position, k] = require_target(sc, s, nl);
    auto res = eliminate_term(op, sc.rate, nl, s, position, k, sc.transform);
    em.report["step"] = step_to_json(res.step);

    std::vector<std::vector<std::string>> rows;
    const int n = nl.block_count();
    for (double t : sc.transform.verify_times)
        for (int ord = 2; ord <= order_of(k); ++ord)
            for (const auto& m : multi_indices(n, ord))
                for (int jj = 0; jj < n; ++jj) {
                    const double before = nl.taylor_coeff(jj, m, t).norm_estimate();
                    const double after = res.transformed.taylor_coeff(jj, m, t).norm_estimate();
                    rows.push_back({csv_num(t), std::to_string(jj + 1), format_k(m),
                                    csv_num(before), csv_num(after)});
                }
    em.write_csv("coefficients.csv", "t,j,k,before,after", rows);
    emit_domain_csv(res.system->map(), sc, em);
    return 0;
}

int cmd_normal_form(const Scenario& sc, Emitter& em) {
    const auto& nl = require_nonlinearity(sc);
    Spectrum s = obtain_spectrum(sc, em);
    auto op = std::make_shared<EvolutionOperator>(sc.system, sc.integrator);
    const auto result = normal_form(op, sc.rate, nl, s, sc.normal_form_ell, sc.transform);

    em.report["transcript"] = ordered_json::array();
    for (const auto& step : result.transcript) em.report["transcript"].push_back(step_to_json(step));
    em.report["normal_form"] = {{"ell", sc.normal_form_ell},
                                {"verified", result.verified},
                                {"max_coeff_norm", result.max_coeff_norm},
                                {"threshold", sc.transform.elimination_threshold},
                                {"domain_radius", result.domain_radius},
                                {"psi_tilde_scale", result.psi_tilde_scale},
                                {"eliminations", result.transcript.size()}};
    if (result.aborted) {
        em.report["error"] = {{"kind", result.abort_kind}, {"message", result.abort_reason}};
        std::cerr << "normal-form aborted after " << result.transcript.size()
                  << " elimination(s): " << result.abort_reason << "\n";
        return result.abort_kind == "precondition" ? 3 : 4;
    }

    std::vector<std::vector<std::string>> rows;
    const int n = nl.block_count();
    for (double t : sc.transform.verify_times)
        for (int ord = 2; ord <= sc.normal_form_ell; ++ord)
            for (const auto& m : multi_indices(n, ord))
                for (int jj = 0; jj < n; ++jj) {
                    const double before = nl.taylor_coeff(jj, m, t).norm_estimate();
                    const double after =
                        result.final_nl.taylor_coeff(jj, m, t).norm_estimate();
                    rows.push_back({csv_num(t), std::to_string(jj + 1), format_k(m),
                                    csv_num(before), csv_num(after)});
                }
    em.write_csv("coefficients.csv", "t,j,k,before,after", rows);
    return result.verified ? 0 : 2;
}

int cmd_verify(const Scenario& sc, Emitter& em, std::uint64_t seed) {
    const auto& nl = require_nonlinearity(sc);
    Spectrum s = obtain_spectrum(sc, em);
    auto op = std::make_shared<EvolutionOperator>(sc.system, sc.integrator);
    const auto [position, k] = require_target(sc, s, nl);
    auto res = eliminate_term(op, sc.rate, nl, s, position, k, sc.transform);
    const auto& map = res.system->map();
    em.report["step"] = step_to_json(res.step);

    bool pass = true;
    ordered_json checks = ordered_json::array();
    auto record = [&](const std::string& name, double value, double tol) {
        const bool ok = value <= tol;
        checks.push_back({{"check", name}, {"value", value}, {"tol", tol}, {"pass", ok}});
        pass = pass && ok;
    };

    // Inverse round trips and the Lipschitz-2 bound on seeded samples.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(-2.0, 2.0), unit(-1.0, 1.0);
    double max_roundtrip = 0.0, max_lip_excess = 0.0;
    int max_iters = 0;
    double max_contraction = 0.0;
    for (int it = 0; it < 1000; ++it) {
        const double t = ut(rng);
        const double r = 0.45 * map.trumpet_radius(t);
        Vector y(nl.dim()), y2(nl.dim());
        for (int c = 0; c < nl.dim(); ++c) {
            y(c) = r * unit(rng) / std::sqrt(static_cast<double>(nl.dim()));
            y2(c) = r * unit(rng) / std::sqrt(static_cast<double>(nl.dim()));
        }
        InverseStats stats;
        const Vector x = map.H_inverse(t, y, &stats);
        max_roundtrip = std::max(max_roundtrip, (map.H_eval(t, x) - y).norm());
        max_iters = std::max(max_iters, stats.iterations);
        max_contraction = std::max(max_contraction, stats.contraction);
        const Vector x2 = map.H_inverse(t, y2);
        const double lip = (x - x2).norm() - 2.0 * (y - y2).norm();
        max_lip_excess = std::max(max_lip_excess, lip);
    }
    record("inverse_roundtrip", max_roundtrip, sc.verify_roundtrip_tol);
    record("inverse_lipschitz_excess", max_lip_excess, 1e-10);
    record("inverse_iterations", max_iters, 60.0);
    record("inverse_contraction", max_contraction, 0.55);

    // Conjugacy along trajectories, both directions.
    Vector x0;
    if (sc.conjugacy_x0) {
        x0 = *sc.conjugacy_x0;
    } else {
        x0 = Vector::Constant(nl.dim(), 0.5 * map.trumpet_radius(sc.conjugacy_t0) /
                                            std::sqrt(static_cast<double>(nl.dim())));
    }
    record("conjugacy_forward",
           conjugacy_residual(*res.system, sc.conjugacy_t0, x0, sc.conjugacy_horizon),
           sc.verify_conjugacy_tol);
    ConjugacyOptions rev;
    rev.reverse = true;
    record("conjugacy_reverse",
           conjugacy_residual(*res.system, sc.conjugacy_t0, x0, sc.conjugacy_horizon, rev),
           sc.verify_conjugacy_tol);

    // Elimination bookkeeping: the target died, the others moved by
    // less than the coefficient tolerance.
    record("target_coefficient_after", res.step.coeff_after, sc.verify_coeff_tol);
    double max_move = 0.0;
    const int n = nl.block_count();
    auto g_field = [&](double tt, const Vector& xx) { return res.system->G_eval(tt, xx); };
    for (double t : sc.transform.verify_times)
        for (int ord = 2; ord <= order_of(k); ++ord)
            for (const auto& m : multi_indices(n, ord))
                for (int jj = 0; jj < n; ++jj) {
                    if (jj == position && m == k) continue;
                    const auto est = estimate_origin_coeff(
                        g_field, nl.block_dims(), jj, m, t,
                        fit_radii_to_domain(sc.transform.stencil_radii, nl.dim(),
                                            map.trumpet_radius(t)),
                        map.trumpet_radius(t));
                    const auto before = nl.taylor_coeff(jj, m, t);
                    max_move = std::max(
                        max_move, std::abs(est.tensor.norm_estimate() - before.norm_estimate()));
                }
    record("untouched_coefficient_drift", max_move, sc.verify_coeff_tol);

    em.report["checks"] = checks;
    em.report["verified"] = pass;

    std::vector<std::vector<std::string>> rows;
    for (const auto& c : checks)
        rows.push_back({c["check"].get<std::string>(), csv_num(c["value"].get<double>()),
                        csv_num(c["tol"].get<double>()), c["pass"].get<bool>() ? "1" : "0"});
    em.write_csv("residuals.csv", "check,value,tol,pass", rows);
    return pass ? 0 : 2;
}

int cmd_nonuniform_report(const Scenario& sc, Emitter& em) {
    const auto& nl = require_nonlinearity(sc);
    Spectrum s = obtain_spectrum(sc, em);
    EvolutionOperator op(sc.system, sc.integrator);
    const auto [position, k] = require_target(sc, s, nl);
    const auto verdict = check_nonresonance(s, position, k);
    if (verdict.status == ResonanceStatus::Resonant)
        throw PreconditionError("nonuniform-report: the target pair is resonant");

    const NonuniformContext ctx =
        sc.given_context ? *sc.given_context
                         : NonuniformContext::fit(op, sc.rate, s, sc.nonuniform_eps, sc.dichotomy);
    em.report["context"] = {{"alpha", ctx.alpha}, {"beta", ctx.beta},   {"theta", ctx.theta},
                            {"nu", ctx.nu},       {"K", ctx.K},         {"eps", ctx.eps},
                            {"fitted", !sc.given_context}};

    const auto rows = shrinkage_report(ctx, sc.rate, nl.psi(), verdict, position, k,
                                       sc.nonuniform_grid);
    std::vector<std::vector<std::string>> csv;
    double min_ratio = 1.0;
    for (const auto& r : rows) {
        csv.push_back({csv_num(r.t), csv_num(r.eta_p), csv_num(r.eta_m), csv_num(r.xi_uniform),
                       csv_num(r.xi_nonuniform)});
        min_ratio = std::min(min_ratio, r.ratio);
    }
    em.write_csv("nonuniform.csv", "t,eta_plus,eta_minus,xi_uniform,xi_nonuniform", csv);
    em.report["shrinkage"] = {{"rows", rows.size()}, {"min_ratio", min_ratio}};
    return 0;
}

} // namespace

int run_command(const std::string& command, const Scenario& scenario, const RunFlags& flags) {
    Scenario sc = scenario;
    if (flags.tol_profile == "fast") {
        sc.dichotomy.nodes = 9;
        sc.dichotomy.horizon_u = std::min(sc.dichotomy.horizon_u, 10.0);
        sc.transform.homological.quad.rel_tol =
            std::max(sc.transform.homological.quad.rel_tol, 1e-9);
    } else if (flags.tol_profile != "accurate") {
        throw ConfigError("unknown tol profile '" + flags.tol_profile + "' (fast | accurate)");
    }

    std::filesystem::create_directories(flags.out_dir);
    Emitter em;
    em.out_dir = flags.out_dir;
    em.report["command"] = command;
    em.report["scenario"] = sc.echo;
    em.report["seed"] = flags.seed;
    em.report["tol_profile"] = flags.tol_profile;
    if (flags.fixed_clock) {
        em.report["generated_at"] = nullptr;
    } else {
        const auto now = std::chrono::system_clock::now();
        em.report["generated_at"] =
            std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    }

    int status = 0;
    try {
        if (command == "spectrum")
            status = cmd_spectrum(sc, em);
        else if (command == "resonance")
            status = cmd_resonance(sc, em);
        else if (command == "eliminate")
            status = cmd_eliminate(sc, em);
        else if (command == "normal-form")
            status = cmd_normal_form(sc, em);
        else if (command == "verify")
            status = cmd_verify(sc, em, flags.seed);
        else if (command == "nonuniform-report")
            status = cmd_nonuniform_report(sc, em);
        else
            throw ConfigError("unknown command '" + command + "'");
    } catch (const ConfigError&) {
        throw;
    } catch (const PreconditionError& e) {
        em.report["error"] = {{"kind", "precondition"}, {"message", e.what()}};
        status = 3;
        std::cerr << "precondition failure: " << e.what() << "\n";
    } catch (const WindowError& e) {
        em.report["error"] = {{"kind", "window"}, {"message", e.what()}};
        status = 3;
        std::cerr << "window failure: " << e.what() << "\n";
    } catch (const BudgetError& e) {
        em.report["error"] = {{"kind", "budget"}, {"message", e.what()}};
        status = 3;
        std::cerr << "budget failure: " << e.what() << "\n";
    } catch (const Error& e) {
        em.report["error"] = {{"kind", "numerical"}, {"message", e.what()}};
        status = 4;
        std::cerr << "numerical failure: " << e.what() << "\n";
    }
    em.report["exit_status"] = status;
    em.write_report();
    return status;
}

} // namespace mudich
