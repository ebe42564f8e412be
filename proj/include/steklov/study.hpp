#pragma once

// Study orchestration: parse a JSON study configuration, classify the density
// by its surface average, run the cell -> effective -> limit -> epsilon-sweep
// pipeline with on-disk caching, compute the convergence diagnostics the
// scaling laws predict, and emit CSV / JSON / SVG reports.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "steklov/mesh_io.hpp"
#include "steklov/spectra.hpp"

namespace steklov {

struct StudyConfig {
    CellGeometry geometry;
    CoefficientTensor coefficients;
    DensityField density;
    std::string a11_src, a12_src, a22_src, rho_src;
    std::vector<int> levels = {2, 4, 8, 16};
    int k = 3;
    int m_limit = 64;
    double tol_zero = 1e-10; // critical when |M_S| <= tol_zero * perimeter
    double eig_tol = 1e-8;
    double cg_tol = 1e-10;
    double alpha_min = 1e-8;
    int max_dofs = 200000;
    std::string out_dir = "out";
    std::optional<SpectralCase> case_override;
    bool sanity_positive_density = false;
    bool tilde_epsilon_diagnostic = false;
    std::uint64_t seed = 0; // 0: derived from the config hash
    int threads = 0;        // 0: hardware concurrency
    std::string raw_text;   // config file bytes, for hashing and provenance

    std::uint64_t config_hash() const { return fnv1a64(raw_text); }
    std::uint64_t effective_seed() const { return seed != 0 ? seed : config_hash(); }

    /// Cache directory key: the config bytes plus every override that changes
    /// numerical results (a CLI --seed or --case-override must not reuse
    /// entries computed under different settings).
    std::uint64_t cache_hash() const {
        std::string tagged = raw_text;
        tagged += "\n#seed=" + std::to_string(seed);
        tagged += "\n#case=";
        tagged += case_override ? to_string(*case_override) : "auto";
        return fnv1a64(tagged);
    }
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline SpectralCase parse_case_name(const std::string& s) {
    if (s == "pos" || s == "positive") return SpectralCase::positive;
    if (s == "neg" || s == "negative") return SpectralCase::negative;
    if (s == "crit" || s == "critical") return SpectralCase::critical;
    throw config_error("unknown case name '" + s + "' (expected pos|neg|crit)");
}

} // namespace detail

/// Parse and validate a study configuration from JSON text.
inline StudyConfig parse_study_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    StudyConfig cfg;
    cfg.raw_text = text;
    try {
        if (j.contains("geometry")) {
            const auto& g = j.at("geometry");
            const std::string hole = g.value("hole", "square");
            if (hole == "square")
                cfg.geometry.hole_kind = HoleKind::square;
            else if (hole == "disk")
                cfg.geometry.hole_kind = HoleKind::disk;
            else if (hole == "none")
                cfg.geometry.hole_kind = HoleKind::none;
            else
                throw config_error("geometry.hole must be square|disk|none");
            if (g.contains("center")) {
                cfg.geometry.hole_center = {g.at("center").at(0).get<double>(),
                                            g.at("center").at(1).get<double>()};
            }
            cfg.geometry.hole_size = g.value("size", 0.5);
            cfg.geometry.subdivisions = g.value("subdivisions", 8);
        }
        if (j.contains("coefficients")) {
            const auto& c = j.at("coefficients");
            if (c.contains("preset")) {
                cfg.coefficients = coefficient_preset(c.at("preset").get<std::string>());
            } else {
                cfg.a11_src = c.at("a11").get<std::string>();
                cfg.a12_src = c.at("a12").get<std::string>();
                cfg.a22_src = c.at("a22").get<std::string>();
                cfg.coefficients = {Expr::parse(cfg.a11_src), Expr::parse(cfg.a12_src),
                                    Expr::parse(cfg.a22_src)};
            }
        } else {
            cfg.coefficients = coefficient_preset("identity");
        }
        if (j.contains("density")) {
            const auto& d = j.at("density");
            if (d.contains("preset"))
                cfg.density = density_preset(d.at("preset").get<std::string>(), d.value("c", 0.0));
            else {
                cfg.rho_src = d.at("rho").get<std::string>();
                cfg.density = {Expr::parse(cfg.rho_src), std::nullopt};
            }
        } else {
            throw config_error("config requires a density");
        }
        if (j.contains("levels")) cfg.levels = j.at("levels").get<std::vector<int>>();
        cfg.k = j.value("k", 3);
        cfg.m_limit = j.value("m_limit", 64);
        if (j.contains("tolerances")) {
            const auto& t = j.at("tolerances");
            cfg.tol_zero = t.value("tol_zero", cfg.tol_zero);
            cfg.eig_tol = t.value("eig", cfg.eig_tol);
            cfg.cg_tol = t.value("cg", cfg.cg_tol);
            cfg.alpha_min = t.value("alpha_min", cfg.alpha_min);
        }
        cfg.max_dofs = j.value("max_dofs", cfg.max_dofs);
        cfg.out_dir = j.value("out", cfg.out_dir);
        if (j.contains("case_override") && !j.at("case_override").is_null())
            cfg.case_override = detail::parse_case_name(j.at("case_override").get<std::string>());
        cfg.sanity_positive_density = j.value("sanity_positive_density", false);
        cfg.tilde_epsilon_diagnostic = j.value("tilde_epsilon_diagnostic", false);
        cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
        cfg.threads = j.value("threads", 0);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config field error: ") + e.what());
    }

    if (cfg.levels.empty()) throw config_error("levels must be a nonempty ascending list");
    for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
        if (cfg.levels[i] < 2) throw config_error("levels entries must be >= 2");
        if (i > 0 && cfg.levels[i] <= cfg.levels[i - 1])
            throw config_error("levels must be strictly ascending");
    }
    if (cfg.k < 1) throw config_error("k must be >= 1");
    if (cfg.m_limit < 8) throw config_error("m_limit must be >= 8");

    cfg.coefficients.require_periodic(33, 1e-9);
    cfg.coefficients.require_elliptic(cfg.alpha_min);
    cfg.density.require_periodic(33, 1e-9);
    return cfg;
}

inline StudyConfig load_study_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_study_config(ss.str());
}

/// Case classification from the surface average, honoring an override.
/// Returns the case plus a warning string when the override disagrees.
inline std::pair<SpectralCase, std::string> detect_case(double m_s, double perimeter,
                                                        double tol_zero_coeff,
                                                        std::optional<SpectralCase> override_case) {
    const SpectralCase natural = classify_case(m_s, tol_zero_coeff * perimeter);
    if (override_case && *override_case != natural)
        return {*override_case, std::string("case override ") + to_string(*override_case) +
                                    " disagrees with detected " + to_string(natural) +
                                    " (M_S = " + fmt_g17(m_s) + ")"};
    return {override_case.value_or(natural), ""};
}

struct StudyRow {
    std::string case_name;
    int k = 0;
    char sign = '+';
    int n = 0;
    double epsilon = 0.0;
    double lambda_raw = 0.0;
    double diagnostic = 0.0;
    double limit = 0.0;
    double abs_gap = 0.0;
    double rel_gap = 0.0;
};

struct LevelDiagnostics {
    int n = 0;
    std::optional<double> corrector_ratio_plus;  // ||u_eps-(u0+eps u1)|| / ||u_eps-u0||
    std::optional<double> corrector_ratio_minus; // factorized reconstruction, minus sequence
    std::vector<double> xi_eps_over_eps;         // secondary tilde-pencil diagnostic
};

struct StudyReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    SpectralCase spectral_case = SpectralCase::positive;
    std::string case_warning;
    HomogenizedData homog;
    std::string cell_mesh_checksum;
    std::vector<double> limit_plus;  // targets for the '+' rows, k entries
    std::vector<double> limit_minus; // targets for the '-' rows
    double minus_shift = 0.0;        // the 1/eps coefficient in the '-' diagnostic
    double plus_shift = 0.0;         // nonzero only in the negative case
    std::vector<EpsilonSpectrum> eps_spectra; // one per level
    std::vector<LevelDiagnostics> diagnostics;
    std::vector<StudyRow> rows;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string mesh_checksum(const Mesh& mesh) {
    std::ostringstream ss;
    mesh_write(mesh, ss);
    return hex64(fnv1a64(ss.str()));
}

inline nlohmann::json corrector_to_json(const CorrectorField& c) {
    return {{"which", c.which == CorrectorField::Which::chi1   ? "chi1"
                      : c.which == CorrectorField::Which::chi2 ? "chi2"
                                                               : "chi0"},
            {"values", c.values}};
}

inline CorrectorField corrector_from_json(const nlohmann::json& j) {
    CorrectorField c;
    const std::string w = j.at("which").get<std::string>();
    c.which = w == "chi1"   ? CorrectorField::Which::chi1
              : w == "chi2" ? CorrectorField::Which::chi2
                            : CorrectorField::Which::chi0;
    c.values = j.at("values").get<std::vector<double>>();
    return c;
}

inline nlohmann::json tensor_to_json(const EffectiveTensor& q) {
    return {{"q11", q.q11}, {"q12", q.q12}, {"q22", q.q22}};
}

inline EffectiveTensor tensor_from_json(const nlohmann::json& j) {
    return {j.at("q11").get<double>(), j.at("q12").get<double>(), j.at("q22").get<double>()};
}

} // namespace detail

/// Versioned JSON form of the homogenized data ("homogdata 1").
inline nlohmann::json homogenized_to_json(const HomogenizedData& hd,
                                          const std::string& mesh_checksum) {
    nlohmann::json j;
    j["format"] = "homogdata 1";
    j["case"] = to_string(hd.spectral_case);
    j["M_S_rho"] = hd.M_S_rho;
    j["q"] = detail::tensor_to_json(hd.q);
    j["chi1"] = detail::corrector_to_json(hd.chi1);
    j["chi2"] = detail::corrector_to_json(hd.chi2);
    j["cell_mesh_checksum"] = mesh_checksum;
    if (hd.chi0) j["chi0"] = detail::corrector_to_json(*hd.chi0);
    if (hd.nu_sq) j["nu_sq"] = *hd.nu_sq;
    if (hd.local) {
        j["lambda1_neg"] = hd.local->lambda1_neg;
        j["theta1_neg"] = hd.local->theta1_neg;
        j["surface_integral_rho_theta_sq"] = hd.local->surface_integral_rho_theta_sq;
    }
    if (hd.tilde) {
        j["q_tilde"] = detail::tensor_to_json(hd.tilde->q_tilde);
        j["M_S_rho_tilde"] = hd.tilde->M_S_rho_tilde;
        j["chi_t1"] = detail::corrector_to_json(hd.tilde->chi_t1);
        j["chi_t2"] = detail::corrector_to_json(hd.tilde->chi_t2);
    }
    return j;
}

inline HomogenizedData homogenized_from_json(const nlohmann::json& j,
                                             const std::string& expect_checksum) {
    if (j.value("format", "") != std::string("homogdata 1"))
        throw io_error("homogdata: unknown format");
    if (j.value("cell_mesh_checksum", "") != expect_checksum)
        throw io_error("homogdata: cell mesh checksum mismatch");
    HomogenizedData hd;
    const std::string c = j.at("case").get<std::string>();
    hd.spectral_case = c == "positive"   ? SpectralCase::positive
                       : c == "negative" ? SpectralCase::negative
                                         : SpectralCase::critical;
    hd.M_S_rho = j.at("M_S_rho").get<double>();
    hd.q = detail::tensor_from_json(j.at("q"));
    hd.chi1 = detail::corrector_from_json(j.at("chi1"));
    hd.chi2 = detail::corrector_from_json(j.at("chi2"));
    if (j.contains("chi0")) hd.chi0 = detail::corrector_from_json(j.at("chi0"));
    if (j.contains("nu_sq")) hd.nu_sq = j.at("nu_sq").get<double>();
    if (j.contains("lambda1_neg")) {
        LocalSteklovData local;
        local.lambda1_neg = j.at("lambda1_neg").get<double>();
        local.theta1_neg = j.at("theta1_neg").get<std::vector<double>>();
        local.surface_integral_rho_theta_sq =
            j.at("surface_integral_rho_theta_sq").get<double>();
        hd.local = std::move(local);
    }
    if (j.contains("q_tilde")) {
        TildeData t;
        t.q_tilde = detail::tensor_from_json(j.at("q_tilde"));
        t.M_S_rho_tilde = j.at("M_S_rho_tilde").get<double>();
        t.chi_t1 = detail::corrector_from_json(j.at("chi_t1"));
        t.chi_t2 = detail::corrector_from_json(j.at("chi_t2"));
        hd.tilde = std::move(t);
    }
    return hd;
}

namespace detail {

inline nlohmann::json eps_to_json(const EpsilonSpectrum& s) {
    auto pairs = [](const std::vector<EpsilonPair>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : v)
            arr.push_back({{"lambda", p.lambda},
                           {"eig_residual", p.eig_residual},
                           {"normalization_residual", p.normalization_residual},
                           {"values", p.values}});
        return arr;
    };
    return {{"format", "epsspectrum 1"}, {"n", s.n},       {"epsilon", s.epsilon},
            {"case", to_string(s.spectral_case)},          {"positives", pairs(s.positives)},
            {"negatives", pairs(s.negatives)},             {"warnings", s.warnings}};
}

inline EpsilonSpectrum eps_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != std::string("epsspectrum 1"))
        throw io_error("epsspectrum: unknown format");
    EpsilonSpectrum s;
    s.n = j.at("n").get<int>();
    s.epsilon = j.at("epsilon").get<double>();
    const std::string c = j.at("case").get<std::string>();
    s.spectral_case = c == "positive"   ? SpectralCase::positive
                      : c == "negative" ? SpectralCase::negative
                                        : SpectralCase::critical;
    auto pairs = [](const nlohmann::json& arr) {
        std::vector<EpsilonPair> v;
        for (const auto& p : arr) {
            EpsilonPair ep;
            ep.lambda = p.at("lambda").get<double>();
            ep.eig_residual = p.at("eig_residual").get<double>();
            ep.normalization_residual = p.at("normalization_residual").get<double>();
            ep.values = p.at("values").get<std::vector<double>>();
            v.push_back(std::move(ep));
        }
        return v;
    };
    s.positives = pairs(j.at("positives"));
    s.negatives = pairs(j.at("negatives"));
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
}

} // namespace detail

/// Full study pipeline. Artifacts are cached under
/// <out>/cache/<config-hash>/ and reused on re-runs.
inline StudyReport run_study(const StudyConfig& cfg) {
    namespace fs = std::filesystem;
    StudyReport report;
    report.config_hash = detail::hex64(cfg.config_hash());
    report.seed = cfg.effective_seed();

    const fs::path cache_dir = fs::path(cfg.out_dir) / "cache" / detail::hex64(cfg.cache_hash());
    std::error_code ec;
    fs::create_directories(cache_dir, ec);
    if (ec) throw io_error("cannot create cache directory " + cache_dir.string());

    // --- cell stage ---
    const Mesh cell = build_cell_mesh(cfg.geometry);
    report.cell_mesh_checksum = detail::mesh_checksum(cell);
    {
        const fs::path mesh_path = cache_dir / "cell.mesh";
        if (!fs::exists(mesh_path)) mesh_write(cell, mesh_path.string());
    }

    const double m_s = surface_average(cell, cfg.density);
    const double perimeter = cell.tagged_perimeter(BoundaryTag::HOLE);
    auto [spectral_case, warning] = detect_case(m_s, perimeter, cfg.tol_zero, cfg.case_override);
    report.spectral_case = spectral_case;
    report.case_warning = warning;
    if (!warning.empty()) report.warnings.push_back(warning);

    CellPipelineOptions copts;
    copts.cg_tol = cfg.cg_tol;
    copts.eig_tol = cfg.eig_tol;
    copts.seed = report.seed;
    copts.tol_zero_coeff = cfg.tol_zero;
    copts.want_tilde = !cfg.sanity_positive_density;

    const fs::path homog_path = cache_dir / "homog.json";
    bool homog_loaded = false;
    if (fs::exists(homog_path)) {
        try {
            std::ifstream is(homog_path);
            nlohmann::json j = nlohmann::json::parse(is);
            report.homog = homogenized_from_json(j, report.cell_mesh_checksum);
            homog_loaded = report.homog.spectral_case == spectral_case;
        } catch (const std::exception&) {
            homog_loaded = false; // stale or corrupt cache entry: recompute
        }
    }
    if (!homog_loaded) {
        report.homog = compute_homogenized_data(cell, cfg.coefficients, cfg.density, copts,
                                                spectral_case);
        std::ofstream os(homog_path);
        if (!os) throw io_error("cannot write " + homog_path.string());
        os << homogenized_to_json(report.homog, report.cell_mesh_checksum).dump(1) << "\n";
    }
    const HomogenizedData& hd = report.homog;

    // --- limit stage ---
    const Mesh omega = build_cell_mesh({HoleKind::none, {0.5, 0.5}, 0.0, cfg.m_limit});
    LimitSpectrum limit_plus_like;  // the sequence that scales like eps * limit
    LimitSpectrum limit_minus_like; // the factorized sequence
    if (spectral_case == SpectralCase::critical) {
        if (!hd.nu_sq) throw numeric_error("run_study: missing nu^2 for the critical case");
        limit_plus_like = solve_limit_pencil(hd.q, *hd.nu_sq, omega, cfg.k, report.seed,
                                             cfg.eig_tol);
        for (const auto& p : limit_plus_like.pairs) {
            report.limit_plus.push_back(p.value);
            report.limit_minus.push_back(-p.value);
        }
    } else {
        const double m_s_eff = spectral_case == SpectralCase::negative ? -m_s : m_s;
        limit_plus_like =
            solve_limit_positive(hd.q, m_s_eff, omega, cfg.k, report.seed, cfg.eig_tol);
        if (hd.tilde)
            limit_minus_like = solve_limit_negative(hd.tilde->q_tilde, hd.tilde->M_S_rho_tilde,
                                                    omega, cfg.k, report.seed, cfg.eig_tol);
        if (spectral_case == SpectralCase::positive) {
            for (const auto& p : limit_plus_like.pairs) report.limit_plus.push_back(p.value);
            for (const auto& p : limit_minus_like.pairs) report.limit_minus.push_back(p.value);
            report.minus_shift = hd.local ? hd.local->lambda1_neg : 0.0;
        } else {
            // mirror of the reduced problem: original minus-sequence behaves
            // like the reduced plus-sequence with negated values
            for (const auto& p : limit_plus_like.pairs) report.limit_minus.push_back(-p.value);
            for (const auto& p : limit_minus_like.pairs) report.limit_plus.push_back(-p.value);
            report.plus_shift = hd.local ? -hd.local->lambda1_neg : 0.0;
        }
    }

    // --- epsilon sweep (parallel across levels) ---
    const int n_levels = static_cast<int>(cfg.levels.size());
    report.eps_spectra.resize(n_levels);
    std::vector<std::string> level_errors(n_levels);

    EpsilonSolveOptions eopts;
    eopts.cg_tol = std::min(cfg.cg_tol, 1e-12);
    eopts.eig_tol = cfg.eig_tol;
    eopts.seed = report.seed;
    eopts.max_dofs = cfg.max_dofs;
    eopts.sanity_positive_density = cfg.sanity_positive_density;

    auto solve_level = [&](int idx) {
        const int n = cfg.levels[idx];
        const fs::path eps_path = cache_dir / ("eps_" + std::to_string(n) + ".json");
        if (fs::exists(eps_path)) {
            try {
                std::ifstream is(eps_path);
                report.eps_spectra[idx] = detail::eps_from_json(nlohmann::json::parse(is));
                return;
            } catch (const std::exception&) {
                // fall through and recompute
            }
        }
        report.eps_spectra[idx] = solve_epsilon(cfg.geometry, EpsilonLevel(n), cfg.coefficients,
                                                cfg.density, spectral_case, cfg.k, eopts);
        std::ofstream os(eps_path);
        if (!os) throw io_error("cannot write " + eps_path.string());
        os << detail::eps_to_json(report.eps_spectra[idx]).dump() << "\n";
    };

    int pool = cfg.threads > 0 ? cfg.threads
                               : static_cast<int>(std::thread::hardware_concurrency());
    pool = std::max(1, std::min(pool, n_levels));
    if (pool == 1) {
        for (int i = 0; i < n_levels; ++i) {
            try {
                solve_level(i);
            } catch (const std::exception& e) {
                level_errors[i] = e.what();
            }
        }
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n_levels) return;
                try {
                    solve_level(i);
                } catch (const std::exception& e) {
                    level_errors[i] = e.what();
                }
            }
        };
        std::vector<std::thread> threads;
        for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (int i = 0; i < n_levels; ++i)
        if (!level_errors[i].empty())
            throw numeric_error("epsilon stage failed at n = " + std::to_string(cfg.levels[i]) +
                                ": " + level_errors[i] + " (partial results persisted in " +
                                cache_dir.string() + ")");

    // --- diagnostics and rows ---
    const std::string case_name = to_string(spectral_case);
    for (int idx = 0; idx < n_levels; ++idx) {
        const EpsilonSpectrum& s = report.eps_spectra[idx];
        const double eps = s.epsilon;
        for (int ki = 0; ki < cfg.k; ++ki) {
            if (ki < static_cast<int>(s.positives.size()) &&
                ki < static_cast<int>(report.limit_plus.size())) {
                StudyRow row;
                row.case_name = case_name;
                row.k = ki + 1;
                row.sign = '+';
                row.n = s.n;
                row.epsilon = eps;
                row.lambda_raw = s.positives[ki].lambda;
                if (spectral_case == SpectralCase::critical)
                    row.diagnostic = row.lambda_raw;
                else if (spectral_case == SpectralCase::positive)
                    row.diagnostic = row.lambda_raw / eps;
                else
                    row.diagnostic = (row.lambda_raw - report.plus_shift / eps) / eps;
                row.limit = report.limit_plus[ki];
                row.abs_gap = std::abs(row.diagnostic - row.limit);
                row.rel_gap = row.abs_gap / std::abs(row.limit);
                report.rows.push_back(row);
            }
            if (ki < static_cast<int>(s.negatives.size()) &&
                ki < static_cast<int>(report.limit_minus.size())) {
                StudyRow row;
                row.case_name = case_name;
                row.k = ki + 1;
                row.sign = '-';
                row.n = s.n;
                row.epsilon = eps;
                row.lambda_raw = s.negatives[ki].lambda;
                if (spectral_case == SpectralCase::critical)
                    row.diagnostic = row.lambda_raw;
                else if (spectral_case == SpectralCase::positive)
                    row.diagnostic = (row.lambda_raw - report.minus_shift / eps) / eps;
                else
                    row.diagnostic = row.lambda_raw / eps;
                row.limit = report.limit_minus[ki];
                row.abs_gap = std::abs(row.diagnostic - row.limit);
                row.rel_gap = row.abs_gap / std::abs(row.limit);
                report.rows.push_back(row);
            }
        }

        // corrector-expansion quality for the first eigenpair of each sequence
        LevelDiagnostics diag;
        diag.n = s.n;
        try {
            const Mesh eps_mesh = build_perforated_domain_mesh(cfg.geometry, s.n, cfg.max_dofs);
            const int cell_grid = cfg.geometry.subdivisions;
            const std::vector<EpsilonPair>& plus_like =
                spectral_case == SpectralCase::negative ? s.negatives : s.positives;
            const std::vector<EpsilonPair>& minus_like =
                spectral_case == SpectralCase::negative ? s.positives : s.negatives;
            if (!plus_like.empty() && !limit_plus_like.pairs.empty()) {
                CorrectorExpansion expansion(omega, cfg.m_limit, limit_plus_like.pairs[0].values,
                                             eps, cell, cell_grid, hd.chi1.values,
                                             hd.chi2.values);
                if (spectral_case == SpectralCase::critical && hd.chi0)
                    expansion.set_pencil_term(limit_plus_like.pairs[0].value, hd.chi0->values);
                diag.corrector_ratio_plus =
                    compare_expansion(eps_mesh, plus_like[0].values, expansion).ratio();
            }
            if (!minus_like.empty() && !limit_minus_like.pairs.empty() && hd.tilde && hd.local) {
                CorrectorExpansion expansion(omega, cfg.m_limit, limit_minus_like.pairs[0].values,
                                             eps, cell, cell_grid, hd.tilde->chi_t1.values,
                                             hd.tilde->chi_t2.values);
                expansion.set_theta_factor(hd.local->theta1_neg);
                diag.corrector_ratio_minus =
                    compare_expansion(eps_mesh, minus_like[0].values, expansion).ratio();
            }
            if (cfg.tilde_epsilon_diagnostic && hd.tilde && hd.local &&
                spectral_case != SpectralCase::critical) {
                // secondary diagnostic: the xi-problem with theta^2-weighted
                // coefficients solved directly at this epsilon
                const PointLocator cell_loc(cell, cell_grid);
                const auto& theta = hd.local->theta1_neg;
                const DensityField rho_eff = spectral_case == SpectralCase::negative
                                                 ? negated(cfg.density)
                                                 : cfg.density;
                auto a_t = [&](Vec2 x) {
                    const Vec2 y = wrap_to_cell(x, s.n);
                    const double t = cell_loc.interpolate(theta, y);
                    return (t * t) * cfg.coefficients.at(y);
                };
                auto rho_t = [&](Vec2 x) {
                    const Vec2 y = wrap_to_cell(x, s.n);
                    const double t = cell_loc.interpolate(theta, y);
                    return t * t * rho_eff.at(y);
                };
                const DofMap dm = DofMap::dirichlet_on(eps_mesh, BoundaryTag::DIRICHLET);
                const SparseSymMatrix A = reduce(assemble_stiffness(eps_mesh, a_t), dm);
                const SparseSymMatrix B =
                    reduce(assemble_boundary_mass(eps_mesh, rho_t, BoundaryTag::HOLE), dm);
                EigOptions xopts;
                xopts.k_pos = 0;
                xopts.k_neg = cfg.k;
                xopts.seed = report.seed;
                xopts.residual_tol = cfg.eig_tol;
                SpectrumSlice xi = steklov_eigs(A, B, xopts);
                for (const auto& p : xi.negatives) diag.xi_eps_over_eps.push_back(p.eigenvalue / eps);
            }
        } catch (const std::exception& e) {
            report.warnings.push_back("diagnostics at n = " + std::to_string(s.n) +
                                      " skipped: " + e.what());
        }
        report.diagnostics.push_back(std::move(diag));
    }
    return report;
}

/// CSV report, columns: case,k,sign,n,epsilon,lambda_raw,diagnostic,limit,abs_gap,rel_gap
inline void emit_csv(const StudyReport& report, std::ostream& os) {
    os << "case,k,sign,n,epsilon,lambda_raw,diagnostic,limit,abs_gap,rel_gap\n";
    for (const auto& r : report.rows)
        os << r.case_name << "," << r.k << "," << r.sign << "," << r.n << "," << fmt_g17(r.epsilon)
           << "," << fmt_g17(r.lambda_raw) << "," << fmt_g17(r.diagnostic) << ","
           << fmt_g17(r.limit) << "," << fmt_g17(r.abs_gap) << "," << fmt_g17(r.rel_gap) << "\n";
}

/// Full JSON report with provenance ("steklovstudy 1").
inline void emit_json(const StudyReport& report, std::ostream& os) {
    nlohmann::json j;
    j["format"] = "steklovstudy 1";
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["case"] = to_string(report.spectral_case);
    j["cell_mesh_checksum"] = report.cell_mesh_checksum;
    j["warnings"] = report.warnings;
    j["effective"] = {{"q", detail::tensor_to_json(report.homog.q)},
                      {"M_S_rho", report.homog.M_S_rho}};
    if (report.homog.nu_sq) j["effective"]["nu_sq"] = *report.homog.nu_sq;
    if (report.homog.local) {
        j["effective"]["lambda1_neg"] = report.homog.local->lambda1_neg;
        j["effective"]["surface_integral_rho_theta_sq"] =
            report.homog.local->surface_integral_rho_theta_sq;
    }
    if (report.homog.tilde) {
        j["effective"]["q_tilde"] = detail::tensor_to_json(report.homog.tilde->q_tilde);
        j["effective"]["M_S_rho_tilde"] = report.homog.tilde->M_S_rho_tilde;
    }
    j["limit_plus"] = report.limit_plus;
    j["limit_minus"] = report.limit_minus;
    j["minus_shift"] = report.minus_shift;
    j["plus_shift"] = report.plus_shift;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"case", r.case_name},
                        {"k", r.k},
                        {"sign", std::string(1, r.sign)},
                        {"n", r.n},
                        {"epsilon", r.epsilon},
                        {"lambda_raw", r.lambda_raw},
                        {"diagnostic", r.diagnostic},
                        {"limit", r.limit},
                        {"abs_gap", r.abs_gap},
                        {"rel_gap", r.rel_gap}});
    j["rows"] = rows;
    nlohmann::json diags = nlohmann::json::array();
    for (const auto& d : report.diagnostics) {
        nlohmann::json dj = {{"n", d.n}};
        if (d.corrector_ratio_plus) dj["corrector_ratio_plus"] = *d.corrector_ratio_plus;
        if (d.corrector_ratio_minus) dj["corrector_ratio_minus"] = *d.corrector_ratio_minus;
        if (!d.xi_eps_over_eps.empty()) dj["xi_eps_over_eps"] = d.xi_eps_over_eps;
        diags.push_back(dj);
    }
    j["diagnostics"] = diags;
    os << j.dump(1) << "\n";
}

/// Log-log SVG plot of rel_gap against epsilon, one polyline per (k, sign).
inline void emit_svg(const StudyReport& report, std::ostream& os) {
    const int width = 640, height = 480, margin = 60;
    double min_eps = 1e300, max_eps = -1e300, min_gap = 1e300, max_gap = -1e300;
    for (const auto& r : report.rows) {
        min_eps = std::min(min_eps, r.epsilon);
        max_eps = std::max(max_eps, r.epsilon);
        const double g = std::max(r.rel_gap, 1e-16);
        min_gap = std::min(min_gap, g);
        max_gap = std::max(max_gap, g);
    }
    if (report.rows.empty()) {
        min_eps = 0.01;
        max_eps = 1.0;
        min_gap = 1e-3;
        max_gap = 1.0;
    }
    if (min_eps == max_eps) max_eps = 2.0 * min_eps;
    if (min_gap == max_gap) max_gap = 10.0 * min_gap;
    auto x_of = [&](double eps) {
        return margin + (std::log(eps) - std::log(min_eps)) /
                            (std::log(max_eps) - std::log(min_eps)) * (width - 2 * margin);
    };
    auto y_of = [&](double gap) {
        gap = std::max(gap, 1e-16);
        return height - margin -
               (std::log(gap) - std::log(min_gap)) / (std::log(max_gap) - std::log(min_gap)) *
                   (height - 2 * margin);
    };
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
       << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
       << height - margin << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"" << height - margin / 4
       << "\" text-anchor=\"middle\" font-size=\"13\">epsilon (log)</text>\n";
    os << "<text x=\"" << margin / 4 << "\" y=\"" << height / 2
       << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 " << margin / 4
       << " " << height / 2 << ")\">relative gap (log)</text>\n";

    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    int series_idx = 0;
    for (int ki = 1; ki <= 16; ++ki) {
        for (char sign : {'+', '-'}) {
            std::vector<std::pair<double, double>> pts;
            for (const auto& r : report.rows)
                if (r.k == ki && r.sign == sign) pts.push_back({r.epsilon, r.rel_gap});
            if (pts.empty()) continue;
            std::sort(pts.begin(), pts.end());
            const char* color = colors[series_idx % 6];
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& [e, g] : pts) os << x_of(e) << "," << y_of(g) << " ";
            os << "\"/>\n";
            os << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 14 * series_idx
               << "\" font-size=\"11\" fill=\"" << color << "\">k=" << ki << sign << "</text>\n";
            ++series_idx;
        }
    }
    os << "</svg>\n";
}

/// Write the requested report files into out_dir; returns the paths written.
inline std::vector<std::string> emit_reports(const StudyReport& report,
                                             const std::string& out_dir,
                                             const std::vector<std::string>& formats) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory " + out_dir);
    std::vector<std::string> written;
    for (const std::string& f : formats) {
        fs::path path;
        if (f == "csv")
            path = fs::path(out_dir) / "study.csv";
        else if (f == "json")
            path = fs::path(out_dir) / "study.json";
        else if (f == "svg")
            path = fs::path(out_dir) / "study.svg";
        else
            throw config_error("unknown report format '" + f + "' (expected csv|json|svg)");
        std::ofstream os(path);
        if (!os) throw io_error("cannot write " + path.string());
        if (f == "csv")
            emit_csv(report, os);
        else if (f == "json")
            emit_json(report, os);
        else
            emit_svg(report, os);
        written.push_back(path.string());
    }
    return written;
}

} // namespace steklov
