// steklov: cell problems, effective tensors, and eigenvalue studies for
// periodic Steklov problems with sign-changing surface density on perforated
// domains.
//
// Subcommands:
//   mesh   build and dump the cell mesh and the perforated meshes
//   cell   solve the cell problems and write the homogenized data
//   limit  solve the limit spectral problems on the unit square
//   eps    solve the eps-level Steklov problem at one level
//   study  run the full convergence study and emit reports
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "steklov/study.hpp"

namespace fs = std::filesystem;
using namespace steklov;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string formats = "csv,json,svg";
    int threads = -1;
    std::uint64_t seed = 0;
    std::string case_override;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_formats) {
    cmd->add_option("--config", args.config_path, "study configuration file (JSON)")
        ->required();
    cmd->add_option("--out", args.out_dir, "output directory (defaults to the config's)");
    if (with_formats)
        cmd->add_option("--format", args.formats, "comma-separated report formats: csv,json,svg");
    cmd->add_option("--threads", args.threads, "worker pool width for the level sweep");
    cmd->add_option("--seed", args.seed, "solver seed (default: derived from the config hash)");
    cmd->add_option("--case-override", args.case_override,
                    "force the spectral case: pos|neg|crit");
}

StudyConfig load_with_overrides(const CommonArgs& args) {
    StudyConfig cfg = load_study_config(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.threads >= 0) cfg.threads = args.threads;
    if (args.seed != 0) cfg.seed = args.seed;
    if (!args.case_override.empty())
        cfg.case_override = detail::parse_case_name(args.case_override);
    return cfg;
}

std::vector<std::string> split_formats(const std::string& spec) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : spec) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int run_mesh(const CommonArgs& args, int level) {
    StudyConfig cfg = load_with_overrides(args);
    fs::create_directories(cfg.out_dir);
    const Mesh cell = build_cell_mesh(cfg.geometry);
    const fs::path cell_path = fs::path(cfg.out_dir) / "cell.mesh";
    mesh_write(cell, cell_path.string());
    std::printf("wrote %s: %d nodes, %d triangles, %d hole edges\n", cell_path.string().c_str(),
                cell.node_count(), cell.triangle_count(),
                cell.tagged_edge_count(BoundaryTag::HOLE));
    std::vector<int> levels = level > 0 ? std::vector<int>{level} : cfg.levels;
    for (int n : levels) {
        const Mesh eps = build_perforated_domain_mesh(cfg.geometry, n, cfg.max_dofs);
        const fs::path path = fs::path(cfg.out_dir) / ("eps_" + std::to_string(n) + ".mesh");
        mesh_write(eps, path.string());
        std::printf("wrote %s: %d nodes, %d triangles, %d holes\n", path.string().c_str(),
                    eps.node_count(), eps.triangle_count(), eps.hole_loop_count());
    }
    return 0;
}

int run_cell(const CommonArgs& args) {
    StudyConfig cfg = load_with_overrides(args);
    fs::create_directories(cfg.out_dir);
    const Mesh cell = build_cell_mesh(cfg.geometry);
    const double m_s = surface_average(cell, cfg.density);
    const double perimeter = cell.tagged_perimeter(BoundaryTag::HOLE);
    auto [sc, warning] = detect_case(m_s, perimeter, cfg.tol_zero, cfg.case_override);
    if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());

    CellPipelineOptions opts;
    opts.cg_tol = cfg.cg_tol;
    opts.eig_tol = cfg.eig_tol;
    opts.seed = cfg.effective_seed();
    opts.tol_zero_coeff = cfg.tol_zero;
    opts.want_tilde = !cfg.sanity_positive_density;
    const HomogenizedData hd =
        compute_homogenized_data(cell, cfg.coefficients, cfg.density, opts, sc);

    const fs::path path = fs::path(cfg.out_dir) / "homog.json";
    std::ofstream os(path);
    if (!os) throw io_error("cannot write " + path.string());
    std::ostringstream mesh_text;
    mesh_write(cell, mesh_text);
    os << homogenized_to_json(hd, detail::hex64(fnv1a64(mesh_text.str()))).dump(1) << "\n";

    std::printf("case: %s\n", to_string(hd.spectral_case));
    std::printf("M_S(rho) = %s\n", fmt_g17(hd.M_S_rho).c_str());
    std::printf("q = [[%s, %s], [%s, %s]]\n", fmt_g17(hd.q.q11).c_str(),
                fmt_g17(hd.q.q12).c_str(), fmt_g17(hd.q.q12).c_str(), fmt_g17(hd.q.q22).c_str());
    if (hd.nu_sq) std::printf("nu^2 = %s\n", fmt_g17(*hd.nu_sq).c_str());
    if (hd.local) std::printf("lambda_1^- = %s\n", fmt_g17(hd.local->lambda1_neg).c_str());
    if (hd.tilde) {
        std::printf("q~ = [[%s, %s], [%s, %s]]\n", fmt_g17(hd.tilde->q_tilde.q11).c_str(),
                    fmt_g17(hd.tilde->q_tilde.q12).c_str(), fmt_g17(hd.tilde->q_tilde.q12).c_str(),
                    fmt_g17(hd.tilde->q_tilde.q22).c_str());
        std::printf("M_S(rho~) = %s\n", fmt_g17(hd.tilde->M_S_rho_tilde).c_str());
    }
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

int run_limit(const CommonArgs& args) {
    StudyConfig cfg = load_with_overrides(args);
    const Mesh cell = build_cell_mesh(cfg.geometry);
    const double m_s = surface_average(cell, cfg.density);
    const double perimeter = cell.tagged_perimeter(BoundaryTag::HOLE);
    auto [sc, warning] = detect_case(m_s, perimeter, cfg.tol_zero, cfg.case_override);
    if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());

    CellPipelineOptions opts;
    opts.cg_tol = cfg.cg_tol;
    opts.eig_tol = cfg.eig_tol;
    opts.seed = cfg.effective_seed();
    opts.tol_zero_coeff = cfg.tol_zero;
    const HomogenizedData hd =
        compute_homogenized_data(cell, cfg.coefficients, cfg.density, opts, sc);
    const Mesh omega = build_cell_mesh({HoleKind::none, {0.5, 0.5}, 0.0, cfg.m_limit});

    nlohmann::json j;
    j["format"] = "limitspectrum 1";
    j["case"] = to_string(sc);
    if (sc == SpectralCase::critical) {
        LimitSpectrum pencil =
            solve_limit_pencil(hd.q, *hd.nu_sq, omega, cfg.k, cfg.effective_seed(), cfg.eig_tol);
        nlohmann::json pos = nlohmann::json::array();
        nlohmann::json neg = nlohmann::json::array();
        for (const auto& p : pencil.pairs) {
            pos.push_back(p.value);
            neg.push_back(-p.value);
        }
        j["lambda_plus"] = pos;
        j["lambda_minus"] = neg;
    } else {
        const double m_s_eff = sc == SpectralCase::negative ? -m_s : m_s;
        LimitSpectrum plus =
            solve_limit_positive(hd.q, m_s_eff, omega, cfg.k, cfg.effective_seed(), cfg.eig_tol);
        nlohmann::json vals = nlohmann::json::array();
        for (const auto& p : plus.pairs) vals.push_back(p.value);
        j[sc == SpectralCase::negative ? "limit_reduced_plus" : "lambda_plus"] = vals;
        if (hd.tilde) {
            LimitSpectrum minus = solve_limit_negative(hd.tilde->q_tilde, hd.tilde->M_S_rho_tilde,
                                                       omega, cfg.k, cfg.effective_seed(),
                                                       cfg.eig_tol);
            nlohmann::json negv = nlohmann::json::array();
            for (const auto& p : minus.pairs) negv.push_back(p.value);
            j["xi_minus"] = negv;
        }
    }
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / "limit.json";
    std::ofstream os(path);
    if (!os) throw io_error("cannot write " + path.string());
    os << j.dump(1) << "\n";
    std::printf("wrote %s\n", path.string().c_str());
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

int run_eps(const CommonArgs& args, int level, bool with_vectors) {
    StudyConfig cfg = load_with_overrides(args);
    if (level < 2) throw config_error("eps requires --level n with n >= 2");
    const Mesh cell = build_cell_mesh(cfg.geometry);
    const double m_s = surface_average(cell, cfg.density);
    const double perimeter = cell.tagged_perimeter(BoundaryTag::HOLE);
    auto [sc, warning] = detect_case(m_s, perimeter, cfg.tol_zero, cfg.case_override);
    if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());

    EpsilonSolveOptions opts;
    opts.cg_tol = std::min(cfg.cg_tol, 1e-12);
    opts.eig_tol = cfg.eig_tol;
    opts.seed = cfg.effective_seed();
    opts.max_dofs = cfg.max_dofs;
    opts.sanity_positive_density = cfg.sanity_positive_density;
    EpsilonSpectrum s = solve_epsilon(cfg.geometry, EpsilonLevel(level), cfg.coefficients,
                                      cfg.density, sc, cfg.k, opts);

    nlohmann::json j = detail::eps_to_json(s);
    if (!with_vectors) {
        for (auto* key : {"positives", "negatives"})
            for (auto& p : j.at(key)) p.erase("values");
    }
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / ("eps_" + std::to_string(level) + ".json");
    std::ofstream os(path);
    if (!os) throw io_error("cannot write " + path.string());
    os << j.dump(1) << "\n";
    for (const auto& p : s.positives) std::printf("lambda+ %s\n", fmt_g17(p.lambda).c_str());
    for (const auto& p : s.negatives) std::printf("lambda- %s\n", fmt_g17(p.lambda).c_str());
    for (const auto& w : s.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

int run_study_cmd(const CommonArgs& args) {
    StudyConfig cfg = load_with_overrides(args);
    StudyReport report = run_study(cfg);
    const auto written = emit_reports(report, cfg.out_dir, split_formats(args.formats));
    for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    for (const auto& p : written) std::printf("wrote %s\n", p.c_str());
    std::printf("case: %s, %zu rows\n", to_string(report.spectral_case), report.rows.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Steklov spectral homogenization toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    int level = 0;
    bool with_vectors = false;

    CLI::App* mesh_cmd = app.add_subcommand("mesh", "build and dump meshes");
    add_common(mesh_cmd, args, false);
    mesh_cmd->add_option("--level", level, "single tiling level n (default: all config levels)");

    CLI::App* cell_cmd = app.add_subcommand("cell", "correctors and effective data");
    add_common(cell_cmd, args, false);

    CLI::App* limit_cmd = app.add_subcommand("limit", "limit spectra");
    add_common(limit_cmd, args, false);

    CLI::App* eps_cmd = app.add_subcommand("eps", "single epsilon-level solve");
    add_common(eps_cmd, args, false);
    eps_cmd->add_option("--level", level, "tiling level n (epsilon = 1/n)")->required();
    eps_cmd->add_flag("--vectors", with_vectors, "include eigenvectors in the output");

    CLI::App* study_cmd = app.add_subcommand("study", "full convergence study");
    add_common(study_cmd, args, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (mesh_cmd->parsed()) return run_mesh(args, level);
        if (cell_cmd->parsed()) return run_cell(args);
        if (limit_cmd->parsed()) return run_limit(args);
        if (eps_cmd->parsed()) return run_eps(args, level, with_vectors);
        if (study_cmd->parsed()) return run_study_cmd(args);
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}
