#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "steklov/study.hpp"

using namespace steklov;
namespace fs = std::filesystem;

namespace {

std::string small_config(const std::string& density, const std::string& out_dir,
                         const std::string& extra = "") {
    return std::string("{\n"
                       "  \"geometry\": {\"hole\": \"square\", \"center\": [0.5, 0.5], "
                       "\"size\": 0.5, \"subdivisions\": 8},\n"
                       "  \"coefficients\": {\"preset\": \"identity\"},\n"
                       "  \"density\": ") +
           density +
           ",\n"
           "  \"levels\": [2, 4],\n"
           "  \"k\": 1,\n"
           "  \"m_limit\": 16,\n"
           "  \"out\": \"" +
           out_dir + "\"" + extra + "\n}\n";
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("config parsing and validation") {
    StudyConfig cfg = parse_study_config(small_config("{\"preset\": \"rho-odd\"}", "out"));
    CHECK(cfg.geometry.hole_kind == HoleKind::square);
    CHECK(cfg.levels == std::vector<int>{2, 4});
    CHECK(cfg.k == 1);
    CHECK(cfg.m_limit == 16);
    CHECK(cfg.config_hash() != 0);

    // expression-based coefficients
    StudyConfig cfg2 = parse_study_config(
        "{\"geometry\": {\"hole\": \"square\", \"size\": 0.5, \"subdivisions\": 8},"
        "\"coefficients\": {\"a11\": \"2 + sin(2*pi*y1)\", \"a12\": \"0\", \"a22\": \"2\"},"
        "\"density\": {\"rho\": \"sin(2*pi*y1)\"}}");
    CHECK(cfg2.coefficients.at({0.25, 0.0}).a11 == doctest::Approx(3.0));

    // malformed JSON
    CHECK_THROWS_AS(parse_study_config("{oops"), config_error);
    // empty levels
    CHECK_THROWS_AS(
        parse_study_config(
            "{\"density\": {\"preset\": \"rho-odd\"}, \"levels\": []}"),
        config_error);
    // descending levels
    CHECK_THROWS_AS(
        parse_study_config("{\"density\": {\"preset\": \"rho-odd\"}, \"levels\": [4, 2]}"),
        config_error);
    // non-periodic density expression
    CHECK_THROWS_AS(parse_study_config("{\"density\": {\"rho\": \"y1\"}}"), config_error);
    // non-elliptic coefficients
    CHECK_THROWS_AS(
        parse_study_config("{\"coefficients\": {\"a11\": \"sin(2*pi*y1)\", \"a12\": \"0\", "
                           "\"a22\": \"1\"}, \"density\": {\"preset\": \"rho-odd\"}}"),
        config_error);
    // missing density
    CHECK_THROWS_AS(parse_study_config("{}"), config_error);
}

TEST_CASE("detect_case thresholds and override") {
    CHECK(detect_case(2.0, 2.0, 1e-10, {}).first == SpectralCase::positive);
    CHECK(detect_case(-0.3, 2.0, 1e-10, {}).first == SpectralCase::negative);
    CHECK(detect_case(3e-13, 2.0, 1e-10, {}).first == SpectralCase::critical);
    auto [c, warn] = detect_case(2.0, 2.0, 1e-10, SpectralCase::critical);
    CHECK(c == SpectralCase::critical);
    CHECK_FALSE(warn.empty());
}

TEST_CASE("study end-to-end: positive fixture, determinism, caching") {
    TempDir tmp("steklov_study_pos");
    StudyConfig cfg = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp.path.string()));

    StudyReport report = run_study(cfg);
    CHECK(report.spectral_case == SpectralCase::positive);
    REQUIRE_FALSE(report.rows.empty());
    // rows cover both signs at both levels
    int plus_rows = 0, minus_rows = 0;
    for (const auto& r : report.rows) {
        CHECK(r.case_name == "positive");
        (r.sign == '+' ? plus_rows : minus_rows)++;
        // gap fields recomputable from raw fields
        CHECK(r.abs_gap == doctest::Approx(std::abs(r.diagnostic - r.limit)));
        CHECK(r.rel_gap == doctest::Approx(r.abs_gap / std::abs(r.limit)));
        if (r.sign == '+')
            CHECK(r.diagnostic == doctest::Approx(r.lambda_raw / r.epsilon));
        else
            CHECK(r.diagnostic ==
                  doctest::Approx((r.lambda_raw - report.minus_shift / r.epsilon) / r.epsilon));
    }
    CHECK(plus_rows == 2);
    CHECK(minus_rows == 2);

    std::ostringstream csv1;
    emit_csv(report, csv1);
    CHECK(csv1.str().rfind("case,k,sign,n,epsilon,lambda_raw,diagnostic,limit,abs_gap,rel_gap",
                           0) == 0);

    // deterministic re-run from cache
    StudyReport report2 = run_study(cfg);
    std::ostringstream csv2;
    emit_csv(report2, csv2);
    CHECK(csv1.str() == csv2.str());

    // deleting the cache and recomputing yields identical bytes
    fs::remove_all(tmp.path / "cache");
    StudyReport report3 = run_study(cfg);
    std::ostringstream csv3;
    emit_csv(report3, csv3);
    CHECK(csv1.str() == csv3.str());

    // corrector diagnostics present for both sequences
    REQUIRE_FALSE(report.diagnostics.empty());
    CHECK(report.diagnostics.back().corrector_ratio_plus.has_value());
    CHECK(report.diagnostics.back().corrector_ratio_minus.has_value());
}

TEST_CASE("study end-to-end: critical fixture") {
    TempDir tmp("steklov_study_crit");
    StudyConfig cfg =
        parse_study_config(small_config("{\"preset\": \"rho-odd\"}", tmp.path.string()));
    StudyReport report = run_study(cfg);
    CHECK(report.spectral_case == SpectralCase::critical);
    REQUIRE(report.limit_plus.size() == 1);
    REQUIRE(report.limit_minus.size() == 1);
    CHECK(report.limit_plus[0] == -report.limit_minus[0]); // exact pencil symmetry
    for (const auto& r : report.rows) {
        CHECK(r.diagnostic == r.lambda_raw); // no eps factor in the critical case
        CHECK(std::abs(r.limit) == report.limit_plus[0]);
    }
    // this fixture carries an exact discrete point symmetry (180-degree
    // rotation maps rho to -rho on the same triangulation), so the eps-level
    // sequences pair up tightly, not just in the limit
    for (const auto& s : report.eps_spectra) {
        REQUIRE_FALSE(s.positives.empty());
        REQUIRE_FALSE(s.negatives.empty());
        CHECK(std::abs(s.positives[0].lambda + s.negatives[0].lambda) <=
              1e-9 * s.positives[0].lambda);
    }
}

TEST_CASE("report files: csv bytes, json schema, svg polylines") {
    TempDir tmp("steklov_study_files");
    StudyConfig cfg = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp.path.string()));
    StudyReport report = run_study(cfg);
    auto written = emit_reports(report, cfg.out_dir, {"csv", "json", "svg"});
    REQUIRE(written.size() == 3);

    const std::string csv = read_file(written[0]);
    // header + 1 line per row
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(report.rows.size()));

    nlohmann::json j = nlohmann::json::parse(read_file(written[1]));
    CHECK(j.at("format") == "steklovstudy 1");
    CHECK(j.at("rows").size() == report.rows.size());
    CHECK(j.at("effective").contains("q"));
    CHECK(j.at("effective").contains("lambda1_neg"));
    CHECK(j.at("config_hash") == report.config_hash);

    const std::string svg = read_file(written[2]);
    // one polyline per (k, sign) series: k=1 with both signs
    std::size_t count = 0, pos = 0;
    while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
        ++count;
        pos += 9;
    }
    CHECK(count == 2);

    CHECK_THROWS_AS(emit_reports(report, cfg.out_dir, {"bogus"}), config_error);
}

TEST_CASE("homogdata json round-trips") {
    Mesh cell = build_cell_mesh({HoleKind::square, {0.5, 0.5}, 0.5, 8});
    CoefficientTensor a = coefficient_preset("identity");
    HomogenizedData hd = compute_homogenized_data(cell, a, density_preset("rho-shifted", 0.5));
    nlohmann::json j = homogenized_to_json(hd, "deadbeef");
    CHECK(j.at("format") == "homogdata 1");
    HomogenizedData back = homogenized_from_json(j, "deadbeef");
    CHECK(back.q.q11 == hd.q.q11);
    CHECK(back.M_S_rho == hd.M_S_rho);
    REQUIRE(back.local.has_value());
    CHECK(back.local->lambda1_neg == hd.local->lambda1_neg);
    REQUIRE(back.tilde.has_value());
    CHECK(back.tilde->q_tilde.q11 == hd.tilde->q_tilde.q11);
    CHECK(back.chi1.values == hd.chi1.values);
    CHECK_THROWS_AS(homogenized_from_json(j, "wrongsum"), io_error);
}

TEST_CASE("epsilon gap shrinks from n=2 to n=4 for the first positive pair") {
    TempDir tmp("steklov_study_gap");
    StudyConfig cfg = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp.path.string()));
    StudyReport report = run_study(cfg);
    double gap2 = -1.0, gap4 = -1.0;
    for (const auto& r : report.rows) {
        if (r.k == 1 && r.sign == '+' && r.n == 2) gap2 = r.abs_gap;
        if (r.k == 1 && r.sign == '+' && r.n == 4) gap4 = r.abs_gap;
    }
    REQUIRE(gap2 > 0.0);
    REQUIRE(gap4 > 0.0);
    CHECK(gap4 < gap2);
}

TEST_CASE("worker pool width does not change the report bytes") {
    TempDir tmp1("steklov_study_t1");
    TempDir tmp2("steklov_study_t2");
    StudyConfig cfg1 = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp1.path.string()));
    StudyConfig cfg2 = cfg1;
    cfg2.out_dir = tmp2.path.string();
    cfg1.threads = 1;
    cfg2.threads = 2;
    // identical raw text => identical hash/seed; only the pool width differs
    cfg2.raw_text = cfg1.raw_text;
    std::ostringstream a, b;
    emit_csv(run_study(cfg1), a);
    emit_csv(run_study(cfg2), b);
    CHECK(a.str() == b.str());
}

TEST_CASE("secondary tilde-pencil diagnostic approaches the negative limit") {
    TempDir tmp("steklov_study_xi");
    StudyConfig cfg = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp.path.string(),
                     ",\n  \"tilde_epsilon_diagnostic\": true"));
    StudyReport report = run_study(cfg);
    REQUIRE(report.limit_minus.size() == 1);
    const double xi0 = report.limit_minus[0];
    REQUIRE(report.diagnostics.size() == 2);
    for (const auto& d : report.diagnostics) {
        REQUIRE_FALSE(d.xi_eps_over_eps.empty());
        CHECK(d.xi_eps_over_eps[0] < 0.0);
    }
    // the n=4 value sits within 60% of the limit and improves on n=2
    const double e2 = std::abs(report.diagnostics[0].xi_eps_over_eps[0] - xi0);
    const double e4 = std::abs(report.diagnostics[1].xi_eps_over_eps[0] - xi0);
    CHECK(e4 <= 0.6 * std::abs(xi0));
    CHECK(e4 < e2);
}

TEST_CASE("stage failure aborts with a tagged error and persists partial results") {
    TempDir tmp("steklov_study_partial");
    StudyConfig cfg = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp.path.string(),
                     ",\n  \"max_dofs\": 400")); // n=2 fits, n=4 exceeds the budget
    try {
        run_study(cfg);
        FAIL("expected the epsilon stage to fail");
    } catch (const numeric_error& e) {
        const std::string what = e.what();
        CHECK(what.find("epsilon stage failed at n = 4") != std::string::npos);
    }
    // the completed level was cached before the abort
    const fs::path cache = tmp.path / "cache" / detail::hex64(cfg.cache_hash());
    CHECK(fs::exists(cache / "eps_2.json"));
    CHECK(fs::exists(cache / "homog.json"));
    CHECK_FALSE(fs::exists(cache / "eps_4.json"));
}

TEST_CASE("relative gaps are monotone nonincreasing with 1.1 slack") {
    TempDir tmp("steklov_study_mono");
    std::string text = std::string("{\n"
                                   "  \"geometry\": {\"hole\": \"square\", \"size\": 0.5, "
                                   "\"subdivisions\": 8},\n"
                                   "  \"coefficients\": {\"preset\": \"identity\"},\n"
                                   "  \"density\": {\"preset\": \"rho-shifted\", \"c\": 0.5},\n"
                                   "  \"levels\": [2, 4, 8],\n"
                                   "  \"k\": 2,\n"
                                   "  \"m_limit\": 32,\n"
                                   "  \"out\": \"") +
                       tmp.path.string() + "\"\n}\n";
    StudyReport report = run_study(parse_study_config(text));
    for (int ki = 1; ki <= 2; ++ki) {
        for (char sign : {'+', '-'}) {
            std::vector<double> gaps;
            for (const auto& r : report.rows)
                if (r.k == ki && r.sign == sign) gaps.push_back(r.rel_gap);
            REQUIRE(gaps.size() == 3);
            for (std::size_t i = 1; i < gaps.size(); ++i) CHECK(gaps[i] <= 1.1 * gaps[i - 1]);
        }
    }
}

TEST_CASE("seed and case overrides get their own cache entries") {
    TempDir tmp("steklov_study_cache_key");
    StudyConfig cfg = parse_study_config(
        small_config("{\"preset\": \"rho-shifted\", \"c\": 0.5}", tmp.path.string()));
    run_study(cfg);
    StudyConfig reseeded = cfg;
    reseeded.seed = 42; // as a CLI --seed override: raw_text unchanged
    CHECK(reseeded.cache_hash() != cfg.cache_hash());
    run_study(reseeded);
    int cache_dirs = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(tmp.path / "cache"))
        ++cache_dirs;
    CHECK(cache_dirs == 2);

    StudyConfig forced = cfg;
    forced.case_override = SpectralCase::positive;
    CHECK(forced.cache_hash() != cfg.cache_hash());
}

TEST_CASE("sanity mode: study with rho = 1 has only a positive sequence") {
    TempDir tmp("steklov_study_sanity");
    StudyConfig cfg = parse_study_config(small_config(
        "{\"preset\": \"rho-one\"}", tmp.path.string(), ",\n  \"sanity_positive_density\": true"));
    StudyReport report = run_study(cfg);
    CHECK(report.spectral_case == SpectralCase::positive);
    for (const auto& r : report.rows) CHECK(r.sign == '+');
    bool warned = false;
    for (const auto& s : report.eps_spectra)
        for (const auto& w : s.warnings)
            if (w.find("no negative spectrum") != std::string::npos) warned = true;
    CHECK(warned);
}
