#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "pbda/errors.hpp"
#include "pbda/experiment.hpp"

using namespace pbda;

namespace {

int count_lines(const std::string& text) {
    return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

int count_commas(const std::string& line) {
    return static_cast<int>(std::count(line.begin(), line.end(), ','));
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// Small, fast, fully synthetic config exercising two tasks and two seeds.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.tasks.resize(2);
    cfg.tasks[0].name = "near";
    cfg.tasks[0].synthetic.per_class_n = 20;
    cfg.tasks[0].synthetic.seed = 1;
    cfg.tasks[1].name = "tilt";
    cfg.tasks[1].synthetic.per_class_n = 20;
    cfg.tasks[1].synthetic.seed = 2;
    cfg.tasks[1].synthetic.shift.kind = ShiftSpec::Kind::rotate;
    cfg.tasks[1].synthetic.shift.angle_deg = 35.0;
    cfg.trainer.lr_schedule = {{1e-2, 25}, {1e-3, 10}};
    cfg.bounds = {BoundKind::baseline_independent};
    cfg.seeds = {1, 2};
    cfg.k = 4;
    return cfg;
}

}  // namespace

TEST_CASE("spearman closed forms") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    // tied pair on each side: ((1,1,2),(3,5,4)) has rho exactly 0
    CHECK(spearman({1, 1, 2}, {3, 5, 4}) == doctest::Approx(0.0).epsilon(1e-12));
    // rank correlation only sees order: any monotone transform is invisible
    CHECK(spearman({1, 5, 9, 14}, {std::exp(1.0), std::exp(5.0), std::exp(9.0), std::exp(14.0)}) ==
          doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2}), std::invalid_argument);  // too few points
    CHECK_THROWS_AS(spearman({2, 2, 2}, {1, 2, 3}), std::invalid_argument);  // constant side
}

TEST_CASE("bound kind names are a bijection") {
    const BoundKind kinds[] = {BoundKind::baseline_independent, BoundKind::baseline_dependent,
                               BoundKind::flatness, BoundKind::restricted_pair,
                               BoundKind::restricted_anchored};
    for (const auto k : kinds) CHECK(bound_kind_from_name(bound_kind_name(k)) == k);
    CHECK_THROWS_AS(bound_kind_from_name("no-such-bound"), std::invalid_argument);
}

TEST_CASE("config round-trips through json") {
    auto cfg = tiny_config();
    cfg.architecture = Architecture::mlp(2, {8}, 3);
    cfg.strict_delta = true;
    cfg.assumed_adaptability = 0.07;
    cfg.jobs = 3;
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(back.tasks.size() == 2);
    CHECK(back.tasks[1].name == "tilt");
    CHECK(back.tasks[1].synthetic.shift.kind == ShiftSpec::Kind::rotate);
    CHECK(back.tasks[1].synthetic.shift.angle_deg == 35.0);
    CHECK(back.architecture == cfg.architecture);
    CHECK(back.trainer.lr_schedule == cfg.trainer.lr_schedule);
    CHECK(back.bounds == cfg.bounds);
    CHECK(back.seeds == cfg.seeds);
    CHECK(back.k == 4);
    CHECK(back.strict_delta);
    CHECK(back.assumed_adaptability.has_value());
    CHECK(*back.assumed_adaptability == 0.07);
    CHECK(back.jobs == 3);
}

TEST_CASE("config hash is stable and content-sensitive") {
    const auto cfg = tiny_config();
    const auto h1 = config_hash(cfg);
    const auto h2 = config_hash(tiny_config());
    CHECK(h1 == h2);
    CHECK(h1.size() == 16);  // 64-bit hex
    auto changed = tiny_config();
    changed.delta = 0.1;
    CHECK(config_hash(changed) != h1);
}

TEST_CASE("config validation catches malformed experiments") {
    auto cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.tasks.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.tasks[1].name = "near";  // duplicate
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.delta = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.seeds.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.prior_sigma = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = tiny_config();
    cfg.jobs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config parser rejects malformed json with context") {
    CHECK_THROWS_AS(config_from_json("{ nope"), ParseError);
    CHECK_THROWS_AS(config_from_json("{\"tasks\": 7}"), ParseError);
}

TEST_CASE("format_double survives a parse round trip") {
    for (double v : {0.1 + 0.2, 1.0 / 3.0, 1e-300, -0.0, 12345.6789}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    // byte-stable
    CHECK(format_double(1.0 / 3.0) == format_double(1.0 / 3.0));
}

TEST_CASE("trimmed view drops the top tail only when it can afford to") {
    BoundsSuiteResult result;
    for (int i = 0; i < 40; ++i) {
        BoundCell cell;
        cell.task = "t";
        cell.seed = static_cast<std::uint64_t>(i);
        cell.report.total = static_cast<double>(i);
        result.cells.push_back(cell);
    }
    const auto view = trimmed_view(result);
    CHECK(view.size() == 38);  // floor(0.05 * 40) = 2 dropped
    for (const auto* cell : view) CHECK(cell->report.total < 38.0);

    BoundsSuiteResult small;
    for (int i = 0; i < 19; ++i) {
        BoundCell cell;
        cell.report.total = static_cast<double>(i);
        small.cells.push_back(cell);
    }
    CHECK(trimmed_view(small).size() == 19);  // floor(0.95) = 0 dropped

    // failed cells never enter the view
    BoundsSuiteResult mixed = small;
    mixed.cells[3].status = "error: synthetic failure";
    CHECK(trimmed_view(mixed).size() == 18);
}

TEST_CASE("bounds suite writes one report per cell and a stable summary") {
    const auto dir = std::filesystem::temp_directory_path() / "pbda_suite_test";
    std::filesystem::remove_all(dir);
    auto cfg = tiny_config();

    const auto result = run_bounds_suite(cfg, dir.string());
    REQUIRE(result.cells.size() == 4);  // 2 tasks x 1 kind x 2 seeds
    for (const auto& cell : result.cells) {
        CHECK(cell.status == "ok");
        CHECK(cell.labeled);
        CHECK(cell.report.total > 0.0);
    }
    int reports = 0;
    for ([[maybe_unused]] const auto& entry :
         std::filesystem::directory_iterator(dir / "reports"))
        ++reports;
    CHECK(reports == 4);

    // cells arrive in fixed (task, kind, seed) order regardless of scheduling
    CHECK(result.cells[0].task == "near");
    CHECK(result.cells[0].seed == 1);
    CHECK(result.cells[1].task == "near");
    CHECK(result.cells[1].seed == 2);
    CHECK(result.cells[2].task == "tilt");

    // a parallel run reduces to the identical summary
    auto cfg2 = tiny_config();
    cfg2.jobs = 2;
    const auto result2 = run_bounds_suite(cfg2, "");
    CHECK(bounds_summary_csv(result) == bounds_summary_csv(result2));

    std::filesystem::remove_all(dir);
}

TEST_CASE("bounds suite turns broken cells into status rows") {
    auto cfg = tiny_config();
    cfg.tasks[1].kind = TaskSpec::Kind::csv;
    cfg.tasks[1].source_csv = "/nonexistent/source.csv";
    cfg.tasks[1].target_csv = "/nonexistent/target.csv";
    const auto result = run_bounds_suite(cfg, "");
    REQUIRE(result.cells.size() == 4);
    int ok = 0, failed = 0;
    for (const auto& cell : result.cells) {
        if (cell.status == "ok") {
            ++ok;
        } else {
            ++failed;
            CHECK(!cell.status.empty());  // carries the failure message
        }
    }
    CHECK(ok == 2);
    CHECK(failed == 2);
    // failed rows appear in the summary with empty numeric columns
    const auto csv = bounds_summary_csv(result);
    const auto lines = split_lines(csv);
    const int header_commas = count_commas(lines[0]);
    for (const auto& line : lines) CHECK(count_commas(line) == header_commas);
}

TEST_CASE("summary csv shapes") {
    auto cfg = tiny_config();
    const auto result = run_bounds_suite(cfg, "");
    const auto csv = bounds_summary_csv(result);
    const auto lines = split_lines(csv);
    REQUIRE(lines.size() >= 2);
    CHECK(lines[0].rfind("task,", 0) == 0);
    CHECK(count_lines(csv) == 1 + 4);  // header + one row per cell

    const auto ranking = run_ranking_suite(cfg);
    REQUIRE(ranking.cells.size() == 4);  // 2 tasks x 2 seeds
    const auto rcsv = ranking_summary_csv(ranking);
    const auto rlines = split_lines(rcsv);
    CHECK(rlines[0].rfind("task,", 0) == 0);
    const int rc = count_commas(rlines[0]);
    for (const auto& line : rlines) CHECK(count_commas(line) == rc);
    // footer row carries the summary statistics
    CHECK(rlines.back().find("spearman") != std::string::npos);
}

TEST_CASE("ranking suite demands labeled targets") {
    auto cfg = tiny_config();
    cfg.research_mode = false;
    CHECK_THROWS_AS(run_ranking_suite(cfg), std::invalid_argument);
}

TEST_CASE("atomic write lands the full content and creates directories") {
    const auto dir = std::filesystem::temp_directory_path() / "pbda_atomic_test" / "deep" / "er";
    std::filesystem::remove_all(std::filesystem::temp_directory_path() / "pbda_atomic_test");
    const auto path = dir / "x.txt";
    write_file_atomic(path.string(), "alpha\nbeta\n");
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == "alpha\nbeta\n");
    // overwrite is atomic too
    write_file_atomic(path.string(), "gamma");
    std::ifstream in2(path);
    std::stringstream buf2;
    buf2 << in2.rdbuf();
    CHECK(buf2.str() == "gamma");
    std::filesystem::remove_all(std::filesystem::temp_directory_path() / "pbda_atomic_test");
}

TEST_CASE("report json carries the config hash and the term breakdown") {
    auto cfg = tiny_config();
    cfg.tasks.resize(1);
    cfg.seeds = {1};
    const auto result = run_bounds_suite(cfg, "");
    REQUIRE(result.cells.size() == 1);
    const auto text = bound_report_to_json(result.cells[0], config_hash(cfg));
    CHECK(text.find(config_hash(cfg)) != std::string::npos);
    CHECK(text.find("\"terms\"") != std::string::npos);
    CHECK(text.find("\"total\"") != std::string::npos);
    CHECK(text.find("\"violated\"") != std::string::npos);
}
