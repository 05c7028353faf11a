#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "pbda/dataset.hpp"
#include "pbda/errors.hpp"
#include "pbda/model.hpp"

using namespace pbda;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

LabeledSample tiny_sample() {
    Eigen::MatrixXd X(4, 2);
    X << 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0;
    return make_labeled(X, {0, 1, 2, 1}, 3, "tiny");
}

}  // namespace

TEST_CASE("make_labeled validates inputs") {
    Eigen::MatrixXd X(2, 2);
    X << 0.0, 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(make_labeled(X, {0}, 2), std::invalid_argument);           // label count
    CHECK_THROWS_AS(make_labeled(X, {0, 2}, 2), std::invalid_argument);        // label range
    CHECK_THROWS_AS(make_labeled(X, {0, -1}, 2), std::invalid_argument);       // negative label
    CHECK_THROWS_AS(make_labeled(Eigen::MatrixXd(0, 2), {}, 2), std::invalid_argument);
    Eigen::MatrixXd bad = X;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(make_labeled(bad, {0, 1}, 2), std::invalid_argument);
    CHECK_NOTHROW(make_labeled(X, {0, 1}, 2));
}

TEST_CASE("csv round trip preserves features and labels") {
    const auto s = tiny_sample();
    const auto path = temp_path("pbda_roundtrip.csv");
    save_csv(s, path, "label");
    const auto back = load_labeled_csv(path, "label");
    CHECK(back.class_count == 3);
    CHECK(back.labels == s.labels);
    CHECK(back.features.rows() == s.features.rows());
    CHECK((back.features - s.features).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    std::filesystem::remove(path);
}

TEST_CASE("csv parser reports row and column context") {
    const auto path = temp_path("pbda_badcell.csv");
    write_text(path, "x0,x1,label\n1.0,2.0,0\n1.0,oops,1\n");
    try {
        load_labeled_csv(path, "label");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":3") != std::string::npos);    // 1-based line of the bad row
        CHECK(msg.find("x1") != std::string::npos);    // offending column name
    }
    std::filesystem::remove(path);
}

TEST_CASE("csv labels must form a gap-free set") {
    const auto path = temp_path("pbda_gap.csv");
    write_text(path, "x0,label\n1.0,0\n2.0,2\n");
    CHECK_THROWS_AS(load_labeled_csv(path, "label"), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("csv without the label column loads as unlabeled") {
    const auto path = temp_path("pbda_unlabeled.csv");
    write_text(path, "x0,x1\n1.0,2.0\n3.0,4.0\n");
    const auto u = load_unlabeled_csv(path);
    CHECK(u.size() == 2);
    CHECK(u.dim() == 2);
    CHECK(u.features(1, 1) == doctest::Approx(4.0));
    std::filesystem::remove(path);
}

TEST_CASE("missing label column is an error") {
    const auto path = temp_path("pbda_nolabel.csv");
    write_text(path, "x0,x1\n1.0,2.0\n");
    CHECK_THROWS_AS(load_labeled_csv(path, "label"), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("random_split sizes follow round(fraction * n)") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(101, 2);
    std::vector<int> y(101, 0);
    const auto s = make_labeled(X, y, 2, "split");
    const auto [train, hold] = random_split(s, 0.8, 7);
    CHECK(train.size() == 81);
    CHECK(hold.size() == 20);
    CHECK_THROWS_AS(random_split(s, 0.0, 7), std::invalid_argument);  // empty part
    CHECK_THROWS_AS(random_split(s, 1.0, 7), std::invalid_argument);
}

TEST_CASE("random_split partitions the rows") {
    Eigen::MatrixXd X(6, 1);
    X << 0, 1, 2, 3, 4, 5;
    const auto s = make_labeled(X, {0, 0, 0, 1, 1, 1}, 2, "part");
    const auto [a, b] = random_split(s, 0.5, 3);
    std::multiset<double> seen;
    for (Eigen::Index i = 0; i < a.features.rows(); ++i) seen.insert(a.features(i, 0));
    for (Eigen::Index i = 0; i < b.features.rows(); ++i) seen.insert(b.features(i, 0));
    CHECK(seen == std::multiset<double>{0, 1, 2, 3, 4, 5});

    const auto [a2, b2] = random_split(s, 0.5, 3);
    CHECK((a2.features - a.features).cwiseAbs().maxCoeff() == 0.0);  // deterministic per seed
}

TEST_CASE("synthetic task shapes and provenance ids") {
    SyntheticSpec spec;
    spec.class_count = 3;
    spec.dim = 2;
    spec.per_class_n = 20;
    spec.seed = 11;
    spec.name = "blob";
    const auto task = make_synthetic_task(spec);
    CHECK(task.source.size() == 60);
    CHECK(task.source.dim() == 2);
    CHECK(task.target_features.size() == 60);
    CHECK(task.source.id == "blob:source");
    CHECK(task.target_features.id == "blob:target");
    REQUIRE(task.target_labels.has_value());
    CHECK(task.labeled_target().size() == 60);
    // balanced class counts
    for (int c = 0; c < 3; ++c)
        CHECK(std::count(task.source.labels.begin(), task.source.labels.end(), c) == 20);
}

TEST_CASE("shift kind none redraws rather than copies") {
    SyntheticSpec spec;
    spec.per_class_n = 15;
    spec.seed = 3;
    const auto task = make_synthetic_task(spec);
    CHECK((task.source.features - task.target_features.features).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("rotation preserves labels and point norms") {
    SyntheticSpec spec;
    spec.per_class_n = 15;
    spec.seed = 5;
    spec.shift.kind = ShiftSpec::Kind::rotate;
    spec.shift.angle_deg = 40.0;
    const auto task = make_synthetic_task(spec);
    CHECK(*task.target_labels == task.source.labels);
    for (Eigen::Index i = 0; i < task.source.size(); ++i) {
        CHECK(task.source.features.row(i).norm() ==
              doctest::Approx(task.target_features.features.row(i).norm()).epsilon(1e-9));
    }
    CHECK(shift_to_string(spec.shift) == "rotate(40deg)");
}

TEST_CASE("noise shift perturbs a copy") {
    SyntheticSpec spec;
    spec.per_class_n = 15;
    spec.seed = 5;
    spec.shift.kind = ShiftSpec::Kind::noise;
    spec.shift.sigma = 0.25;
    const auto task = make_synthetic_task(spec);
    CHECK(*task.target_labels == task.source.labels);
    const Eigen::MatrixXd diff = task.target_features.features - task.source.features;
    CHECK(diff.cwiseAbs().maxCoeff() > 0.0);
    CHECK(diff.cwiseAbs().maxCoeff() < 0.25 * 6.0);  // a few sigma
}

TEST_CASE("label_shift reweights class frequencies") {
    SyntheticSpec spec;
    spec.per_class_n = 100;
    spec.seed = 9;
    spec.shift.kind = ShiftSpec::Kind::label_shift;
    spec.shift.class_weights = {0.8, 0.1, 0.1};
    const auto task = make_synthetic_task(spec);
    const auto& labels = *task.target_labels;
    const auto n0 = std::count(labels.begin(), labels.end(), 0);
    CHECK(static_cast<double>(n0) / static_cast<double>(labels.size()) > 0.6);
}

TEST_CASE("random_labels replaces structure") {
    SyntheticSpec spec;
    spec.per_class_n = 100;
    spec.seed = 13;
    spec.shift.kind = ShiftSpec::Kind::random_labels;
    const auto task = make_synthetic_task(spec);
    const auto& labels = *task.target_labels;
    for (int c = 0; c < 3; ++c) {
        const auto n = std::count(labels.begin(), labels.end(), c);
        CHECK(n > 60);  // roughly uniform out of 300
        CHECK(n < 140);
    }
    CHECK(task.target_features.features.cwiseAbs().maxCoeff() <= 1.5 * spec.radius + 1e-12);
}

TEST_CASE("empirical_risk and error_gap") {
    // Fixed linear scorer: class 0 iff x0 < 0, class 1 otherwise (class 2 unreachable).
    Architecture arch = Architecture::linear(1, 3);
    Eigen::VectorXd params(6);
    params << -1.0, 1.0, 0.0, 0.0, 0.0, -100.0;  // W rows then biases
    const ScoredModel h{arch, params};

    Eigen::MatrixXd X(4, 1);
    X << -1.0, -2.0, 1.0, 2.0;
    const auto s = make_labeled(X, {0, 0, 1, 1}, 3, "a");
    CHECK(empirical_risk(h, s) == doctest::Approx(0.0));
    const auto t = make_labeled(X, {1, 0, 1, 0}, 3, "b");
    CHECK(empirical_risk(h, t) == doctest::Approx(0.5));
    CHECK(error_gap(h, s, t) == doctest::Approx(0.5));

    Eigen::MatrixXd Xw(2, 2);
    Xw << 1.0, 2.0, 3.0, 4.0;
    const auto wide = make_labeled(Xw, {0, 1}, 3, "wide");
    CHECK_THROWS_AS(empirical_risk(h, wide), std::invalid_argument);  // dim mismatch
}

TEST_CASE("subset keeps row order and metadata") {
    const auto s = tiny_sample();
    const auto sub = subset(s, {2, 0});
    CHECK(sub.size() == 2);
    CHECK(sub.features(0, 0) == doctest::Approx(4.0));
    CHECK(sub.features(1, 0) == doctest::Approx(0.0));
    CHECK(sub.labels == std::vector<int>{2, 0});
    CHECK(sub.class_count == 3);
}
