#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace pbda {

struct ScoredModel;

// Labeled sample: row-major feature matrix plus dense integer labels
// 0..class_count-1. Instances are value types; treat them as immutable.
struct LabeledSample {
    Eigen::MatrixXd features;  // n x d
    std::vector<int> labels;   // size n
    int class_count = 0;
    std::string id;  // provenance tag, e.g. "syn-7-rotate40:source"

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
};

struct UnlabeledSample {
    Eigen::MatrixXd features;  // n x d
    std::string id;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
};

// Validating constructors. Throw std::invalid_argument on empty data,
// non-finite features, or labels outside 0..class_count-1.
LabeledSample make_labeled(Eigen::MatrixXd features, std::vector<int> labels, int class_count,
                           std::string id = "");
UnlabeledSample make_unlabeled(Eigen::MatrixXd features, std::string id = "");

UnlabeledSample strip_labels(const LabeledSample& s);

// Loads a numeric CSV with a mandatory header row. If label_column is given,
// that column must hold non-negative integers forming a gap-free set
// {0,...,max}; the rest are features. Throws ParseError with row/column
// context, or std::invalid_argument for an empty table.
std::variant<LabeledSample, UnlabeledSample> load_csv(const std::string& path,
                                                      const std::optional<std::string>& label_column);
LabeledSample load_labeled_csv(const std::string& path, const std::string& label_column);
UnlabeledSample load_unlabeled_csv(const std::string& path);

void save_csv(const LabeledSample& s, const std::string& path, const std::string& label_column);

// Row subset (in given order); keeps class_count.
LabeledSample subset(const LabeledSample& s, const std::vector<int>& rows);
UnlabeledSample subset(const UnlabeledSample& s, const std::vector<int>& rows);

// Seeded shuffle-split: first part gets round(fraction * n) rows. Requires
// n >= 2 and fraction in [0, 1]. Parts are disjoint and reassemble the input.
std::pair<LabeledSample, LabeledSample> random_split(const LabeledSample& s, double fraction,
                                                     std::uint64_t seed);

struct ShiftSpec {
    enum class Kind { none, rotate, noise, label_shift, random_labels };
    Kind kind = Kind::none;
    double angle_deg = 0.0;              // rotate
    double sigma = 0.0;                  // noise
    std::vector<double> class_weights;   // label_shift
};

struct SyntheticSpec {
    int class_count = 3;   // >= 2
    int dim = 2;           // >= 2
    int per_class_n = 100;  // >= 1
    double radius = 3.0;   // centroid ring radius
    ShiftSpec shift;
    std::uint64_t seed = 0;
    std::string name;  // optional label used in sample ids
};

// Source and target of one adaptation problem. Target labels are optional:
// present for synthetic/benchmark data, absent in deployment.
struct AdaptationTask {
    LabeledSample source;
    UnlabeledSample target_features;
    std::optional<std::vector<int>> target_labels;
    std::string shift_descriptor;

    // Target with labels attached; requires target_labels.
    LabeledSample labeled_target() const;
};

// Gaussian blobs around centroids placed deterministically on a circle of
// SyntheticSpec::radius in the first two coordinates (class c at angle
// 2*pi*c/C). The target is the transformed copy of the source draw, except
// kind none, which redraws from the same distribution, and random_labels,
// which replaces both features and labels with unstructured draws.
AdaptationTask make_synthetic_task(const SyntheticSpec& spec);

// Fraction of sample misclassified by the model (0/1 loss).
double empirical_risk(const ScoredModel& model, const LabeledSample& s);

// |risk(a) - risk(b)| under a shared model.
double error_gap(const ScoredModel& model, const LabeledSample& a, const LabeledSample& b);

std::string shift_to_string(const ShiftSpec& shift);

}  // namespace pbda
