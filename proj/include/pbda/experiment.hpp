#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbda/bounds.hpp"
#include "pbda/dataset.hpp"
#include "pbda/divergence.hpp"
#include "pbda/model.hpp"
#include "pbda/train.hpp"

namespace pbda {

// Spearman rank correlation with average ranks for ties. Throws
// std::invalid_argument on length mismatch, fewer than 3 points, or a
// constant input (undefined correlation).
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// One task description in a config file: either synthetic or a CSV pair.
struct TaskSpec {
    enum class Kind { synthetic, csv };
    Kind kind = Kind::synthetic;
    std::string name;
    SyntheticSpec synthetic;
    std::string source_csv;
    std::string target_csv;
    std::string label_column = "label";
    bool target_labeled = false;
};

// Certificate families the suite can assemble: the baseline bound with a
// model-independent or posterior-averaged divergence, the flatness-corrected
// bound at the summary, and the feature-frozen restricted variants.
enum class BoundKind {
    baseline_independent,
    baseline_dependent,
    flatness,
    restricted_pair,
    restricted_anchored
};
std::string bound_kind_name(BoundKind kind);
BoundKind bound_kind_from_name(const std::string& name);

enum class EstimatorId { hdh, hdeltah };

// Experiment description mapped from a JSON config file.
struct ExperimentConfig {
    std::vector<TaskSpec> tasks;
    Architecture architecture = Architecture::linear(2, 3);
    TrainConfig trainer;
    SurrogateConfig surrogate;
    std::vector<EstimatorId> estimators{EstimatorId::hdh, EstimatorId::hdeltah};
    std::vector<BoundKind> bounds{BoundKind::flatness};
    std::vector<std::uint64_t> seeds{1};
    int k = 30;
    double delta = 0.05;
    double prior_sigma = 0.01;
    double kl_dampening = 1.0;
    bool strict_delta = false;
    bool research_mode = true;
    std::optional<double> assumed_adaptability;
    std::optional<double> assumed_rho;
    int jobs = 1;

    void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

// Stable FNV-1a hash of the canonical config serialization, hex-encoded.
std::string config_hash(const ExperimentConfig& cfg);

// --- ranking suite ----------------------------------------------------------

struct RankingCell {
    std::string task;
    std::uint64_t seed = 0;
    double error_gap = 0.0;
    double hdh = 0.0;
    double hdeltah = 0.0;
    std::string status = "ok";  // failures become data, not aborts
};

struct RankingResult {
    std::vector<RankingCell> cells;
    std::optional<double> spearman_hdh;
    std::optional<double> spearman_hdeltah;
    std::vector<std::string> caveats;
};

// Per (task, seed): trains a source-only scorer, measures the source/target
// error gap, and both divergence estimates; then rank-correlates estimates
// against gaps. Requires target labels on every task.
RankingResult run_ranking_suite(const ExperimentConfig& cfg);

// --- bounds suite -----------------------------------------------------------

struct BoundCell {
    std::string task;
    BoundKind kind = BoundKind::flatness;
    std::uint64_t seed = 0;
    std::string status = "ok";
    BoundReport report;
    bool labeled = false;      // target labels were available to this cell
    double target_risk = 0.0;  // measured Gibbs risk on labeled target, research mode
    bool violated = false;     // target_risk > report.total
    double wall_time_s = 0.0;
};

struct BoundsSuiteResult {
    std::vector<BoundCell> cells;
    double violation_rate = 0.0;  // over research-mode cells with status ok
};

// Runs every (task, bound kind, seed) cell through prior/posterior training
// and bound assembly. Cells run as independent jobs on a bounded worker pool;
// per-cell reports are written atomically under out_dir/reports and the
// summary is reduced in fixed order. Exceptions inside a cell become status
// rows. out_dir may be empty to skip writing.
BoundsSuiteResult run_bounds_suite(const ExperimentConfig& cfg, const std::string& out_dir);

// Report serialization. Summary files are byte-stable across runs: fixed
// %.17g formatting and no timing columns.
std::string bound_report_to_json(const BoundCell& cell, const std::string& cfg_hash);
std::string bounds_summary_csv(const BoundsSuiteResult& result);
std::string ranking_summary_csv(const RankingResult& result);

// 95%-trimmed view over the per-cell totals (drops cells whose total sits in
// the top 5% tail); raw rows stay in the full summary.
std::vector<const BoundCell*> trimmed_view(const BoundsSuiteResult& result);

// Atomic file write (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

// Formats a double as %.17g (round-trip exact, byte-stable).
std::string format_double(double v);

}  // namespace pbda
