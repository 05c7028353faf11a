#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pbda/dataset.hpp"
#include "pbda/model.hpp"

namespace pbda {

// Phased SGD-with-momentum schedule. Defaults follow the usual desk recipe:
// 100 epochs at 1e-2 then 50 at 1e-3, momentum 0.9, minibatches of 250,
// stop once training error drops below 5e-4.
struct TrainConfig {
    std::vector<std::pair<double, int>> lr_schedule{{1e-2, 100}, {1e-3, 50}};
    double momentum = 0.9;
    int batch_size = 250;
    double early_stop_error = 5e-4;
    std::uint64_t seed = 0;
    int restarts = 1;  // >= 1; best final objective wins

    int total_epochs() const;
    void validate() const;
};

// Per-step context handed to objectives: global step index (for per-step
// Monte Carlo draws), epoch progress in [0, 1], and the restart's seed.
struct StepInfo {
    std::int64_t step = 0;
    double progress = 0.0;
    std::uint64_t run_seed = 0;
};

// A differentiable objective over a flat parameter vector. batch_loss returns
// the loss on the given index set and, if grad is non-null, accumulates the
// gradient into it (caller zeroes). Implementations must be deterministic
// functions of (params, idx, info).
class SgdObjective {
public:
    virtual ~SgdObjective() = default;
    virtual int sample_count() const = 0;
    virtual int param_count() const = 0;
    virtual double batch_loss(const Eigen::VectorXd& params, std::span<const int> idx,
                              const StepInfo& info, Eigen::VectorXd* grad) const = 0;
    // Statistic driving early stopping (typically training error); anything
    // >= early_stop_error disables stopping.
    virtual double early_stop_metric(const Eigen::VectorXd& params) const;
    // Full-data objective used to pick the best restart.
    virtual double final_objective(const Eigen::VectorXd& params, const StepInfo& info) const;
};

struct SgdResult {
    Eigen::VectorXd params;
    double final_loss = 0.0;
    bool early_stopped = false;
    int epochs_run = 0;
    bool diverged = false;
    int diverged_epoch = -1;
};

// One optimization run (no restarts). Batch order is reshuffled every epoch
// from run_seed; bit-reproducible for fixed inputs on one platform.
SgdResult sgd_minimize(const SgdObjective& obj, Eigen::VectorXd init, const TrainConfig& cfg,
                       std::uint64_t run_seed);

// Restart loop: restart r initializes from init_for_restart(r) and runs with
// seed derive_seed(cfg.seed, r). A run that reaches the early-stop threshold
// is accepted immediately; otherwise the lowest final objective wins. Throws
// TrainingDiverged (naming the epoch) if every restart diverges.
struct FitResult {
    Eigen::VectorXd params;
    double final_objective = 0.0;
    bool early_stopped = false;
    int restarts_used = 1;
};
FitResult fit_with_restarts(const SgdObjective& obj,
                            const std::function<Eigen::VectorXd(int)>& init_for_restart,
                            const TrainConfig& cfg);

// --- weighted NLL -----------------------------------------------------------

// Softmax cross-entropy with per-example weights, normalized by total weight
// so groups weighted 1/|group| contribute equally to a sum-of-risks
// objective. Uniform weights reduce to the plain mean NLL.
class WeightedNllObjective : public SgdObjective {
public:
    WeightedNllObjective(Architecture arch, Eigen::MatrixXd X, std::vector<int> y, Eigen::VectorXd w);

    int sample_count() const override { return static_cast<int>(X_.rows()); }
    int param_count() const override { return arch_.param_count(); }
    double batch_loss(const Eigen::VectorXd& params, std::span<const int> idx, const StepInfo& info,
                      Eigen::VectorXd* grad) const override;
    double early_stop_metric(const Eigen::VectorXd& params) const override;

    const Architecture& arch() const { return arch_; }

private:
    Architecture arch_;
    Eigen::MatrixXd X_;
    std::vector<int> y_;
    Eigen::VectorXd w_;
    double total_weight_ = 0.0;
};

// Plain ERM objective: uniform weights over one sample.
WeightedNllObjective nll_objective(const Architecture& arch, const LabeledSample& s);

// Sum-of-risks objective over two samples: weights 1/|a| and 1/|b| per row,
// so each sample's mean loss carries equal aggregate influence.
WeightedNllObjective sum_of_risks_objective(const Architecture& arch, const LabeledSample& a,
                                            const LabeledSample& b);

// Trains a scorer by minibatch SGD. Restart 0 starts from `init`; further
// restarts re-initialize from derived seeds.
ScoredModel sgd_train(const SgdObjective& obj, const ScoredModel& init, const TrainConfig& cfg);

// ERM on one labeled sample (fresh seeded init).
ScoredModel train_erm(const LabeledSample& s, const Architecture& arch, const TrainConfig& cfg);

// --- multiclass disagreement surrogate --------------------------------------

// Positive score map for the disagreement margin. exp_shifted subtracts the
// max of both score vectors before exponentiating (a common positive
// rescaling, which preserves sign); exp_plain is the unshifted map used in
// hand-computed checks.
struct SurrogateConfig {
    enum class Tau { exp_shifted, exp_plain };
    Tau tau = Tau::exp_shifted;
};

// Disagreement margin z(x) >= 0 for a scorer pair: with a = tau(f-scores),
// b = tau(g-scores), z = max_j b_j * max_k a_k - max_i b_i * a_i. Tie-free,
// z > 0 iff the argmaxes of f and g differ.
double surrogate_z(const ScoredModel& f, const ScoredModel& g,
                   const Eigen::Ref<const Eigen::VectorXd>& x, const SurrogateConfig& cfg);

// Logistic disagreement loss L(z, y) = ln(1 + exp(-(2y-1) z)) / ln 2 with
// y in {0, 1}; dominates the 0/1 disagreement indicator. Stable for |z| large.
double surrogate_loss(double z, int y);

// d surrogate_loss / d z.
double surrogate_loss_dz(double z, int y);

// Joint objective for a scorer pair (params = [f | g]) on pooled rows with
// binary targets: y = 1 asks the pair to disagree, y = 0 to agree. Weights
// follow the sum-of-risks convention.
class SurrogatePairObjective : public SgdObjective {
public:
    SurrogatePairObjective(Architecture arch, Eigen::MatrixXd X, std::vector<int> y01,
                           Eigen::VectorXd w, SurrogateConfig scfg);

    int sample_count() const override { return static_cast<int>(X_.rows()); }
    int param_count() const override { return 2 * arch_.param_count(); }
    double batch_loss(const Eigen::VectorXd& params, std::span<const int> idx, const StepInfo& info,
                      Eigen::VectorXd* grad) const override;
    // Weighted 0/1 error of the disagreement indicator against y01.
    double early_stop_metric(const Eigen::VectorXd& params) const override;

    const Architecture& arch() const { return arch_; }

private:
    Architecture arch_;
    Eigen::MatrixXd X_;
    std::vector<int> y01_;
    Eigen::VectorXd w_;
    double total_weight_ = 0.0;
    SurrogateConfig scfg_;
};

// --- DANN -------------------------------------------------------------------

// Adversarial alignment config. The adversary is a binary-head scorer on the
// model's representation. ease_in ramps the adversarial weight
// beta_p = 2/(1+e^{-10p}) over training progress p (subtract_one_beta shifts
// it down to the 0..1 ramp). kl_dampening is carried along for downstream
// posterior training on top of the aligned model.
struct DannConfig {
    TrainConfig base;
    Architecture model_arch;      // must be an mlp
    Architecture adversary_arch;  // class_count must be 2, input = representation dim
    bool ease_in = true;
    bool subtract_one_beta = false;
    double kl_dampening = 0.0;

    DannConfig() { base.restarts = 5; }
};

struct DannResult {
    ScoredModel model;
    double adversary_accuracy = 0.0;  // balanced domain accuracy at the end
    int restarts_used = 1;
};

// Trains an MLP on source labels while pushing its representation toward
// domain invariance via a gradient-reversal adversary. Restarts (up to
// cfg.base.restarts) trigger only on divergence; the first finite run wins.
DannResult dann_train(const LabeledSample& source, const UnlabeledSample& target_features,
                      const DannConfig& cfg);

// Adversarial weight schedule at progress p in [0, 1].
double dann_beta(double p, bool ease_in, bool subtract_one);

// Full-batch scalarization of the adversarial objective at fixed beta, for
// gradient checks: the model half descends NLL - beta * domain loss, the
// adversary half descends beta * domain loss.
struct DannProbe {
    double model_scalar = 0.0;
    double adversary_scalar = 0.0;
    Eigen::VectorXd model_grad;
    Eigen::VectorXd adversary_grad;
};
DannProbe dann_probe(const LabeledSample& source, const UnlabeledSample& target_features,
                     const Architecture& model_arch, const Architecture& adversary_arch,
                     const Eigen::VectorXd& model_params, const Eigen::VectorXd& adversary_params,
                     double beta);

}  // namespace pbda
