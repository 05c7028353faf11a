#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbda/dataset.hpp"
#include "pbda/gibbs.hpp"
#include "pbda/model.hpp"
#include "pbda/train.hpp"

namespace pbda {

// Outcome of a trained divergence estimator. Trained witnesses only ever
// lower-estimate the underlying supremum, so `value` must be read as a lower
// estimate; reports carry that caveat. tie_count logs score ties hit during
// 0/1 evaluation (resolved toward the least label).
struct DivergenceEstimate {
    enum class Method { hdh_surrogate, hdeltah_erm, exact_enumeration, mc_over_gibbs, restricted };
    enum class Branch { pq, uv };

    double value = 0.0;
    Branch branch = Branch::pq;
    std::string witness;
    Method method = Method::hdh_surrogate;
    double value_pq = 0.0;
    double value_uv = 0.0;
    bool clamped = false;
    long tie_count = 0;
};

// Model-independent divergence between unlabeled samples: trains a scorer
// pair per branch on the disagreement surrogate (disagree on one sample,
// agree on the other, class-balanced), evaluates 1 - [01 risk sum], and
// keeps the better branch, clamped to [0, 1].
DivergenceEstimate hdh_divergence(const UnlabeledSample& s, const UnlabeledSample& t,
                                  const Architecture& witness_arch, const TrainConfig& cfg,
                                  const SurrogateConfig& scfg);

// Deterministic alternative labeler: second-highest score of `base`, ties
// toward the least label; never equals the base prediction.
struct SecondBestLabeler {
    ScoredModel base;
    int operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    std::vector<int> batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};
SecondBestLabeler second_best_labeler(const ScoredModel& h);

// Model-anchored divergence for a fixed scorer h: relabels both samples with
// h and its second-best alternative, trains one witness per branch by
// weighted NLL, evaluates 1 - [01 risk sum], keeps the better branch. The
// witness class defaults to h's architecture.
DivergenceEstimate h_delta_h_divergence(const ScoredModel& h, const UnlabeledSample& s,
                                        const UnlabeledSample& t, const TrainConfig& cfg,
                                        const std::optional<Architecture>& witness_arch = std::nullopt);

// Monte Carlo divergence under a Gibbs distribution: mean model-anchored
// divergence over k posterior draws plus the concentration penalty
// sqrt(ln(2/delta) / (2k)). Values above 1 are kept (vacuous flag) rather
// than clamped.
struct McDivergence {
    double value = 0.0;
    double mean_term = 0.0;
    double penalty = 0.0;
    std::vector<double> per_draw;
    bool vacuous = false;
    long tie_count = 0;
};
McDivergence mc_divergence_over_gibbs(const GaussianGibbs& q, const UnlabeledSample& s,
                                      const UnlabeledSample& t, int k, double delta,
                                      const TrainConfig& cfg);

// Divergence measured in the frozen representation of mu (an MLP): samples
// are pushed through mu's feature map and the witness class is restricted to
// linear heads. `pair` is the model-independent form (head pairs); `anchored`
// anchors on mu's own head.
enum class RestrictedVariant { pair, anchored };
DivergenceEstimate restricted_divergence(const ScoredModel& mu, const UnlabeledSample& s,
                                         const UnlabeledSample& t, RestrictedVariant variant,
                                         const TrainConfig& cfg, const SurrogateConfig& scfg);

// Expected disagreement / joint-error gaps over k independent posterior model
// pairs, with the pair-level concentration penalty sqrt(2 ln(2/delta) / k).
struct PairGapTerms {
    double disagreement_gap = 0.0;
    double joint_error_gap = 0.0;
    double penalty = 0.0;
};
PairGapTerms pair_gap_terms(const GaussianGibbs& q, const LabeledSample& s, const LabeledSample& t,
                            int k, double delta, std::uint64_t seed);

}  // namespace pbda
