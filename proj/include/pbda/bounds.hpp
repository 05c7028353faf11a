#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbda/dataset.hpp"
#include "pbda/divergence.hpp"
#include "pbda/gibbs.hpp"
#include "pbda/model.hpp"
#include "pbda/train.hpp"

namespace pbda {

// PAC-Bayes complexity penalty sqrt((kl + ln(sqrt(4m)) - ln(delta)) / (2m)).
double pinsker_penalty(double kl_nats, int m, double delta);

// Concentration penalty for a k-draw Monte Carlo divergence estimate.
double mc_divergence_penalty(int k, double delta);

// Upper estimate of the joint adaptability min: trains one scorer on the
// summed source/target risks and reports the achieved sum. Requires target
// labels.
struct AdaptabilityEstimate {
    double value = 0.0;
    ScoredModel eta;
};
AdaptabilityEstimate adaptability_tilde_ub(const LabeledSample& s, const LabeledSample& t,
                                           const Architecture& arch, const TrainConfig& cfg);

// Holdout-certified adaptability upper bound: splits both samples
// (split_fraction to train), trains on the train parts, and adds the two
// Hoeffding terms sqrt(ln(4/delta)/(2*holdout size)).
AdaptabilityEstimate adaptability_lambda_ub(const LabeledSample& s, const LabeledSample& t,
                                            const Architecture& arch, const TrainConfig& cfg,
                                            double delta, double split_fraction, std::uint64_t seed);

// Feature-frozen adaptability: keeps mu's representation fixed and trains a
// fresh linear head on the summed risks.
AdaptabilityEstimate adaptability_mu(const LabeledSample& s, const LabeledSample& t,
                                     const ScoredModel& mu, const TrainConfig& cfg);

enum class DivergenceChoice { model_independent, model_dependent };

// Knobs shared by the bound assemblers. In research mode (target labels
// available) adaptability and flatness are measured; otherwise the caller
// must declare assumed values, which are echoed as caveats. strict_delta
// splits delta across the MC divergence penalty and the PAC-Bayes penalty by
// union bound instead of spending it twice.
struct AssemblyConfig {
    int k = 30;
    double delta = 0.05;
    std::uint64_t seed = 0;
    TrainConfig witness_cfg;
    SurrogateConfig surrogate;
    bool strict_delta = false;
    std::optional<double> assumed_adaptability;
    std::optional<double> assumed_rho;
};

// Itemized certificate. total always equals the sum of the term fields.
struct BoundReport {
    std::string kind;
    double adaptability = 0.0;
    double source_gibbs_risk = 0.0;
    double divergence_term = 0.0;
    double divergence_mc_penalty = 0.0;  // informational share of divergence_term
    double kl_nats = 0.0;
    double complexity_penalty = 0.0;
    double rho = 0.0;
    double total = 0.0;
    int m = 0;  // target sample size entering the penalty
    double delta = 0.05;
    std::vector<std::string> caveats;
    DivergenceEstimate divergence;

    void finalize();  // total = adaptability + source_gibbs_risk + divergence_term + complexity_penalty + rho
};

// Baseline target-risk certificate for a Gibbs scorer: adaptability + source
// Gibbs risk + divergence (model-independent or averaged over posterior
// draws) + PAC-Bayes penalty with m = |target|. Throws IllegalPrior if the
// prior's provenance names the target sample.
BoundReport assemble_baseline_bound(const GaussianGibbs& q, const GaussianGibbs& prior,
                                    const AdaptationTask& task, DivergenceChoice choice,
                                    const AssemblyConfig& cfg);

// Flatness-corrected certificate: divergence anchored at the summary scorer,
// plus the measured (or declared) flatness gap for both domains.
BoundReport assemble_flatness_bound(const GaussianGibbs& q, const GaussianGibbs& prior,
                                    const AdaptationTask& task, const AssemblyConfig& cfg);

// Feature-frozen variant: divergence restricted to the summary's
// representation and adaptability measured over heads only.
BoundReport assemble_restricted_bound(const GaussianGibbs& q, const GaussianGibbs& prior,
                                      const AdaptationTask& task, RestrictedVariant variant,
                                      const AssemblyConfig& cfg);

}  // namespace pbda
