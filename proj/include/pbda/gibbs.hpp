#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbda/dataset.hpp"
#include "pbda/model.hpp"
#include "pbda/train.hpp"

namespace pbda {

// Diagonal Gaussian over flat model parameters. `trained_on` records which
// sample the distribution was fit to, so bound assembly can reject priors
// that saw the target. Zero variances are only legal in test mode (used to
// emulate a point mass in degenerate-checks).
struct GaussianGibbs {
    Architecture arch;
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    std::string trained_on;
    bool test_mode = false;

    static GaussianGibbs create(Architecture arch, Eigen::VectorXd mean, Eigen::VectorXd variance,
                                std::string trained_on);
    static GaussianGibbs create_test_mode(Architecture arch, Eigen::VectorXd mean,
                                          Eigen::VectorXd variance, std::string trained_on);
    // Isotropic helper: variance = sigma * 1.
    static GaussianGibbs isotropic(const ScoredModel& center, double sigma, std::string trained_on);
};

// One parameter draw: mean + sqrt(variance) ⊙ eps, eps ~ N(0, I), seeded.
ScoredModel sample_model(const GaussianGibbs& q, std::uint64_t seed);

// KL(q || p) in nats for diagonal Gaussians over the same architecture.
// p must have strictly positive variance outside test mode; a zero q-variance
// against positive p-variance is an error outside test mode and +infinity in
// test mode. Matching zero-variance coordinates contribute 0 when the means
// agree.
double kl_divergence(const GaussianGibbs& q, const GaussianGibbs& p);

struct GibbsRisk {
    double estimate = 0.0;
    std::vector<double> per_draw;  // k entries, reduction order fixed
};

// Monte Carlo Gibbs risk: mean 0/1 risk over k seeded draws.
GibbsRisk gibbs_risk_mc(const GaussianGibbs& q, const LabeledSample& s, int k, std::uint64_t seed);

// Point summary: the distribution mean as a deterministic scorer.
ScoredModel summary(const GaussianGibbs& q);

// Empirical flatness: |MC Gibbs risk - risk of the summary scorer|.
double flatness_rho(const GaussianGibbs& q, const LabeledSample& s, int k, std::uint64_t seed);

// Posterior training spec: start from `prior` (typically an isotropic
// Gaussian at an ERM solution) and run reparameterized SGD on
// [MC surrogate NLL + dampening * KL(q||prior) / n], one parameter draw per
// minibatch. Variances are kept positive through a softplus parameterization.
struct GibbsTrainSpec {
    GaussianGibbs prior;
    double kl_dampening = 1.0;  // >= 0; 0 drops the KL term (and its gradient) exactly
    TrainConfig trainer;
};

GaussianGibbs train_gibbs(const LabeledSample& source, const GibbsTrainSpec& spec);

// Full-batch value and gradient of the reparameterized training objective at
// a fixed step (the parameter draw is pinned by (trainer seed, step)), with
// params = [mean | rho]. Exists so gradient checks can difference the exact
// objective the trainer sees.
struct GibbsObjectiveProbe {
    double loss = 0.0;
    Eigen::VectorXd grad;
};
GibbsObjectiveProbe gibbs_objective_probe(const LabeledSample& s, const GibbsTrainSpec& spec,
                                          const Eigen::VectorXd& params, std::int64_t step);

// ERM-centered isotropic prior fit on `s` only (legal for bound assembly
// whenever `s` is the source sample).
GaussianGibbs train_prior(const LabeledSample& s, const Architecture& arch, const TrainConfig& cfg,
                          double sigma);

// JSON round-trip (bit-exact parameters).
std::string gibbs_to_json(const GaussianGibbs& q);
GaussianGibbs gibbs_from_json(const std::string& text);

}  // namespace pbda
