#include "pbda/gibbs.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "pbda/errors.hpp"
#include "pbda/rng.hpp"

namespace pbda {

namespace {

double stable_softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus_inverse(double y) {
    if (y <= 0.0) throw std::invalid_argument("softplus inverse needs a positive argument");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

void check_shapes(const Architecture& arch, const Eigen::VectorXd& mean,
                  const Eigen::VectorXd& variance) {
    arch.validate();
    if (mean.size() != arch.param_count() || variance.size() != arch.param_count())
        throw std::invalid_argument("mean/variance length does not match architecture");
    if (!mean.allFinite() || !variance.allFinite())
        throw std::invalid_argument("mean/variance must be finite");
    if ((variance.array() < 0.0).any())
        throw std::invalid_argument("variances must be non-negative");
}

}  // namespace

GaussianGibbs GaussianGibbs::create(Architecture arch, Eigen::VectorXd mean, Eigen::VectorXd variance,
                                    std::string trained_on) {
    check_shapes(arch, mean, variance);
    if ((variance.array() == 0.0).any())
        throw std::invalid_argument("zero variance is only allowed in test mode");
    return GaussianGibbs{std::move(arch), std::move(mean), std::move(variance), std::move(trained_on),
                         false};
}

GaussianGibbs GaussianGibbs::create_test_mode(Architecture arch, Eigen::VectorXd mean,
                                              Eigen::VectorXd variance, std::string trained_on) {
    check_shapes(arch, mean, variance);
    return GaussianGibbs{std::move(arch), std::move(mean), std::move(variance), std::move(trained_on),
                         true};
}

GaussianGibbs GaussianGibbs::isotropic(const ScoredModel& center, double sigma,
                                       std::string trained_on) {
    if (sigma <= 0.0) throw std::invalid_argument("isotropic variance must be positive");
    return create(center.arch, center.params,
                  Eigen::VectorXd::Constant(center.params.size(), sigma), std::move(trained_on));
}

ScoredModel sample_model(const GaussianGibbs& q, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5a3bULL));
    const Eigen::VectorXd eps = rng.normal_vec(q.mean.size());
    return ScoredModel{q.arch, q.mean + (q.variance.array().sqrt() * eps.array()).matrix()};
}

double kl_divergence(const GaussianGibbs& q, const GaussianGibbs& p) {
    if (q.arch != p.arch) throw std::invalid_argument("KL needs a shared architecture");
    const bool test_mode = q.test_mode || p.test_mode;
    double kl = 0.0;
    for (Eigen::Index i = 0; i < q.mean.size(); ++i) {
        const double vq = q.variance[i], vp = p.variance[i];
        const double dm = q.mean[i] - p.mean[i];
        if (vp == 0.0) {
            // Point-mass prior coordinate: zero KL only if q matches it exactly.
            if (!test_mode) throw std::invalid_argument("prior variance must be strictly positive");
            if (vq == 0.0 && dm == 0.0) continue;
            return std::numeric_limits<double>::infinity();
        }
        if (vq == 0.0) {
            if (!test_mode)
                throw std::invalid_argument(
                    "zero posterior variance against a positive prior is test-mode only");
            return std::numeric_limits<double>::infinity();
        }
        kl += 0.5 * (std::log(vp / vq) + (vq + dm * dm) / vp - 1.0);
    }
    return kl;
}

GibbsRisk gibbs_risk_mc(const GaussianGibbs& q, const LabeledSample& s, int k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("draw count must be >= 1");
    GibbsRisk out;
    out.per_draw.reserve(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const auto model = sample_model(q, derive_seed(seed, 0xd4a9ULL, i));
        const double r = empirical_risk(model, s);
        out.per_draw.push_back(r);
        sum += r;
    }
    out.estimate = sum / static_cast<double>(k);
    return out;
}

ScoredModel summary(const GaussianGibbs& q) { return ScoredModel{q.arch, q.mean}; }

double flatness_rho(const GaussianGibbs& q, const LabeledSample& s, int k, std::uint64_t seed) {
    const double mc = gibbs_risk_mc(q, s, k, seed).estimate;
    return std::abs(mc - empirical_risk(summary(q), s));
}

// --- posterior training -------------------------------------------------------

namespace {

// Reparameterized objective over [mean | rho] with sigma = softplus(rho):
// one Gaussian parameter draw per minibatch (pathwise gradients), mean NLL on
// the batch, plus dampening * KL(q || prior) / n.
class GibbsNllObjective : public SgdObjective {
public:
    GibbsNllObjective(const GaussianGibbs& prior, Eigen::MatrixXd X, std::vector<int> y,
                      double dampening)
        : arch_(prior.arch),
          prior_mean_(prior.mean),
          prior_var_(prior.variance),
          X_(std::move(X)),
          y_(std::move(y)),
          dampening_(dampening) {
        if ((prior_var_.array() <= 0.0).any())
            throw std::invalid_argument("posterior training needs a strictly positive prior variance");
        if (dampening_ < 0.0) throw std::invalid_argument("kl dampening must be >= 0");
    }

    int sample_count() const override { return static_cast<int>(X_.rows()); }
    int param_count() const override { return 2 * arch_.param_count(); }

    double batch_loss(const Eigen::VectorXd& params, std::span<const int> idx, const StepInfo& info,
                      Eigen::VectorXd* grad) const override {
        const int P = arch_.param_count();
        const Eigen::VectorXd mean = params.head(P);
        const Eigen::VectorXd rho = params.tail(P);
        Eigen::VectorXd sigma(P), gate(P);
        for (int i = 0; i < P; ++i) {
            sigma[i] = stable_softplus(rho[i]);
            gate[i] = stable_sigmoid(rho[i]);  // d sigma / d rho
        }

        Rng rng(derive_seed(info.run_seed, 0xe95dULL, static_cast<std::uint64_t>(info.step)));
        const Eigen::VectorXd eps = rng.normal_vec(P);
        const Eigen::VectorXd theta = mean + (sigma.array() * eps.array()).matrix();

        Eigen::MatrixXd Xb(static_cast<Eigen::Index>(idx.size()), X_.cols());
        std::vector<int> rows(idx.begin(), idx.end());
        for (std::size_t b = 0; b < idx.size(); ++b) Xb.row(static_cast<Eigen::Index>(b)) = X_.row(idx[b]);
        const Eigen::VectorXd uniform =
            Eigen::VectorXd::Constant(Xb.rows(), 1.0 / static_cast<double>(idx.size()));

        const auto trace = forward_trace(arch_, theta, Xb);
        Eigen::MatrixXd dscores(Xb.rows(), arch_.class_count);
        double loss = 0.0;
        {
            // reuse the shared softmax bookkeeping by computing inline
            for (Eigen::Index b = 0; b < Xb.rows(); ++b) {
                const int label = y_[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
                const double mx = trace.scores.row(b).maxCoeff();
                const double lse = mx + std::log((trace.scores.row(b).array() - mx).exp().sum());
                loss += uniform[b] * (lse - trace.scores(b, label));
                if (grad) {
                    dscores.row(b) = (trace.scores.row(b).array() - lse).exp().matrix() * uniform[b];
                    dscores(b, label) -= uniform[b];
                }
            }
        }
        if (grad) {
            Eigen::VectorXd dtheta = Eigen::VectorXd::Zero(P);
            backward_trace(arch_, theta, trace, dscores, dtheta);
            grad->head(P) += dtheta;
            grad->tail(P) += (dtheta.array() * eps.array() * gate.array()).matrix();
        }

        if (dampening_ > 0.0) {
            const double n = static_cast<double>(X_.rows());
            double kl = 0.0;
            for (int i = 0; i < P; ++i) {
                const double vq = sigma[i] * sigma[i];
                const double dm = mean[i] - prior_mean_[i];
                kl += 0.5 * (std::log(prior_var_[i] / vq) + (vq + dm * dm) / prior_var_[i] - 1.0);
                if (grad) {
                    (*grad)[i] += dampening_ / n * dm / prior_var_[i];
                    (*grad)[P + i] +=
                        dampening_ / n * (-1.0 / sigma[i] + sigma[i] / prior_var_[i]) * gate[i];
                }
            }
            loss += dampening_ / n * kl;
        }
        return loss;
    }

    // Early stop on the summary scorer's training error.
    double early_stop_metric(const Eigen::VectorXd& params) const override {
        return mean_error(params);
    }

    // Deterministic restart ranking: summary NLL + dampened KL.
    double final_objective(const Eigen::VectorXd& params, const StepInfo&) const override {
        const int P = arch_.param_count();
        const ScoredModel mean_model{arch_, params.head(P)};
        const auto S = mean_model.scores_batch(X_);
        double nll = 0.0;
        for (Eigen::Index i = 0; i < S.rows(); ++i) {
            const double mx = S.row(i).maxCoeff();
            const double lse = mx + std::log((S.row(i).array() - mx).exp().sum());
            nll += (lse - S(i, y_[static_cast<std::size_t>(i)])) / static_cast<double>(S.rows());
        }
        if (dampening_ > 0.0) {
            double kl = 0.0;
            for (int i = 0; i < P; ++i) {
                const double sq = stable_softplus(params[P + i]);
                const double vq = sq * sq;
                const double dm = params[i] - prior_mean_[i];
                kl += 0.5 * (std::log(prior_var_[i] / vq) + (vq + dm * dm) / prior_var_[i] - 1.0);
            }
            nll += dampening_ / static_cast<double>(X_.rows()) * kl;
        }
        return nll;
    }

private:
    double mean_error(const Eigen::VectorXd& params) const {
        const int P = arch_.param_count();
        const ScoredModel mean_model{arch_, params.head(P)};
        const auto preds = mean_model.predict_batch(X_);
        double err = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (preds[i] != y_[i]) err += 1.0;
        return err / static_cast<double>(preds.size());
    }

    Architecture arch_;
    Eigen::VectorXd prior_mean_;
    Eigen::VectorXd prior_var_;
    Eigen::MatrixXd X_;
    std::vector<int> y_;
    double dampening_;
};

}  // namespace

GaussianGibbs train_gibbs(const LabeledSample& source, const GibbsTrainSpec& spec) {
    spec.trainer.validate();
    if (spec.prior.arch.class_count != source.class_count ||
        spec.prior.arch.input_dim != source.dim())
        throw std::invalid_argument("prior architecture does not match the sample");
    const GibbsNllObjective obj(spec.prior, source.features, source.labels, spec.kl_dampening);
    const int P = spec.prior.arch.param_count();
    Eigen::VectorXd init(2 * P);
    init.head(P) = spec.prior.mean;
    for (int i = 0; i < P; ++i) init[P + i] = softplus_inverse(std::sqrt(spec.prior.variance[i]));

    auto fit = fit_with_restarts(
        obj, [&](int) { return init; }, spec.trainer);

    Eigen::VectorXd mean = fit.params.head(P);
    Eigen::VectorXd variance(P);
    for (int i = 0; i < P; ++i) {
        const double s = stable_softplus(fit.params[P + i]);
        variance[i] = s * s;
    }
    auto q = GaussianGibbs::create(spec.prior.arch, std::move(mean), std::move(variance), source.id);
    if (!std::isfinite(kl_divergence(q, spec.prior)))
        throw TrainingDiverged("posterior training produced an infinite KL against its prior");
    return q;
}

GaussianGibbs train_prior(const LabeledSample& s, const Architecture& arch, const TrainConfig& cfg,
                          double sigma) {
    return GaussianGibbs::isotropic(train_erm(s, arch, cfg), sigma, s.id);
}

GibbsObjectiveProbe gibbs_objective_probe(const LabeledSample& s, const GibbsTrainSpec& spec,
                                          const Eigen::VectorXd& params, std::int64_t step) {
    const GibbsNllObjective obj(spec.prior, s.features, s.labels, spec.kl_dampening);
    if (params.size() != obj.param_count())
        throw std::invalid_argument("probe parameter vector length mismatch");
    std::vector<int> idx(static_cast<std::size_t>(s.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    StepInfo info;
    info.step = step;
    info.run_seed = spec.trainer.seed;
    GibbsObjectiveProbe probe;
    probe.grad = Eigen::VectorXd::Zero(obj.param_count());
    probe.loss = obj.batch_loss(params, idx, info, &probe.grad);
    return probe;
}

// --- serialization ------------------------------------------------------------

namespace {

constexpr const char* kGibbsFormat = "pbda-gibbs";
constexpr int kGibbsVersion = 1;

}  // namespace

std::string gibbs_to_json(const GaussianGibbs& q) {
    // Reuse the model blob for architecture + mean, then add the variance.
    const auto mean_blob = nlohmann::json::parse(model_to_json(ScoredModel{q.arch, q.mean}));
    std::vector<std::string> var_hex;
    var_hex.reserve(static_cast<std::size_t>(q.variance.size()));
    for (Eigen::Index i = 0; i < q.variance.size(); ++i) {
        std::uint64_t bits;
        double v = q.variance[i];
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(bits));
        var_hex.emplace_back(buf);
    }
    nlohmann::json j{{"format", kGibbsFormat},
                     {"version", kGibbsVersion},
                     {"architecture", mean_blob.at("architecture")},
                     {"mean", mean_blob.at("params")},
                     {"variance", var_hex},
                     {"trained_on", q.trained_on},
                     {"test_mode", q.test_mode}};
    return j.dump(2);
}

GaussianGibbs gibbs_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("gibbs blob: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kGibbsFormat) throw ParseError("not a gibbs blob");
        if (j.at("version").get<int>() != kGibbsVersion)
            throw ParseError("unsupported gibbs version " + j.at("version").dump());
        nlohmann::json model_blob{{"format", "pbda-model"},
                                  {"version", 1},
                                  {"architecture", j.at("architecture")},
                                  {"params", j.at("mean")}};
        const auto mean_model = model_from_json(model_blob.dump());
        nlohmann::json var_blob{{"format", "pbda-model"},
                                {"version", 1},
                                {"architecture", j.at("architecture")},
                                {"params", j.at("variance")}};
        const auto var_model = model_from_json(var_blob.dump());
        const bool test_mode = j.value("test_mode", false);
        if (test_mode)
            return GaussianGibbs::create_test_mode(mean_model.arch, mean_model.params,
                                                   var_model.params,
                                                   j.value("trained_on", std::string{}));
        return GaussianGibbs::create(mean_model.arch, mean_model.params, var_model.params,
                                     j.value("trained_on", std::string{}));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("gibbs blob: ") + e.what());
    }
}

}  // namespace pbda
