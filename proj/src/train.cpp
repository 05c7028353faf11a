#include "pbda/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pbda/errors.hpp"
#include "pbda/rng.hpp"

namespace pbda {

namespace {

constexpr double kLn2 = std::numbers::ln2;

// Row-wise softmax cross-entropy: fills dscores (softmax - onehot) scaled by
// row_scale, returns the scaled loss sum.
double softmax_nll(const Eigen::MatrixXd& scores, const std::vector<int>& labels,
                   const std::vector<int>& rows, const Eigen::VectorXd& row_scale,
                   Eigen::MatrixXd* dscores) {
    double loss = 0.0;
    for (Eigen::Index b = 0; b < scores.rows(); ++b) {
        const int y = labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
        const double mx = scores.row(b).maxCoeff();
        const double lse = mx + std::log((scores.row(b).array() - mx).exp().sum());
        loss += row_scale[b] * (lse - scores(b, y));
        if (dscores) {
            dscores->row(b) = (scores.row(b).array() - lse).exp().matrix() * row_scale[b];
            (*dscores)(b, y) -= row_scale[b];
        }
    }
    return loss;
}

std::vector<int> all_indices(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

}  // namespace

int TrainConfig::total_epochs() const {
    int total = 0;
    for (const auto& [lr, epochs] : lr_schedule) total += epochs;
    return total;
}

void TrainConfig::validate() const {
    if (lr_schedule.empty()) throw std::invalid_argument("lr_schedule must have at least one phase");
    for (const auto& [lr, epochs] : lr_schedule) {
        if (lr <= 0.0) throw std::invalid_argument("learning rates must be positive");
        if (epochs < 1) throw std::invalid_argument("phase epoch counts must be >= 1");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (early_stop_error < 0.0) throw std::invalid_argument("early_stop_error must be >= 0");
    if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
}

double SgdObjective::early_stop_metric(const Eigen::VectorXd&) const {
    return std::numeric_limits<double>::infinity();
}

double SgdObjective::final_objective(const Eigen::VectorXd& params, const StepInfo& info) const {
    const auto idx = all_indices(sample_count());
    return batch_loss(params, idx, info, nullptr);
}

SgdResult sgd_minimize(const SgdObjective& obj, Eigen::VectorXd init, const TrainConfig& cfg,
                       std::uint64_t run_seed) {
    cfg.validate();
    if (init.size() != obj.param_count())
        throw std::invalid_argument("initial parameter vector length mismatch");

    const int n = obj.sample_count();
    const int total_epochs = cfg.total_epochs();
    Rng shuffle_rng(derive_seed(run_seed, 0xba7cULL));
    auto order = all_indices(n);

    SgdResult result;
    result.params = std::move(init);
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(result.params.size());
    Eigen::VectorXd grad(result.params.size());
    StepInfo info{0, 0.0, run_seed};

    int epoch = 0;
    for (const auto& [lr, phase_epochs] : cfg.lr_schedule) {
        for (int e = 0; e < phase_epochs; ++e, ++epoch) {
            info.progress = static_cast<double>(epoch) / static_cast<double>(total_epochs);
            shuffle_rng.shuffle(order);
            for (int start = 0; start < n; start += cfg.batch_size) {
                const int len = std::min(cfg.batch_size, n - start);
                grad.setZero();
                const double loss = obj.batch_loss(
                    result.params, std::span<const int>(order.data() + start, static_cast<std::size_t>(len)),
                    info, &grad);
                ++info.step;
                if (!std::isfinite(loss) || !grad.allFinite()) {
                    result.diverged = true;
                    result.diverged_epoch = epoch;
                    result.epochs_run = epoch;
                    return result;
                }
                velocity = cfg.momentum * velocity - lr * grad;
                result.params += velocity;
            }
            if (obj.early_stop_metric(result.params) < cfg.early_stop_error) {
                result.early_stopped = true;
                result.epochs_run = epoch + 1;
                result.final_loss = obj.final_objective(result.params, info);
                return result;
            }
        }
    }
    result.epochs_run = total_epochs;
    result.final_loss = obj.final_objective(result.params, info);
    return result;
}

FitResult fit_with_restarts(const SgdObjective& obj,
                            const std::function<Eigen::VectorXd(int)>& init_for_restart,
                            const TrainConfig& cfg) {
    cfg.validate();
    FitResult best;
    bool have_best = false;
    int last_diverged_epoch = -1;
    for (int r = 0; r < cfg.restarts; ++r) {
        auto run = sgd_minimize(obj, init_for_restart(r), cfg, derive_seed(cfg.seed, 0xf17ULL, r));
        if (run.diverged) {
            last_diverged_epoch = run.diverged_epoch;
            continue;
        }
        if (run.early_stopped) {
            // Hit the target training error; later restarts cannot do better.
            return FitResult{std::move(run.params), run.final_loss, true, r + 1};
        }
        if (!have_best || run.final_loss < best.final_objective) {
            best = FitResult{std::move(run.params), run.final_loss, false, r + 1};
            have_best = true;
        }
    }
    if (!have_best)
        throw TrainingDiverged("optimization diverged on every restart (last at epoch " +
                               std::to_string(last_diverged_epoch) + ")");
    best.restarts_used = cfg.restarts;
    return best;
}

// --- weighted NLL -----------------------------------------------------------

WeightedNllObjective::WeightedNllObjective(Architecture arch, Eigen::MatrixXd X, std::vector<int> y,
                                           Eigen::VectorXd w)
    : arch_(std::move(arch)), X_(std::move(X)), y_(std::move(y)), w_(std::move(w)) {
    arch_.validate();
    if (X_.rows() == 0) throw std::invalid_argument("objective needs at least one row");
    if (static_cast<Eigen::Index>(y_.size()) != X_.rows() || w_.size() != X_.rows())
        throw std::invalid_argument("labels/weights do not match rows");
    if ((w_.array() < 0.0).any()) throw std::invalid_argument("weights must be non-negative");
    total_weight_ = w_.sum();
    if (total_weight_ <= 0.0) throw std::invalid_argument("weights must not all be zero");
    for (int label : y_)
        if (label < 0 || label >= arch_.class_count)
            throw std::invalid_argument("label outside architecture class range");
}

double WeightedNllObjective::batch_loss(const Eigen::VectorXd& params, std::span<const int> idx,
                                        const StepInfo&, Eigen::VectorXd* grad) const {
    Eigen::MatrixXd Xb(static_cast<Eigen::Index>(idx.size()), X_.cols());
    Eigen::VectorXd row_scale(static_cast<Eigen::Index>(idx.size()));
    std::vector<int> rows(idx.begin(), idx.end());
    // Scale so the expected batch loss equals the full objective
    // sum_i w_i l_i / W.
    const double scale = static_cast<double>(X_.rows()) /
                         (static_cast<double>(idx.size()) * total_weight_);
    for (std::size_t b = 0; b < idx.size(); ++b) {
        Xb.row(static_cast<Eigen::Index>(b)) = X_.row(idx[b]);
        row_scale[static_cast<Eigen::Index>(b)] = w_[idx[b]] * scale;
    }
    const auto trace = forward_trace(arch_, params, Xb);
    Eigen::MatrixXd dscores(Xb.rows(), arch_.class_count);
    const double loss = softmax_nll(trace.scores, y_, rows, row_scale, grad ? &dscores : nullptr);
    if (grad) backward_trace(arch_, params, trace, dscores, *grad);
    return loss;
}

double WeightedNllObjective::early_stop_metric(const Eigen::VectorXd& params) const {
    const ScoredModel model{arch_, params};
    const auto preds = model.predict_batch(X_);
    double err = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] != y_[i]) err += w_[static_cast<Eigen::Index>(i)];
    return err / total_weight_;
}

WeightedNllObjective nll_objective(const Architecture& arch, const LabeledSample& s) {
    if (arch.class_count != s.class_count)
        throw std::invalid_argument("architecture class count does not match sample");
    return WeightedNllObjective(arch, s.features, s.labels, Eigen::VectorXd::Ones(s.size()));
}

WeightedNllObjective sum_of_risks_objective(const Architecture& arch, const LabeledSample& a,
                                            const LabeledSample& b) {
    if (a.class_count != b.class_count)
        throw std::invalid_argument("samples have different class counts");
    if (arch.class_count != a.class_count)
        throw std::invalid_argument("architecture class count does not match samples");
    if (a.dim() != b.dim()) throw std::invalid_argument("samples have different dims");
    Eigen::MatrixXd X(a.size() + b.size(), a.dim());
    X.topRows(a.size()) = a.features;
    X.bottomRows(b.size()) = b.features;
    std::vector<int> y = a.labels;
    y.insert(y.end(), b.labels.begin(), b.labels.end());
    Eigen::VectorXd w(X.rows());
    w.head(a.size()).setConstant(1.0 / static_cast<double>(a.size()));
    w.tail(b.size()).setConstant(1.0 / static_cast<double>(b.size()));
    return WeightedNllObjective(arch, std::move(X), std::move(y), std::move(w));
}

ScoredModel sgd_train(const SgdObjective& obj, const ScoredModel& init, const TrainConfig& cfg) {
    if (init.params.size() != obj.param_count())
        throw std::invalid_argument("initial model does not fit the objective");
    const Architecture arch = init.arch;
    auto fit = fit_with_restarts(
        obj,
        [&](int r) {
            return r == 0 ? init.params : init_params(arch, derive_seed(cfg.seed, 0x12e5ULL, r));
        },
        cfg);
    return ScoredModel{arch, std::move(fit.params)};
}

ScoredModel train_erm(const LabeledSample& s, const Architecture& arch, const TrainConfig& cfg) {
    const auto obj = nll_objective(arch, s);
    return sgd_train(obj, init_model(arch, derive_seed(cfg.seed, 0xe12aULL)), cfg);
}

// --- multiclass disagreement surrogate --------------------------------------

namespace {

// Per-row margin bookkeeping shared by value and gradient paths.
struct ZParts {
    double z = 0.0;
    double t1 = 0.0, t2 = 0.0;  // cross and diagonal exp terms
    int jf = 0, jg = 0, ji = 0;  // argmax of f, of g, of the sum
    int shift_side = -1;         // 0: max came from f, 1: from g (-1: unshifted)
    int shift_idx = 0;
};

ZParts z_parts(const Eigen::Ref<const Eigen::RowVectorXd>& sf,
               const Eigen::Ref<const Eigen::RowVectorXd>& sg, SurrogateConfig::Tau tau) {
    ZParts p;
    p.jf = argmax_least(sf.transpose());
    p.jg = argmax_least(sg.transpose());
    Eigen::RowVectorXd sum = sf + sg;
    p.ji = argmax_least(sum.transpose());
    double shift = 0.0;
    if (tau == SurrogateConfig::Tau::exp_shifted) {
        if (sf[p.jf] >= sg[p.jg]) {
            p.shift_side = 0;
            p.shift_idx = p.jf;
            shift = sf[p.jf];
        } else {
            p.shift_side = 1;
            p.shift_idx = p.jg;
            shift = sg[p.jg];
        }
    }
    p.t1 = std::exp(sg[p.jg] + sf[p.jf] - 2.0 * shift);
    p.t2 = std::exp(sg[p.ji] + sf[p.ji] - 2.0 * shift);
    p.z = p.t1 - p.t2;
    return p;
}

// d z / d f-scores and d z / d g-scores for one row, scaled by dz.
using StridedRow = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

void accumulate_z_grad(const ZParts& p, double dz, StridedRow dsf, StridedRow dsg) {
    dsf[p.jf] += dz * p.t1;
    dsg[p.jg] += dz * p.t1;
    dsf[p.ji] -= dz * p.t2;
    dsg[p.ji] -= dz * p.t2;
    if (p.shift_side == 0) dsf[p.shift_idx] -= dz * 2.0 * p.z;
    if (p.shift_side == 1) dsg[p.shift_idx] -= dz * 2.0 * p.z;
}

}  // namespace

double surrogate_z(const ScoredModel& f, const ScoredModel& g,
                   const Eigen::Ref<const Eigen::VectorXd>& x, const SurrogateConfig& cfg) {
    if (f.arch != g.arch) throw std::invalid_argument("scorer pair must share an architecture");
    const Eigen::RowVectorXd sf = f.scores(x).transpose();
    const Eigen::RowVectorXd sg = g.scores(x).transpose();
    return z_parts(sf, sg, cfg.tau).z;
}

double surrogate_loss(double z, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("surrogate target must be 0 or 1");
    const double t = -(2.0 * y - 1.0) * z;
    return (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) / kLn2;
}

double surrogate_loss_dz(double z, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("surrogate target must be 0 or 1");
    const double a = 2.0 * y - 1.0;
    const double t = -a * z;
    // dL/dz = -a * sigmoid(t) / ln 2
    const double sig = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    return -a * sig / kLn2;
}

SurrogatePairObjective::SurrogatePairObjective(Architecture arch, Eigen::MatrixXd X,
                                               std::vector<int> y01, Eigen::VectorXd w,
                                               SurrogateConfig scfg)
    : arch_(std::move(arch)), X_(std::move(X)), y01_(std::move(y01)), w_(std::move(w)), scfg_(scfg) {
    arch_.validate();
    if (X_.rows() == 0) throw std::invalid_argument("objective needs at least one row");
    if (static_cast<Eigen::Index>(y01_.size()) != X_.rows() || w_.size() != X_.rows())
        throw std::invalid_argument("targets/weights do not match rows");
    for (int y : y01_)
        if (y != 0 && y != 1) throw std::invalid_argument("surrogate targets must be 0 or 1");
    if ((w_.array() < 0.0).any()) throw std::invalid_argument("weights must be non-negative");
    total_weight_ = w_.sum();
    if (total_weight_ <= 0.0) throw std::invalid_argument("weights must not all be zero");
}

double SurrogatePairObjective::batch_loss(const Eigen::VectorXd& params, std::span<const int> idx,
                                          const StepInfo&, Eigen::VectorXd* grad) const {
    const int P = arch_.param_count();
    if (params.size() != 2 * P) throw std::invalid_argument("pair parameter vector length mismatch");
    const Eigen::VectorXd pf = params.head(P);
    const Eigen::VectorXd pg = params.tail(P);

    Eigen::MatrixXd Xb(static_cast<Eigen::Index>(idx.size()), X_.cols());
    Eigen::VectorXd row_scale(static_cast<Eigen::Index>(idx.size()));
    const double scale = static_cast<double>(X_.rows()) /
                         (static_cast<double>(idx.size()) * total_weight_);
    for (std::size_t b = 0; b < idx.size(); ++b) {
        Xb.row(static_cast<Eigen::Index>(b)) = X_.row(idx[b]);
        row_scale[static_cast<Eigen::Index>(b)] = w_[idx[b]] * scale;
    }

    const auto trace_f = forward_trace(arch_, pf, Xb);
    const auto trace_g = forward_trace(arch_, pg, Xb);
    Eigen::MatrixXd dsf, dsg;
    if (grad) {
        dsf = Eigen::MatrixXd::Zero(Xb.rows(), arch_.class_count);
        dsg = Eigen::MatrixXd::Zero(Xb.rows(), arch_.class_count);
    }
    double loss = 0.0;
    for (Eigen::Index b = 0; b < Xb.rows(); ++b) {
        const int y = y01_[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])];
        const auto p = z_parts(trace_f.scores.row(b), trace_g.scores.row(b), scfg_.tau);
        loss += row_scale[b] * surrogate_loss(p.z, y);
        if (grad) {
            const double dz = row_scale[b] * surrogate_loss_dz(p.z, y);
            accumulate_z_grad(p, dz, dsf.row(b), dsg.row(b));
        }
    }
    if (grad) {
        Eigen::VectorXd gf = Eigen::VectorXd::Zero(P);
        Eigen::VectorXd gg = Eigen::VectorXd::Zero(P);
        backward_trace(arch_, pf, trace_f, dsf, gf);
        backward_trace(arch_, pg, trace_g, dsg, gg);
        grad->head(P) += gf;
        grad->tail(P) += gg;
    }
    return loss;
}

double SurrogatePairObjective::early_stop_metric(const Eigen::VectorXd& params) const {
    const int P = arch_.param_count();
    const ScoredModel f{arch_, params.head(P)};
    const ScoredModel g{arch_, params.tail(P)};
    const auto pf = f.predict_batch(X_);
    const auto pg = g.predict_batch(X_);
    double err = 0.0;
    for (std::size_t i = 0; i < pf.size(); ++i) {
        const int indicator = pf[i] != pg[i] ? 1 : 0;
        if (indicator != y01_[i]) err += w_[static_cast<Eigen::Index>(i)];
    }
    return err / total_weight_;
}

// --- DANN -------------------------------------------------------------------

double dann_beta(double p, bool ease_in, bool subtract_one) {
    if (!ease_in) return 1.0;
    const double ramp = 2.0 / (1.0 + std::exp(-10.0 * p));
    return subtract_one ? ramp - 1.0 : ramp;
}

namespace {

// Joint objective over [model | adversary] parameters. batch_loss reports
// NLL + beta * domain loss but fills the gradient-reversal update direction:
// the trunk descends NLL - beta * domain loss while the adversary descends
// beta * domain loss. The scalar probes below expose both halves for
// finite-difference checks.
class DannObjective : public SgdObjective {
public:
    DannObjective(Architecture model_arch, Architecture adv_arch, Eigen::MatrixXd Xs,
                  std::vector<int> ys, Eigen::MatrixXd Xt, bool ease_in, bool subtract_one)
        : model_arch_(std::move(model_arch)),
          adv_arch_(std::move(adv_arch)),
          Xs_(std::move(Xs)),
          ys_(std::move(ys)),
          Xt_(std::move(Xt)),
          ease_in_(ease_in),
          subtract_one_(subtract_one) {}

    int sample_count() const override {
        return static_cast<int>(std::max(Xs_.rows(), Xt_.rows()));
    }
    int param_count() const override {
        return model_arch_.param_count() + adv_arch_.param_count();
    }

    double batch_loss(const Eigen::VectorXd& params, std::span<const int> idx, const StepInfo& info,
                      Eigen::VectorXd* grad) const override {
        return loss_impl(params, idx, dann_beta(info.progress, ease_in_, subtract_one_), grad,
                         /*reversal=*/true, nullptr);
    }

    double final_objective(const Eigen::VectorXd& params, const StepInfo&) const override {
        // Restarts trigger on divergence only; rank leftover restarts by the
        // source fit.
        const ScoredModel model{model_arch_, params.head(model_arch_.param_count())};
        const auto obj = WeightedNllObjective(model_arch_, Xs_, ys_, Eigen::VectorXd::Ones(Xs_.rows()));
        return obj.batch_loss(model.params, all_indices(static_cast<int>(Xs_.rows())), StepInfo{},
                              nullptr);
    }

    // Scalar halves at fixed beta (for finite-difference checks): the model
    // half is NLL - beta * domain loss, the adversary half beta * domain loss.
    double model_scalar(const Eigen::VectorXd& params, std::span<const int> idx, double beta,
                        Eigen::VectorXd* grad) const {
        double domain = 0.0;
        // loss_impl reports nll + beta*domain; the model half descends
        // nll - beta*domain.
        const double combined = loss_impl(params, idx, beta, grad, /*reversal=*/true, &domain);
        return combined - 2.0 * beta * domain;
    }
    double adversary_scalar(const Eigen::VectorXd& params, std::span<const int> idx, double beta) const {
        double domain = 0.0;
        loss_impl(params, idx, beta, nullptr, true, &domain);
        return beta * domain;
    }

    // Balanced domain-classification accuracy of the adversary.
    double adversary_accuracy(const Eigen::VectorXd& params) const {
        const ScoredModel model{model_arch_, params.head(model_arch_.param_count())};
        const ScoredModel adv{adv_arch_, params.tail(adv_arch_.param_count())};
        const auto split = split_head(model);
        const auto preds_s = adv.predict_batch(split.feature_map_batch(Xs_));
        const auto preds_t = adv.predict_batch(split.feature_map_batch(Xt_));
        double acc_s = 0.0, acc_t = 0.0;
        for (int p : preds_s) acc_s += (p == 0) ? 1.0 : 0.0;
        for (int p : preds_t) acc_t += (p == 1) ? 1.0 : 0.0;
        return 0.5 * (acc_s / static_cast<double>(preds_s.size()) +
                      acc_t / static_cast<double>(preds_t.size()));
    }

    const Architecture& model_arch() const { return model_arch_; }
    const Architecture& adv_arch() const { return adv_arch_; }

private:
    // Shared forward/backward. Returns nll + beta * domain. If grad is given,
    // fills the reversal direction; domain_out receives the domain loss.
    double loss_impl(const Eigen::VectorXd& params, std::span<const int> idx, double beta,
                     Eigen::VectorXd* grad, bool /*reversal*/, double* domain_out) const {
        const int Pm = model_arch_.param_count();
        const int Pa = adv_arch_.param_count();
        if (params.size() != Pm + Pa) throw std::invalid_argument("parameter vector length mismatch");
        const Eigen::VectorXd pm = params.head(Pm);
        const Eigen::VectorXd pa = params.tail(Pa);
        const int ns = static_cast<int>(Xs_.rows());
        const int nt = static_cast<int>(Xt_.rows());

        Eigen::MatrixXd Xsb(static_cast<Eigen::Index>(idx.size()), Xs_.cols());
        Eigen::MatrixXd Xtb(static_cast<Eigen::Index>(idx.size()), Xt_.cols());
        std::vector<int> ysb(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) {
            Xsb.row(static_cast<Eigen::Index>(b)) = Xs_.row(idx[b] % ns);
            Xtb.row(static_cast<Eigen::Index>(b)) = Xt_.row(idx[b] % nt);
            ysb[b] = ys_[static_cast<std::size_t>(idx[b] % ns)];
        }
        const auto nb = static_cast<double>(idx.size());

        const auto trace_s = forward_trace(model_arch_, pm, Xsb);
        const auto trace_t = forward_trace(model_arch_, pm, Xtb);
        const Eigen::MatrixXd rep_s =
            model_arch_.kind == Architecture::Kind::linear ? Xsb : trace_s.act.back();
        const Eigen::MatrixXd rep_t =
            model_arch_.kind == Architecture::Kind::linear ? Xtb : trace_t.act.back();

        // Label loss: plain mean NLL over the source half.
        Eigen::MatrixXd dscores_s(Xsb.rows(), model_arch_.class_count);
        double nll = 0.0;
        {
            const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(Xsb.rows(), 1.0 / nb);
            nll = softmax_nll(trace_s.scores, ysb, all_indices(static_cast<int>(idx.size())), uniform,
                              grad ? &dscores_s : nullptr);
        }

        // Domain loss: balanced binary NLL, source -> 0, target -> 1.
        const auto adv_trace_s = forward_trace(adv_arch_, pa, rep_s);
        const auto adv_trace_t = forward_trace(adv_arch_, pa, rep_t);
        double domain = 0.0;
        Eigen::MatrixXd dadv_s(rep_s.rows(), 2), dadv_t(rep_t.rows(), 2);
        {
            const std::vector<int> zeros(idx.size(), 0), ones(idx.size(), 1);
            const Eigen::VectorXd half = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(idx.size()),
                                                                   0.5 / nb);
            domain += softmax_nll(adv_trace_s.scores, zeros, all_indices(static_cast<int>(idx.size())),
                                  half, grad ? &dadv_s : nullptr);
            domain += softmax_nll(adv_trace_t.scores, ones, all_indices(static_cast<int>(idx.size())),
                                  half, grad ? &dadv_t : nullptr);
        }
        if (domain_out) *domain_out = domain;

        if (grad) {
            Eigen::VectorXd gm = Eigen::VectorXd::Zero(Pm);
            backward_trace(model_arch_, pm, trace_s, dscores_s, gm);

            Eigen::VectorXd ga = Eigen::VectorXd::Zero(Pa);
            Eigen::MatrixXd drep_s, drep_t;
            backward_trace(adv_arch_, pa, adv_trace_s, dadv_s, ga, &drep_s);
            backward_trace(adv_arch_, pa, adv_trace_t, dadv_t, ga, &drep_t);

            if (model_arch_.kind == Architecture::Kind::mlp) {
                // Gradient reversal: the trunk ascends the domain loss.
                Eigen::VectorXd gm_domain = Eigen::VectorXd::Zero(Pm);
                backward_from_representation(model_arch_, pm, trace_s, drep_s, gm_domain);
                backward_from_representation(model_arch_, pm, trace_t, drep_t, gm_domain);
                gm -= beta * gm_domain;
            }
            grad->head(Pm) += gm;
            grad->tail(Pa) += beta * ga;
        }
        return nll + beta * domain;
    }

    Architecture model_arch_;
    Architecture adv_arch_;
    Eigen::MatrixXd Xs_;
    std::vector<int> ys_;
    Eigen::MatrixXd Xt_;
    bool ease_in_;
    bool subtract_one_;
};

}  // namespace

namespace {

void validate_dann_shapes(const LabeledSample& source, const UnlabeledSample& target_features,
                          const Architecture& model_arch, const Architecture& adv_arch) {
    model_arch.validate();
    adv_arch.validate();
    if (source.dim() != target_features.dim())
        throw std::invalid_argument("source/target dims differ");
    if (model_arch.kind != Architecture::Kind::mlp)
        throw std::invalid_argument("adversarial alignment needs an mlp model (no representation otherwise)");
    if (model_arch.input_dim != source.dim())
        throw std::invalid_argument("model input dim does not match data");
    if (model_arch.class_count != source.class_count)
        throw std::invalid_argument("model class count does not match source");
    if (adv_arch.class_count != 2)
        throw std::invalid_argument("adversary must be a binary scorer");
    const auto widths = model_arch.widths();
    if (adv_arch.input_dim != widths[widths.size() - 2])
        throw std::invalid_argument("adversary input dim must equal the representation dim");
}

}  // namespace

DannResult dann_train(const LabeledSample& source, const UnlabeledSample& target_features,
                      const DannConfig& cfg) {
    cfg.base.validate();
    validate_dann_shapes(source, target_features, cfg.model_arch, cfg.adversary_arch);

    const DannObjective obj(cfg.model_arch, cfg.adversary_arch, source.features, source.labels,
                            target_features.features, cfg.ease_in, cfg.subtract_one_beta);
    const int Pm = cfg.model_arch.param_count();
    const int Pa = cfg.adversary_arch.param_count();

    int last_diverged_epoch = -1;
    for (int r = 0; r < cfg.base.restarts; ++r) {
        Eigen::VectorXd init(Pm + Pa);
        init.head(Pm) = init_params(cfg.model_arch, derive_seed(cfg.base.seed, 0xda1ULL, r));
        init.tail(Pa) = init_params(cfg.adversary_arch, derive_seed(cfg.base.seed, 0xad2ULL, r));
        auto run = sgd_minimize(obj, std::move(init), cfg.base, derive_seed(cfg.base.seed, 0xf17ULL, r));
        if (run.diverged) {
            last_diverged_epoch = run.diverged_epoch;
            continue;
        }
        DannResult result{ScoredModel{cfg.model_arch, run.params.head(Pm)},
                          obj.adversary_accuracy(run.params), r + 1};
        return result;
    }
    throw TrainingDiverged("adversarial training diverged on every restart (last at epoch " +
                           std::to_string(last_diverged_epoch) + ")");
}

DannProbe dann_probe(const LabeledSample& source, const UnlabeledSample& target_features,
                     const Architecture& model_arch, const Architecture& adversary_arch,
                     const Eigen::VectorXd& model_params, const Eigen::VectorXd& adversary_params,
                     double beta) {
    validate_dann_shapes(source, target_features, model_arch, adversary_arch);
    const DannObjective obj(model_arch, adversary_arch, source.features, source.labels,
                            target_features.features, true, false);
    const int Pm = model_arch.param_count();
    const int Pa = adversary_arch.param_count();
    Eigen::VectorXd params(Pm + Pa);
    params.head(Pm) = model_params;
    params.tail(Pa) = adversary_params;
    const auto idx = all_indices(obj.sample_count());

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(Pm + Pa);
    DannProbe probe;
    probe.model_scalar = obj.model_scalar(params, idx, beta, &grad);
    probe.adversary_scalar = obj.adversary_scalar(params, idx, beta);
    probe.model_grad = grad.head(Pm);
    probe.adversary_grad = grad.tail(Pa);
    return probe;
}

}  // namespace pbda
