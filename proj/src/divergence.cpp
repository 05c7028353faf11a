#include "pbda/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pbda/errors.hpp"
#include "pbda/rng.hpp"

namespace pbda {

namespace {

std::string arch_string(const Architecture& arch) {
    std::ostringstream os;
    if (arch.kind == Architecture::Kind::linear) {
        os << "linear(" << arch.input_dim << "->" << arch.class_count << ")";
    } else {
        os << "mlp(" << arch.input_dim;
        for (int h : arch.hidden_dims) os << "-" << h;
        os << "->" << arch.class_count << ")";
    }
    return os.str();
}

long count_ties(const Eigen::MatrixXd& scores) {
    long ties = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double mx = scores.row(i).maxCoeff();
        int hits = 0;
        for (Eigen::Index j = 0; j < scores.cols(); ++j)
            if (scores(i, j) == mx) ++hits;
        if (hits > 1) ++ties;
    }
    return ties;
}

struct BranchOutcome {
    double value = 0.0;
    long tie_count = 0;
    std::string witness;
};

// One pair-witness branch: train (f, g) to disagree where target 1 and agree
// where target 0, then score 1 - [01 risk sum].
BranchOutcome surrogate_branch(const Eigen::MatrixXd& Xs, const Eigen::MatrixXd& Xt, int ys, int yt,
                               const Architecture& arch, const TrainConfig& cfg,
                               const SurrogateConfig& scfg, std::uint64_t branch_tag) {
    const auto ns = Xs.rows();
    const auto nt = Xt.rows();
    Eigen::MatrixXd X(ns + nt, Xs.cols());
    X.topRows(ns) = Xs;
    X.bottomRows(nt) = Xt;
    std::vector<int> y(static_cast<std::size_t>(ns + nt));
    std::fill(y.begin(), y.begin() + ns, ys);
    std::fill(y.begin() + ns, y.end(), yt);
    Eigen::VectorXd w(ns + nt);
    w.head(ns).setConstant(1.0 / static_cast<double>(ns));
    w.tail(nt).setConstant(1.0 / static_cast<double>(nt));

    const SurrogatePairObjective obj(arch, std::move(X), std::move(y), std::move(w), scfg);
    TrainConfig branch_cfg = cfg;
    branch_cfg.seed = derive_seed(cfg.seed, branch_tag);
    const int P = arch.param_count();
    auto fit = fit_with_restarts(
        obj,
        [&](int r) {
            Eigen::VectorXd init(2 * P);
            init.head(P) = init_params(arch, derive_seed(branch_cfg.seed, 0xf00dULL, r));
            init.tail(P) = init_params(arch, derive_seed(branch_cfg.seed, 0x600dULL, r));
            return init;
        },
        branch_cfg);

    const ScoredModel f{arch, fit.params.head(P)};
    const ScoredModel g{arch, fit.params.tail(P)};
    const auto scores_f_s = f.scores_batch(Xs);
    const auto scores_g_s = g.scores_batch(Xs);
    const auto scores_f_t = f.scores_batch(Xt);
    const auto scores_g_t = g.scores_batch(Xt);

    auto disag_rate = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        long d = 0;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (argmax_least(a.row(i).transpose()) != argmax_least(b.row(i).transpose())) ++d;
        return static_cast<double>(d) / static_cast<double>(a.rows());
    };
    const double ds = disag_rate(scores_f_s, scores_g_s);
    const double dt = disag_rate(scores_f_t, scores_g_t);
    // risk on s-rows (target ys) plus risk on t-rows (target yt)
    const double risk_s = ys == 1 ? 1.0 - ds : ds;
    const double risk_t = yt == 1 ? 1.0 - dt : dt;

    BranchOutcome out;
    out.value = 1.0 - (risk_s + risk_t);
    out.tie_count =
        count_ties(scores_f_s) + count_ties(scores_g_s) + count_ties(scores_f_t) + count_ties(scores_g_t);
    out.witness = "pair " + arch_string(arch);
    return out;
}

}  // namespace

DivergenceEstimate hdh_divergence(const UnlabeledSample& s, const UnlabeledSample& t,
                                  const Architecture& witness_arch, const TrainConfig& cfg,
                                  const SurrogateConfig& scfg) {
    if (s.dim() != t.dim()) throw std::invalid_argument("samples have different dims");
    if (witness_arch.input_dim != s.dim())
        throw std::invalid_argument("witness architecture does not match sample dim");

    const auto pq = surrogate_branch(s.features, t.features, 1, 0, witness_arch, cfg, scfg, 0x9aULL);
    const auto uv = surrogate_branch(s.features, t.features, 0, 1, witness_arch, cfg, scfg, 0x9bULL);

    DivergenceEstimate est;
    est.method = DivergenceEstimate::Method::hdh_surrogate;
    est.value_pq = pq.value;
    est.value_uv = uv.value;
    est.branch = pq.value >= uv.value ? DivergenceEstimate::Branch::pq : DivergenceEstimate::Branch::uv;
    const auto& won = pq.value >= uv.value ? pq : uv;
    est.witness = won.witness;
    est.tie_count = pq.tie_count + uv.tie_count;
    est.value = std::max(pq.value, uv.value);
    if (est.value < 0.0) {
        est.value = 0.0;
        est.clamped = true;
    } else if (est.value > 1.0) {
        est.value = 1.0;
        est.clamped = true;
    }
    return est;
}

int SecondBestLabeler::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd s = base.scores(x);
    const int top = argmax_least(s);
    int second = top == 0 ? 1 : 0;
    for (int i = 0; i < s.size(); ++i) {
        if (i == top) continue;
        if (s[i] > s[second]) second = i;
    }
    return second;
}

std::vector<int> SecondBestLabeler::batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    const auto S = base.scores_batch(X);
    std::vector<int> out(static_cast<std::size_t>(S.rows()));
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
        const Eigen::VectorXd row = S.row(r).transpose();
        const int top = argmax_least(row);
        int second = top == 0 ? 1 : 0;
        for (int i = 0; i < row.size(); ++i) {
            if (i == top) continue;
            if (row[i] > row[second]) second = i;
        }
        out[static_cast<std::size_t>(r)] = second;
    }
    return out;
}

SecondBestLabeler second_best_labeler(const ScoredModel& h) { return SecondBestLabeler{h}; }

namespace {

// One anchored branch: train a witness to match `s_labels` on s-rows and
// `t_labels` on t-rows (sum-of-risks NLL), then score
// 1 - [E_s 1[phi != s_labels] + E_t 1[phi != t_labels]].
BranchOutcome anchored_branch(const Eigen::MatrixXd& Xs, const std::vector<int>& s_labels,
                              const Eigen::MatrixXd& Xt, const std::vector<int>& t_labels,
                              const Architecture& arch, const TrainConfig& cfg,
                              std::uint64_t branch_tag) {
    const auto ns = Xs.rows();
    const auto nt = Xt.rows();
    Eigen::MatrixXd X(ns + nt, Xs.cols());
    X.topRows(ns) = Xs;
    X.bottomRows(nt) = Xt;
    std::vector<int> y = s_labels;
    y.insert(y.end(), t_labels.begin(), t_labels.end());
    Eigen::VectorXd w(ns + nt);
    w.head(ns).setConstant(1.0 / static_cast<double>(ns));
    w.tail(nt).setConstant(1.0 / static_cast<double>(nt));

    const WeightedNllObjective obj(arch, std::move(X), std::move(y), std::move(w));
    TrainConfig branch_cfg = cfg;
    branch_cfg.seed = derive_seed(cfg.seed, branch_tag);
    auto fit = fit_with_restarts(
        obj, [&](int r) { return init_params(arch, derive_seed(branch_cfg.seed, 0x0b11ULL, r)); },
        branch_cfg);

    const ScoredModel phi{arch, fit.params};
    const auto scores_s = phi.scores_batch(Xs);
    const auto scores_t = phi.scores_batch(Xt);
    auto mismatch = [](const Eigen::MatrixXd& scores, const std::vector<int>& want) {
        long bad = 0;
        for (Eigen::Index i = 0; i < scores.rows(); ++i)
            if (argmax_least(scores.row(i).transpose()) != want[static_cast<std::size_t>(i)]) ++bad;
        return static_cast<double>(bad) / static_cast<double>(scores.rows());
    };

    BranchOutcome out;
    out.value = 1.0 - (mismatch(scores_s, s_labels) + mismatch(scores_t, t_labels));
    out.tie_count = count_ties(scores_s) + count_ties(scores_t);
    out.witness = "anchored " + arch_string(arch);
    return out;
}

}  // namespace

DivergenceEstimate h_delta_h_divergence(const ScoredModel& h, const UnlabeledSample& s,
                                        const UnlabeledSample& t, const TrainConfig& cfg,
                                        const std::optional<Architecture>& witness_arch) {
    if (s.dim() != t.dim()) throw std::invalid_argument("samples have different dims");
    if (h.arch.input_dim != s.dim()) throw std::invalid_argument("anchor model does not match sample dim");
    const Architecture arch = witness_arch.value_or(h.arch);
    if (arch.input_dim != h.arch.input_dim || arch.class_count != h.arch.class_count)
        throw std::invalid_argument("witness architecture must share the anchor's interface");

    const auto alt = second_best_labeler(h);
    const auto h_on_s = h.predict_batch(s.features);
    const auto h_on_t = h.predict_batch(t.features);
    const auto alt_on_s = alt.batch(s.features);
    const auto alt_on_t = alt.batch(t.features);

    // Branch 1: match the alternative labels on s, the anchor's on t.
    const auto pq = anchored_branch(s.features, alt_on_s, t.features, h_on_t, arch, cfg, 0xa1ULL);
    // Branch 2: match the anchor's labels on s, the alternative's on t.
    const auto uv = anchored_branch(s.features, h_on_s, t.features, alt_on_t, arch, cfg, 0xa2ULL);

    DivergenceEstimate est;
    est.method = DivergenceEstimate::Method::hdeltah_erm;
    est.value_pq = pq.value;
    est.value_uv = uv.value;
    est.branch = pq.value >= uv.value ? DivergenceEstimate::Branch::pq : DivergenceEstimate::Branch::uv;
    est.witness = (pq.value >= uv.value ? pq : uv).witness;
    est.tie_count = pq.tie_count + uv.tie_count;
    est.value = std::max(pq.value, uv.value);
    if (est.value < 0.0) {
        est.value = 0.0;
        est.clamped = true;
    } else if (est.value > 1.0) {
        est.value = 1.0;
        est.clamped = true;
    }
    return est;
}

McDivergence mc_divergence_over_gibbs(const GaussianGibbs& q, const UnlabeledSample& s,
                                      const UnlabeledSample& t, int k, double delta,
                                      const TrainConfig& cfg) {
    if (k < 1) throw std::invalid_argument("draw count must be >= 1");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must be in (0, 1)");
    McDivergence out;
    out.per_draw.reserve(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const auto h = sample_model(q, derive_seed(cfg.seed, 0x3cd1ULL, i));
        TrainConfig draw_cfg = cfg;
        draw_cfg.seed = derive_seed(cfg.seed, 0x3cd2ULL, i);
        const auto est = h_delta_h_divergence(h, s, t, draw_cfg);
        out.per_draw.push_back(est.value);
        out.tie_count += est.tie_count;
        sum += est.value;
    }
    out.mean_term = sum / static_cast<double>(k);
    out.penalty = std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(k)));
    out.value = out.mean_term + out.penalty;
    out.vacuous = out.value > 1.0;
    return out;
}

DivergenceEstimate restricted_divergence(const ScoredModel& mu, const UnlabeledSample& s,
                                         const UnlabeledSample& t, RestrictedVariant variant,
                                         const TrainConfig& cfg, const SurrogateConfig& scfg) {
    if (mu.arch.kind != Architecture::Kind::mlp)
        throw std::invalid_argument("restricted divergence needs an mlp (no representation otherwise)");
    const auto split = split_head(mu);
    const auto rep_s = make_unlabeled(split.feature_map_batch(s.features), s.id + "|rep");
    const auto rep_t = make_unlabeled(split.feature_map_batch(t.features), t.id + "|rep");
    const auto head_arch = Architecture::linear(split.representation_dim(), mu.arch.class_count);

    DivergenceEstimate est;
    if (variant == RestrictedVariant::pair) {
        est = hdh_divergence(rep_s, rep_t, head_arch, cfg, scfg);
    } else {
        est = h_delta_h_divergence(split.head, rep_s, rep_t, cfg, head_arch);
    }
    est.method = DivergenceEstimate::Method::restricted;
    est.witness = "frozen-representation " + est.witness;
    return est;
}

PairGapTerms pair_gap_terms(const GaussianGibbs& q, const LabeledSample& s, const LabeledSample& t,
                            int k, double delta, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("draw count must be >= 1");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must be in (0, 1)");
    double dis_s = 0.0, dis_t = 0.0, err_s = 0.0, err_t = 0.0;
    for (int i = 0; i < k; ++i) {
        const auto a = sample_model(q, derive_seed(seed, 0x6e1ULL, i));
        const auto b = sample_model(q, derive_seed(seed, 0x6e2ULL, i));
        auto accumulate = [&](const LabeledSample& sample, double& dis, double& err) {
            const auto pa = a.predict_batch(sample.features);
            const auto pb = b.predict_batch(sample.features);
            long d = 0, e = 0;
            for (std::size_t r = 0; r < pa.size(); ++r) {
                if (pa[r] != pb[r]) ++d;
                if (pa[r] != sample.labels[r] && pb[r] != sample.labels[r]) ++e;
            }
            dis += static_cast<double>(d) / static_cast<double>(pa.size());
            err += static_cast<double>(e) / static_cast<double>(pa.size());
        };
        accumulate(s, dis_s, err_s);
        accumulate(t, dis_t, err_t);
    }
    PairGapTerms out;
    out.disagreement_gap = std::abs(dis_s - dis_t) / static_cast<double>(k);
    out.joint_error_gap = std::abs(err_s - err_t) / static_cast<double>(k);
    out.penalty = std::sqrt(2.0 * std::log(2.0 / delta) / static_cast<double>(k));
    return out;
}

}  // namespace pbda
