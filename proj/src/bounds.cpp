#include "pbda/bounds.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "pbda/errors.hpp"
#include "pbda/rng.hpp"

namespace pbda {

double pinsker_penalty(double kl_nats, int m, double delta) {
    if (!(kl_nats >= 0.0)) throw std::invalid_argument("kl_nats must be >= 0");
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
    return std::sqrt((kl_nats + std::log(std::sqrt(4.0 * m)) - std::log(delta)) /
                     (2.0 * static_cast<double>(m)));
}

double mc_divergence_penalty(int k, double delta) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
    return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(k)));
}

AdaptabilityEstimate adaptability_tilde_ub(const LabeledSample& s, const LabeledSample& t,
                                           const Architecture& arch, const TrainConfig& cfg) {
    const auto obj = sum_of_risks_objective(arch, s, t);
    auto fit = fit_with_restarts(
        obj, [&](int r) { return init_params(arch, derive_seed(cfg.seed, 0x0e7aULL, r)); }, cfg);
    AdaptabilityEstimate out;
    out.eta = ScoredModel{arch, std::move(fit.params)};
    out.value = empirical_risk(out.eta, s) + empirical_risk(out.eta, t);
    return out;
}

AdaptabilityEstimate adaptability_lambda_ub(const LabeledSample& s, const LabeledSample& t,
                                            const Architecture& arch, const TrainConfig& cfg,
                                            double delta, double split_fraction, std::uint64_t seed) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
    const auto [s_train, s_hold] = random_split(s, split_fraction, derive_seed(seed, 0x51ULL));
    const auto [t_train, t_hold] = random_split(t, split_fraction, derive_seed(seed, 0x52ULL));
    TrainConfig fit_cfg = cfg;
    fit_cfg.seed = derive_seed(seed, 0x53ULL);
    auto est = adaptability_tilde_ub(s_train, t_train, arch, fit_cfg);
    const double hoeffding =
        std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(s_hold.size()))) +
        std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(t_hold.size())));
    est.value = empirical_risk(est.eta, s_hold) + empirical_risk(est.eta, t_hold) + hoeffding;
    return est;
}

AdaptabilityEstimate adaptability_mu(const LabeledSample& s, const LabeledSample& t,
                                     const ScoredModel& mu, const TrainConfig& cfg) {
    if (mu.arch.kind != Architecture::Kind::mlp)
        throw std::invalid_argument("feature-frozen adaptability needs an mlp (no representation otherwise)");
    const auto split = split_head(mu);
    const auto rs =
        make_labeled(split.feature_map_batch(s.features), s.labels, s.class_count, s.id + "|rep");
    const auto rt =
        make_labeled(split.feature_map_batch(t.features), t.labels, t.class_count, t.id + "|rep");
    const auto head_arch = Architecture::linear(split.representation_dim(), mu.arch.class_count);
    const auto obj = sum_of_risks_objective(head_arch, rs, rt);
    auto fit = fit_with_restarts(
        obj, [&](int r) { return init_params(head_arch, derive_seed(cfg.seed, 0x6eadULL, r)); }, cfg);
    AdaptabilityEstimate out;
    out.eta = with_head_params(mu, fit.params);
    out.value = empirical_risk(out.eta, s) + empirical_risk(out.eta, t);
    return out;
}

void BoundReport::finalize() {
    total = adaptability + source_gibbs_risk + divergence_term + complexity_penalty + rho;
}

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void check_prior_provenance(const GaussianGibbs& prior, const AdaptationTask& task) {
    if (!prior.trained_on.empty() && prior.trained_on == task.target_features.id)
        throw IllegalPrior("prior provenance '" + prior.trained_on + "' names the target sample");
}

// Adaptability term: measured with target labels when available, otherwise a
// declared assumption. `mu` switches to the feature-frozen estimator.
double resolve_adaptability(const AdaptationTask& task, const Architecture& arch,
                            const AssemblyConfig& cfg, const ScoredModel* mu,
                            std::vector<std::string>& caveats) {
    if (task.target_labels) {
        TrainConfig tc = cfg.witness_cfg;
        tc.seed = derive_seed(cfg.seed, 0x0adaULL);
        const auto t = task.labeled_target();
        const double value = mu ? adaptability_mu(task.source, t, *mu, tc).value
                                : adaptability_tilde_ub(task.source, t, arch, tc).value;
        caveats.push_back("adaptability measured with target labels; trained upper estimate of the min");
        return value;
    }
    if (!cfg.assumed_adaptability)
        throw std::invalid_argument("target is unlabeled: declare assumed_adaptability to assemble");
    caveats.push_back("adaptability assumed, not measured: " + fmt_g(*cfg.assumed_adaptability));
    return *cfg.assumed_adaptability;
}

// Flatness term rho: measured on both domains with target labels, otherwise a
// declared assumption covering both.
double resolve_rho(const GaussianGibbs& q, const AdaptationTask& task, const AssemblyConfig& cfg,
                   std::vector<std::string>& caveats) {
    if (task.target_labels) {
        const double rho_s = flatness_rho(q, task.source, cfg.k, derive_seed(cfg.seed, 0xf1aULL));
        const double rho_t =
            flatness_rho(q, task.labeled_target(), cfg.k, derive_seed(cfg.seed, 0xf1bULL));
        caveats.push_back("flatness measured with target labels (Monte Carlo, k=" +
                          std::to_string(cfg.k) + ")");
        return rho_s + rho_t;
    }
    if (!cfg.assumed_rho)
        throw std::invalid_argument("target is unlabeled: declare assumed_rho to assemble");
    caveats.push_back("flatness assumed, not measured: " + fmt_g(*cfg.assumed_rho));
    return *cfg.assumed_rho;
}

void note_divergence_caveats(const DivergenceEstimate& est, std::vector<std::string>& caveats) {
    caveats.push_back("divergence is a trained lower estimate of the supremum");
    if (est.clamped) caveats.push_back("divergence clamped into [0, 1]");
    if (est.tie_count > 0)
        caveats.push_back("score ties during 0/1 evaluation: " + std::to_string(est.tie_count));
}

}  // namespace

BoundReport assemble_baseline_bound(const GaussianGibbs& q, const GaussianGibbs& prior,
                                    const AdaptationTask& task, DivergenceChoice choice,
                                    const AssemblyConfig& cfg) {
    check_prior_provenance(prior, task);
    BoundReport rep;
    rep.kind = choice == DivergenceChoice::model_independent ? "baseline_independent"
                                                             : "baseline_dependent";
    rep.m = task.target_features.size();
    rep.delta = cfg.delta;
    rep.adaptability = resolve_adaptability(task, q.arch, cfg, nullptr, rep.caveats);
    rep.source_gibbs_risk =
        gibbs_risk_mc(q, task.source, cfg.k, derive_seed(cfg.seed, 0x0617ULL)).estimate;

    const bool split_delta = cfg.strict_delta && choice == DivergenceChoice::model_dependent;
    const double delta_div = split_delta ? cfg.delta / 2.0 : cfg.delta;
    const double delta_pb = split_delta ? cfg.delta / 2.0 : cfg.delta;

    TrainConfig wc = cfg.witness_cfg;
    wc.seed = derive_seed(cfg.seed, 0x0d1fULL);
    const auto s_x = strip_labels(task.source);
    if (choice == DivergenceChoice::model_independent) {
        rep.divergence = hdh_divergence(s_x, task.target_features, q.arch, wc, cfg.surrogate);
        rep.divergence_term = rep.divergence.value;
        rep.divergence_mc_penalty = 0.0;
    } else {
        const auto mc = mc_divergence_over_gibbs(q, s_x, task.target_features, cfg.k, delta_div, wc);
        rep.divergence_term = mc.value;
        rep.divergence_mc_penalty = mc.penalty;
        rep.divergence.method = DivergenceEstimate::Method::mc_over_gibbs;
        rep.divergence.value = mc.value;
        rep.divergence.witness = "posterior-draw average, k=" + std::to_string(cfg.k);
        rep.divergence.tie_count = mc.tie_count;
        if (mc.vacuous) rep.caveats.push_back("MC divergence exceeds 1 (vacuous at this draw count)");
        rep.caveats.push_back(split_delta
                                  ? "delta split across MC divergence and complexity penalties"
                                  : "delta reused by MC divergence and complexity penalties (no union bound)");
    }
    note_divergence_caveats(rep.divergence, rep.caveats);

    rep.kl_nats = kl_divergence(q, prior);
    rep.complexity_penalty = pinsker_penalty(rep.kl_nats, rep.m, delta_pb);
    rep.rho = 0.0;
    rep.finalize();
    return rep;
}

BoundReport assemble_flatness_bound(const GaussianGibbs& q, const GaussianGibbs& prior,
                                    const AdaptationTask& task, const AssemblyConfig& cfg) {
    check_prior_provenance(prior, task);
    BoundReport rep;
    rep.kind = "flatness";
    rep.m = task.target_features.size();
    rep.delta = cfg.delta;
    rep.adaptability = resolve_adaptability(task, q.arch, cfg, nullptr, rep.caveats);
    rep.source_gibbs_risk =
        gibbs_risk_mc(q, task.source, cfg.k, derive_seed(cfg.seed, 0x0617ULL)).estimate;

    TrainConfig wc = cfg.witness_cfg;
    wc.seed = derive_seed(cfg.seed, 0x0d1fULL);
    rep.divergence = h_delta_h_divergence(summary(q), strip_labels(task.source), task.target_features, wc);
    rep.divergence_term = rep.divergence.value;
    rep.divergence_mc_penalty = 0.0;
    note_divergence_caveats(rep.divergence, rep.caveats);

    rep.rho = resolve_rho(q, task, cfg, rep.caveats);
    rep.kl_nats = kl_divergence(q, prior);
    rep.complexity_penalty = pinsker_penalty(rep.kl_nats, rep.m, cfg.delta);
    rep.finalize();
    return rep;
}

BoundReport assemble_restricted_bound(const GaussianGibbs& q, const GaussianGibbs& prior,
                                      const AdaptationTask& task, RestrictedVariant variant,
                                      const AssemblyConfig& cfg) {
    check_prior_provenance(prior, task);
    const auto mu = summary(q);
    if (mu.arch.kind != Architecture::Kind::mlp)
        throw std::invalid_argument("restricted assembly needs an mlp summary");

    BoundReport rep;
    rep.kind = variant == RestrictedVariant::pair ? "restricted_pair" : "restricted_anchored";
    rep.m = task.target_features.size();
    rep.delta = cfg.delta;
    rep.adaptability = resolve_adaptability(task, q.arch, cfg, &mu, rep.caveats);
    rep.source_gibbs_risk =
        gibbs_risk_mc(q, task.source, cfg.k, derive_seed(cfg.seed, 0x0617ULL)).estimate;

    TrainConfig wc = cfg.witness_cfg;
    wc.seed = derive_seed(cfg.seed, 0x0d1fULL);
    rep.divergence =
        restricted_divergence(mu, strip_labels(task.source), task.target_features, variant, wc,
                              cfg.surrogate);
    rep.divergence_term = rep.divergence.value;
    rep.divergence_mc_penalty = 0.0;
    note_divergence_caveats(rep.divergence, rep.caveats);

    rep.rho = resolve_rho(q, task, cfg, rep.caveats);
    rep.kl_nats = kl_divergence(q, prior);
    rep.complexity_penalty = pinsker_penalty(rep.kl_nats, rep.m, cfg.delta);
    rep.finalize();
    return rep;
}

}  // namespace pbda
