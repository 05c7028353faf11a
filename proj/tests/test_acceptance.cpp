// Acceptance gate: ten end-to-end checks, one pass/fail line each. Each check
// pins its own tolerances and time limit in code; the binary exits with the
// number of failed checks. argv[1] must name the CLI binary (used by the
// determinism check).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pbda/bounds.hpp"
#include "pbda/dataset.hpp"
#include "pbda/divergence.hpp"
#include "pbda/errors.hpp"
#include "pbda/experiment.hpp"
#include "pbda/finite.hpp"
#include "pbda/gibbs.hpp"
#include "pbda/model.hpp"
#include "pbda/rng.hpp"
#include "pbda/train.hpp"

using namespace pbda;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).norm() / std::max({1e-12, a.norm(), b.norm()});
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------
// 1. Exact dual-path agreement on the finite harness: the definition value and
//    the relabeled-reduction value of both divergences agree to 1e-12 on 100
//    random instances each (classes 3/4, up to 64 hypotheses, up to 32 grid
//    points). Budget: 120 s.
Outcome check_dual_path() {
    const double tol = 1e-12;
    double worst_pair = 0.0, worst_anchored = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int classes = 3 + (i % 2);
        const int domain = 8 + (i % 4) * 8;          // 8..32
        const int hypotheses = 8 + (i % 8) * 8;      // 8..64
        const int n_s = 10 + (i % 3) * 5;
        const int n_t = 10 + ((i + 1) % 3) * 5;
        const auto inst = random_finite_instance(domain, classes, hypotheses, n_s, n_t,
                                                 derive_seed(0xacceULL, i));
        const auto pair = exact_hdh(inst.s, inst.t, inst.fc);  // throws on mismatch
        worst_pair = std::max(worst_pair, std::abs(pair.definition_path - pair.reduction_path));
        for (int h = 0; h < hypotheses; ++h) {
            const auto anchored = exact_hdeltah(h, inst.s, inst.t, inst.fc);
            worst_anchored = std::max(
                worst_anchored, std::abs(anchored.definition_path - anchored.reduction_path));
        }
    }
    const bool pass = worst_pair <= tol && worst_anchored <= tol;
    return {pass, "worst |definition - reduction|: pair " + fmt(worst_pair) + ", anchored " +
                      fmt(worst_anchored) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------------------
// 2. Disagreement surrogate: on 10,000 random scorer pairs and inputs, the
//    logistic margin loss dominates the 0/1 loss against a random binary
//    target, and the margin sign matches argmax disagreement. Zero violations
//    allowed. Budget: 60 s.
Outcome check_surrogate_domination() {
    Rng rng(0x5a11);
    const SurrogateConfig scfg;  // shifted positive map, the training default
    long dom_violations = 0, sign_violations = 0;
    for (int i = 0; i < 10000; ++i) {
        const int classes = 3 + (i % 3);
        const int dim = 2 + (i % 3);
        const Architecture arch = Architecture::linear(dim, classes);
        const ScoredModel f{arch, rng.normal_vec(arch.param_count())};
        const ScoredModel g{arch, rng.normal_vec(arch.param_count())};
        const Eigen::VectorXd x = rng.normal_vec(dim);
        const double z = surrogate_z(f, g, x, scfg);
        const bool differ = f.predict(x) != g.predict(x);
        if (differ != (z > 0.0)) ++sign_violations;
        const int y = static_cast<int>(rng.bits() & 1);
        const double zero_one = (differ != (y == 1)) ? 1.0 : 0.0;
        if (surrogate_loss(z, y) < zero_one) ++dom_violations;
    }
    const bool pass = dom_violations == 0 && sign_violations == 0;
    return {pass, "10000 draws: " + std::to_string(dom_violations) + " domination and " +
                      std::to_string(sign_violations) + " sign violations"};
}

// ---------------------------------------------------------------------------
// 3. Loss decomposition: the 0/1 label loss obeys the triangle inequality for
//    every label triple up to 5 classes, and on random finite instances the
//    source/target risk gap of every hypothesis stays below adaptability plus
//    divergence — with the divergence taken over pairs and anchored at the
//    hypothesis itself.
Outcome check_decomposition() {
    for (int classes = 2; classes <= 5; ++classes)
        for (int a = 0; a < classes; ++a)
            for (int b = 0; b < classes; ++b)
                for (int c = 0; c < classes; ++c)
                    if ((a != b ? 1 : 0) > (a != c ? 1 : 0) + (c != b ? 1 : 0))
                        return {false, "triangle inequality broken at labels " +
                                           std::to_string(a) + "," + std::to_string(b) + "," +
                                           std::to_string(c)};

    double worst_slack = -2.0;  // most negative margin seen (should stay >= -1e-12)
    for (int i = 0; i < 60; ++i) {
        const int classes = 2 + (i % 4);  // 2..5
        const auto inst = random_finite_instance(10, classes, 12, 12, 12,
                                                 derive_seed(0xdecaULL, i));
        const double lambda = finite_adaptability(inst.fc, inst.s, inst.t);
        const double d_pair = exact_hdh(inst.s, inst.t, inst.fc).value;
        for (int h = 0; h < 12; ++h) {
            const double gap = std::abs(finite_risk(inst.fc.hypotheses[h], inst.s) -
                                        finite_risk(inst.fc.hypotheses[h], inst.t));
            const double d_anch = exact_hdeltah(h, inst.s, inst.t, inst.fc).value;
            worst_slack = std::max(worst_slack, gap - (lambda + d_pair));
            worst_slack = std::max(worst_slack, gap - (lambda + d_anch));
        }
    }
    const bool pass = worst_slack <= 1e-12;
    return {pass, "triangle exhaustive to 5 classes; worst gap excess " + fmt(worst_slack) +
                      " over 60 instances x 12 hypotheses (tol 1e-12)"};
}

// ---------------------------------------------------------------------------
// 4. Certificate validity: 50 seeded rotated-blob trials (3 classes, d=2,
//    n=m=501, delta=0.05); the measured target Gibbs risk may exceed the
//    assembled total in at most 5% of trials, for both the baseline and the
//    flatness-corrected form. Budget: 1800 s.
Outcome check_bound_validity() {
    const auto arch = Architecture::linear(2, 3);
    TrainConfig tc;
    tc.lr_schedule = {{1e-2, 60}, {1e-3, 20}};
    int viol_base = 0, viol_flat = 0;
    double min_margin = 2.0;
    for (int trial = 1; trial <= 50; ++trial) {
        SyntheticSpec spec;
        spec.per_class_n = 167;
        spec.seed = static_cast<std::uint64_t>(trial);
        spec.name = "validity";
        spec.shift.kind = ShiftSpec::Kind::rotate;
        spec.shift.angle_deg = 30.0;
        const auto task = make_synthetic_task(spec);

        TrainConfig tcp = tc;
        tcp.seed = derive_seed(spec.seed, 0x31ULL);
        const auto prior = train_prior(task.source, arch, tcp, 0.01);
        GibbsTrainSpec gspec;
        gspec.prior = prior;
        gspec.trainer = tc;
        gspec.trainer.seed = derive_seed(spec.seed, 0x32ULL);
        const auto q = train_gibbs(task.source, gspec);

        AssemblyConfig acfg;
        acfg.k = 30;
        acfg.delta = 0.05;
        acfg.seed = derive_seed(spec.seed, 0x33ULL);
        acfg.witness_cfg = tc;
        acfg.witness_cfg.restarts = 2;

        const auto base =
            assemble_baseline_bound(q, prior, task, DivergenceChoice::model_independent, acfg);
        const auto flat = assemble_flatness_bound(q, prior, task, acfg);
        const double target_risk =
            gibbs_risk_mc(q, task.labeled_target(), 100, derive_seed(spec.seed, 0x34ULL)).estimate;
        viol_base += target_risk > base.total;
        viol_flat += target_risk > flat.total;
        min_margin = std::min({min_margin, base.total - target_risk, flat.total - target_risk});
    }
    const bool pass = viol_base <= 2 && viol_flat <= 2;  // 5% of 50
    return {pass, "violations: baseline " + std::to_string(viol_base) + "/50, flatness " +
                      std::to_string(viol_flat) + "/50; smallest margin " + fmt(min_margin)};
}

// ---------------------------------------------------------------------------
// 5. Penalty arithmetic against independently computed references.
Outcome check_penalty_arithmetic() {
    double worst = 0.0;
    auto track = [&](double got, double want, double tol) {
        worst = std::max(worst, std::abs(got - want) / tol);
    };
    track(pinsker_penalty(0.0, 100, 0.05), 0.17308183826022587, 1e-4);
    track(mc_divergence_penalty(100, 0.05), 0.13581015157406195, 1e-4);

    // pair-level concentration penalty at k=100: sqrt(2 ln 40 / 100)
    {
        const auto arch = Architecture::linear(1, 2);
        Eigen::MatrixXd X(2, 1);
        X << 0.0, 1.0;
        const auto s = make_labeled(X, {0, 1}, 2, "pen:a");
        const auto point = GaussianGibbs::create_test_mode(
            arch, init_params(arch, 1), Eigen::VectorXd::Zero(arch.param_count()), "pm");
        const auto terms = pair_gap_terms(point, s, s, 100, 0.05, 7);
        track(terms.penalty, 0.27162030314812389, 1e-4);
    }

    // diagonal-Gaussian KL closed forms
    const auto arch = Architecture::linear(1, 2);
    auto gauss = [&](double mean0, double var2) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
        mean[0] = mean0;
        Eigen::VectorXd var = Eigen::VectorXd::Ones(4);
        var[2] = var2;
        return GaussianGibbs::create(arch, mean, var, "kl");
    };
    track(kl_divergence(gauss(0.0, 1.0), gauss(0.0, 1.0)), 0.0, 1e-10);
    track(kl_divergence(gauss(1.0, 1.0), gauss(0.0, 1.0)), 0.5, 1e-10);
    track(kl_divergence(gauss(0.0, 0.5), gauss(0.0, 1.0)), 0.09657359027997264, 1e-10);

    return {worst <= 1.0, "worst deviation at " + fmt(worst * 100.0) + "% of its tolerance"};
}

// ---------------------------------------------------------------------------
// 6. Divergence-vs-transfer ranking on a graded shift suite (8 tasks x 3
//    seeds = 24 cells): the anchored estimate must rank-correlate with the
//    true error gap at Spearman >= 0.3 and must not trail the pair estimate
//    by more than 0.15. Budget: 1200 s.
Outcome check_ranking() {
    ExperimentConfig cfg;
    auto add = [&](const std::string& name, std::uint64_t seed, ShiftSpec shift) {
        TaskSpec t;
        t.name = name;
        t.synthetic.per_class_n = 60;
        t.synthetic.seed = seed;
        t.synthetic.name = name;
        t.synthetic.shift = std::move(shift);
        cfg.tasks.push_back(std::move(t));
    };
    add("none-a", 11, {});
    add("none-b", 12, {});
    add("noise-03", 13, {ShiftSpec::Kind::noise, 0.0, 0.3, {}});
    add("noise-06", 14, {ShiftSpec::Kind::noise, 0.0, 0.6, {}});
    add("rot-25", 15, {ShiftSpec::Kind::rotate, 25.0, 0.0, {}});
    add("rot-50", 16, {ShiftSpec::Kind::rotate, 50.0, 0.0, {}});
    add("skew", 17, {ShiftSpec::Kind::label_shift, 0.0, 0.0, {0.8, 0.1, 0.1}});
    add("scramble", 18, {ShiftSpec::Kind::random_labels, 0.0, 0.0, {}});
    cfg.architecture = Architecture::mlp(2, {16}, 3);
    cfg.trainer.lr_schedule = {{1e-2, 60}, {1e-3, 20}};
    cfg.trainer.restarts = 2;
    cfg.seeds = {1, 2, 3};

    const auto result = run_ranking_suite(cfg);
    long ok = std::count_if(result.cells.begin(), result.cells.end(),
                            [](const RankingCell& c) { return c.status == "ok"; });
    if (!result.spearman_hdeltah || !result.spearman_hdh)
        return {false, "correlations unavailable (" + std::to_string(ok) + "/24 cells ok)"};
    const double anchored = *result.spearman_hdeltah;
    const double pair = *result.spearman_hdh;
    const bool pass = anchored >= 0.3 && anchored >= pair - 0.15;
    return {pass, "spearman: anchored " + fmt(anchored) + " (need >= 0.3), pair " + fmt(pair) +
                      " (slack allowed 0.15), " + std::to_string(ok) + "/24 cells ok"};
}

// ---------------------------------------------------------------------------
// 7. Posterior flatness: Gibbs posteriors trained from sigma=0.01 priors on a
//    10-task x 3-seed mix keep the median |MC risk - summary risk| below 0.05.
Outcome check_flatness() {
    TrainConfig tc;
    tc.lr_schedule = {{1e-2, 50}, {1e-3, 15}};
    const auto arch = Architecture::linear(2, 3);
    std::vector<double> rhos;
    for (int t = 0; t < 10; ++t) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            SyntheticSpec spec;
            spec.per_class_n = 50;
            spec.seed = derive_seed(seed, 0x77ULL, t);
            spec.name = "flat";
            switch (t % 5) {
                case 0: break;
                case 1:
                    spec.shift.kind = ShiftSpec::Kind::rotate;
                    spec.shift.angle_deg = 20.0 + 5 * t;
                    break;
                case 2:
                    spec.shift.kind = ShiftSpec::Kind::noise;
                    spec.shift.sigma = 0.2 + 0.05 * t;
                    break;
                case 3:
                    spec.shift.kind = ShiftSpec::Kind::label_shift;
                    spec.shift.class_weights = {0.6, 0.2, 0.2};
                    break;
                case 4:
                    spec.shift.kind = ShiftSpec::Kind::random_labels;
                    break;
            }
            const auto task = make_synthetic_task(spec);
            TrainConfig tcp = tc;
            tcp.seed = derive_seed(seed, 0x41ULL, t);
            const auto prior = train_prior(task.source, arch, tcp, 0.01);
            GibbsTrainSpec gspec;
            gspec.prior = prior;
            gspec.trainer = tc;
            gspec.trainer.seed = derive_seed(seed, 0x42ULL, t);
            const auto q = train_gibbs(task.source, gspec);
            rhos.push_back(flatness_rho(q, task.source, 30, derive_seed(seed, 0x43ULL, t)));
        }
    }
    const double med = median(rhos);
    return {med < 0.05, "median flatness gap " + fmt(med) + " over 30 posteriors (need < 0.05)"};
}

// ---------------------------------------------------------------------------
// 8. Adversarial alignment trend: on 30-degree rotated blobs, the pair
//    divergence measured in the frozen representation drops (in median over 5
//    seeds) after adversarial training relative to a source-only scorer; and
//    sweeping the posterior KL weight over {0, 0.01, 0.05, 0.1} drives the
//    median posterior KL monotonically down.
Outcome check_alignment_trend() {
    const auto model_arch = Architecture::mlp(2, {8}, 3);
    const auto adv_arch = Architecture::mlp(8, {8}, 2);
    TrainConfig tc;
    tc.lr_schedule = {{1e-2, 150}, {1e-3, 50}};
    TrainConfig wc;
    wc.lr_schedule = {{1e-1, 40}, {1e-2, 15}};
    wc.restarts = 2;

    std::vector<double> div_src, div_dann;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticSpec spec;
        spec.per_class_n = 50;
        spec.seed = seed;
        spec.name = "align";
        spec.shift.kind = ShiftSpec::Kind::rotate;
        spec.shift.angle_deg = 30.0;
        const auto task = make_synthetic_task(spec);
        const auto s_x = strip_labels(task.source);

        TrainConfig tcs = tc;
        tcs.seed = derive_seed(seed, 0x11ULL);
        const auto src = train_erm(task.source, model_arch, tcs);

        DannConfig dcfg;
        dcfg.base = tc;
        dcfg.base.seed = derive_seed(seed, 0x12ULL);
        dcfg.base.restarts = 3;
        dcfg.model_arch = model_arch;
        dcfg.adversary_arch = adv_arch;
        const auto dann = dann_train(task.source, task.target_features, dcfg);

        TrainConfig wcs = wc;
        wcs.seed = derive_seed(seed, 0x13ULL);
        div_src.push_back(restricted_divergence(src, s_x, task.target_features,
                                                RestrictedVariant::pair, wcs, SurrogateConfig{})
                              .value);
        div_dann.push_back(restricted_divergence(dann.model, s_x, task.target_features,
                                                 RestrictedVariant::pair, wcs, SurrogateConfig{})
                               .value);
    }
    const double med_src = median(div_src);
    const double med_dann = median(div_dann);

    std::vector<double> sweep_medians;
    for (const double damp : {0.0, 0.01, 0.05, 0.1}) {
        std::vector<double> kls;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            SyntheticSpec spec;
            spec.per_class_n = 50;
            spec.seed = seed;
            spec.name = "align-kl";
            spec.shift.kind = ShiftSpec::Kind::rotate;
            spec.shift.angle_deg = 30.0;
            const auto task = make_synthetic_task(spec);
            TrainConfig tcp = tc;
            tcp.seed = derive_seed(seed, 0x21ULL);
            const auto prior = train_prior(task.source, model_arch, tcp, 0.01);
            GibbsTrainSpec gspec;
            gspec.prior = prior;
            gspec.kl_dampening = damp;
            gspec.trainer = tc;
            gspec.trainer.seed = derive_seed(seed, 0x22ULL);
            gspec.trainer.early_stop_error = 0.0;  // let the weight act every epoch
            kls.push_back(kl_divergence(train_gibbs(task.source, gspec), prior));
        }
        sweep_medians.push_back(median(kls));
    }
    bool monotone = true;
    for (std::size_t i = 1; i < sweep_medians.size(); ++i)
        if (sweep_medians[i] > sweep_medians[i - 1]) monotone = false;

    const bool pass = med_dann <= med_src && monotone;
    std::string sweep = "";
    for (double m : sweep_medians) sweep += (sweep.empty() ? "" : " -> ") + fmt(m);
    return {pass, "median frozen-rep divergence " + fmt(med_src) + " -> " + fmt(med_dann) +
                      " after alignment; KL sweep medians " + sweep};
}

// ---------------------------------------------------------------------------
// 9. Gradient correctness: every differentiable objective matches central
//    finite differences (step 1e-5) within relative error 1e-3 on micro
//    models.
Outcome check_gradients() {
    const double h = 1e-5;
    double worst = 0.0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    const auto arch = Architecture::linear(2, 3);
    SyntheticSpec spec;
    spec.per_class_n = 6;
    spec.seed = 3;
    const auto task = make_synthetic_task(spec);
    const auto& s = task.source;

    auto fd_check = [&](const SgdObjective& obj, const Eigen::VectorXd& p, const StepInfo& info) {
        std::vector<int> idx(static_cast<std::size_t>(obj.sample_count()));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
        obj.batch_loss(p, idx, info, &g);
        Eigen::VectorXd fd(p.size());
        for (int i = 0; i < p.size(); ++i) {
            Eigen::VectorXd pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            fd[i] = (obj.batch_loss(pp, idx, info, nullptr) -
                     obj.batch_loss(pm, idx, info, nullptr)) /
                    (2 * h);
        }
        track(rel_err(g, fd));
    };

    Rng rng(0x9d);
    // plain and weighted NLL (mlp trunk included)
    fd_check(nll_objective(arch, s), rng.normal_vec(arch.param_count()), StepInfo{});
    const auto mlp_arch = Architecture::mlp(2, {4}, 3);
    fd_check(nll_objective(mlp_arch, s), 0.7 * rng.normal_vec(mlp_arch.param_count()), StepInfo{});
    fd_check(sum_of_risks_objective(arch, s, task.labeled_target()),
             rng.normal_vec(arch.param_count()), StepInfo{});

    // surrogate pair objective over pooled rows
    {
        Eigen::MatrixXd X(6, 2);
        for (int i = 0; i < 6; ++i) X.row(i) = rng.normal_vec(2).transpose();
        const std::vector<int> y01{1, 1, 1, 0, 0, 0};
        const Eigen::VectorXd w = Eigen::VectorXd::Ones(6);
        const SurrogatePairObjective obj(arch, X, y01, w, SurrogateConfig{});
        fd_check(obj, 0.8 * rng.normal_vec(2 * arch.param_count()), StepInfo{});
    }

    // adversarial composite, both halves
    {
        const auto ma = Architecture::mlp(2, {3}, 3);
        const auto aa = Architecture::mlp(3, {2}, 2);
        const auto pm0 = init_params(ma, 31);
        const auto pa0 = init_params(aa, 32);
        const auto probe = dann_probe(s, task.target_features, ma, aa, pm0, pa0, 0.8);
        Eigen::VectorXd fdm(pm0.size()), fda(pa0.size());
        for (int i = 0; i < pm0.size(); ++i) {
            Eigen::VectorXd pp = pm0, pm = pm0;
            pp[i] += h;
            pm[i] -= h;
            fdm[i] = (dann_probe(s, task.target_features, ma, aa, pp, pa0, 0.8).model_scalar -
                      dann_probe(s, task.target_features, ma, aa, pm, pa0, 0.8).model_scalar) /
                     (2 * h);
        }
        for (int i = 0; i < pa0.size(); ++i) {
            Eigen::VectorXd pp = pa0, pm = pa0;
            pp[i] += h;
            pm[i] -= h;
            fda[i] = (dann_probe(s, task.target_features, ma, aa, pm0, pp, 0.8).adversary_scalar -
                      dann_probe(s, task.target_features, ma, aa, pm0, pm, 0.8).adversary_scalar) /
                     (2 * h);
        }
        track(rel_err(probe.model_grad, fdm));
        track(rel_err(probe.adversary_grad, fda));
    }

    // reparameterized posterior objective at a pinned step
    {
        GibbsTrainSpec gspec;
        gspec.prior = GaussianGibbs::isotropic(ScoredModel{arch, init_params(arch, 9)}, 0.01, "p");
        gspec.kl_dampening = 0.7;
        gspec.trainer.seed = 13;
        Eigen::VectorXd p(2 * arch.param_count());
        p.head(arch.param_count()) = gspec.prior.mean + 0.1 * rng.normal_vec(arch.param_count());
        p.tail(arch.param_count()) =
            0.5 * rng.normal_vec(arch.param_count()) - Eigen::VectorXd::Constant(arch.param_count(), 2.0);
        const auto probe = gibbs_objective_probe(s, gspec, p, 21);
        Eigen::VectorXd fd(p.size());
        for (int i = 0; i < p.size(); ++i) {
            Eigen::VectorXd pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            fd[i] = (gibbs_objective_probe(s, gspec, pp, 21).loss -
                     gibbs_objective_probe(s, gspec, pm, 21).loss) /
                    (2 * h);
        }
        track(rel_err(probe.grad, fd));
    }

    return {worst <= 1e-3, "worst relative error " + fmt(worst) + " (tol 1e-3)"};
}

// ---------------------------------------------------------------------------
// 10. Determinism of the CLI: `oracle-check` and `demo` produce byte-identical
//     stdout and summary files across two runs with the same settings.
Outcome check_determinism(const std::string& tool) {
    if (tool.empty()) return {false, "CLI path not provided (pass it as argv[1])"};
    namespace fs = std::filesystem;
    const fs::path work = fs::temp_directory_path() / "pbda_determinism";
    fs::remove_all(work);
    fs::create_directories(work);

    struct Run {
        std::string cmd_suffix;
        std::string summary_name;
    };
    const Run runs[] = {{"oracle-check --instances 10 --seed 5", "oracle_summary.csv"},
                        {"demo --seed 3", "demo_summary.csv"}};
    for (const auto& run : runs) {
        const fs::path out_dir = work / "out";
        std::string stdout_first, summary_first;
        for (int attempt = 0; attempt < 2; ++attempt) {
            const fs::path log = work / ("log" + std::to_string(attempt));
            const std::string cmd = tool + " " + run.cmd_suffix + " --out " + out_dir.string() +
                                    " > " + log.string() + " 2>&1";
            const int rc = std::system(cmd.c_str());
            if (rc != 0) return {false, "command failed: " + run.cmd_suffix};
            const auto text = read_file(log);
            const auto summary = read_file(out_dir / run.summary_name);
            if (summary.empty()) return {false, run.summary_name + " missing or empty"};
            if (attempt == 0) {
                stdout_first = text;
                summary_first = summary;
            } else if (text != stdout_first) {
                return {false, run.cmd_suffix + ": stdout differs between runs"};
            } else if (summary != summary_first) {
                return {false, run.cmd_suffix + ": " + run.summary_name + " differs between runs"};
            }
        }
    }
    fs::remove_all(work);
    return {true, "oracle-check and demo byte-identical across repeated runs"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string tool = argc > 1 ? argv[1] : "";

    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double budget_s;  // 0 = untimed
    };
    const Criterion criteria[] = {
        {"exact dual-path agreement", check_dual_path, 120.0},
        {"surrogate domination and sign", check_surrogate_domination, 60.0},
        {"risk-gap decomposition", check_decomposition, 0.0},
        {"certificate validity", check_bound_validity, 1800.0},
        {"penalty arithmetic", check_penalty_arithmetic, 0.0},
        {"shift-ranking correlation", check_ranking, 1200.0},
        {"posterior flatness", check_flatness, 0.0},
        {"alignment and kl-weight trends", check_alignment_trend, 0.0},
        {"gradient correctness", check_gradients, 0.0},
        {"repeat-run determinism", [&] { return check_determinism(tool); }, 0.0},
    };

    int failures = 0;
    int index = 0;
    for (const auto& criterion : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criterion.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (criterion.budget_s > 0.0 && elapsed > criterion.budget_s) {
            outcome.pass = false;
            outcome.detail += " [over time budget " + fmt(criterion.budget_s) + "s]";
        }
        std::printf("%s %2d %-34s %s (%.1fs)\n", outcome.pass ? "PASS" : "FAIL", index,
                    criterion.name, outcome.detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures;
}
