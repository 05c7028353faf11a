#include "pbda/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string_view>
#include <thread>
#include <utility>

#include <json.hpp>

#include "pbda/errors.hpp"
#include "pbda/gibbs.hpp"
#include "pbda/rng.hpp"

namespace pbda {

using ordered_json = nlohmann::ordered_json;

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
    if (xs.size() < 3) throw std::invalid_argument("spearman: need at least 3 pairs");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("spearman: constant input, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

std::string bound_kind_name(BoundKind kind) {
    switch (kind) {
        case BoundKind::baseline_independent: return "baseline_independent";
        case BoundKind::baseline_dependent: return "baseline_dependent";
        case BoundKind::flatness: return "flatness";
        case BoundKind::restricted_pair: return "restricted_pair";
        case BoundKind::restricted_anchored: return "restricted_anchored";
    }
    throw std::logic_error("unknown bound kind");
}

BoundKind bound_kind_from_name(const std::string& name) {
    if (name == "baseline_independent") return BoundKind::baseline_independent;
    if (name == "baseline_dependent") return BoundKind::baseline_dependent;
    if (name == "flatness") return BoundKind::flatness;
    if (name == "restricted_pair") return BoundKind::restricted_pair;
    if (name == "restricted_anchored") return BoundKind::restricted_anchored;
    throw std::invalid_argument("unknown bound kind '" + name + "'");
}

// --- config -----------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (tasks.empty()) throw std::invalid_argument("config: at least one task required");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (estimators.empty()) throw std::invalid_argument("config: at least one estimator required");
    architecture.validate();
    trainer.validate();
    if (k < 1) throw std::invalid_argument("config: k must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("config: delta must be in (0, 1)");
    if (!(prior_sigma > 0.0)) throw std::invalid_argument("config: prior_sigma must be > 0");
    if (kl_dampening < 0.0) throw std::invalid_argument("config: kl_dampening must be >= 0");
    if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
    std::vector<std::string> names;
    for (const auto& t : tasks) {
        if (t.name.empty()) throw std::invalid_argument("config: task name missing");
        names.push_back(t.name);
        if (t.kind == TaskSpec::Kind::csv && (t.source_csv.empty() || t.target_csv.empty()))
            throw std::invalid_argument("config: csv task '" + t.name + "' needs source and target paths");
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw std::invalid_argument("config: duplicate task names");
}

namespace {

ShiftSpec::Kind shift_from_string(const std::string& s) {
    if (s == "none") return ShiftSpec::Kind::none;
    if (s == "rotate") return ShiftSpec::Kind::rotate;
    if (s == "noise") return ShiftSpec::Kind::noise;
    if (s == "label_shift") return ShiftSpec::Kind::label_shift;
    if (s == "random_labels") return ShiftSpec::Kind::random_labels;
    throw std::invalid_argument("unknown shift kind '" + s + "'");
}

Architecture arch_from_json(const ordered_json& j) {
    const std::string kind = j.value("kind", "linear");
    const int input_dim = j.value("input_dim", 2);
    const int classes = j.value("classes", 3);
    if (kind == "linear") return Architecture::linear(input_dim, classes);
    if (kind == "mlp")
        return Architecture::mlp(input_dim, j.value("hidden", std::vector<int>{8}), classes);
    throw std::invalid_argument("unknown architecture kind '" + kind + "'");
}

ordered_json arch_to_json(const Architecture& a) {
    ordered_json j;
    j["kind"] = a.kind == Architecture::Kind::linear ? "linear" : "mlp";
    j["input_dim"] = a.input_dim;
    if (a.kind == Architecture::Kind::mlp) j["hidden"] = a.hidden_dims;
    j["classes"] = a.class_count;
    return j;
}

TrainConfig trainer_from_json(const ordered_json& j) {
    TrainConfig cfg;
    if (j.contains("lr_schedule")) {
        cfg.lr_schedule.clear();
        for (const auto& phase : j.at("lr_schedule"))
            cfg.lr_schedule.emplace_back(phase.at(0).get<double>(), phase.at(1).get<int>());
    }
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.early_stop_error = j.value("early_stop_error", cfg.early_stop_error);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.restarts = j.value("restarts", cfg.restarts);
    return cfg;
}

ordered_json trainer_to_json(const TrainConfig& cfg) {
    ordered_json j;
    auto& sched = j["lr_schedule"] = ordered_json::array();
    for (const auto& [lr, epochs] : cfg.lr_schedule) sched.push_back({lr, epochs});
    j["momentum"] = cfg.momentum;
    j["batch_size"] = cfg.batch_size;
    j["early_stop_error"] = cfg.early_stop_error;
    j["seed"] = cfg.seed;
    j["restarts"] = cfg.restarts;
    return j;
}

TaskSpec task_from_json(const ordered_json& j) {
    TaskSpec t;
    t.name = j.value("name", "");
    const std::string kind = j.value("kind", "synthetic");
    if (kind == "synthetic") {
        t.kind = TaskSpec::Kind::synthetic;
        auto& s = t.synthetic;
        s.class_count = j.value("classes", s.class_count);
        s.dim = j.value("dim", s.dim);
        s.per_class_n = j.value("per_class", s.per_class_n);
        s.radius = j.value("radius", s.radius);
        s.seed = j.value("seed", s.seed);
        s.name = t.name;
        s.shift.kind = shift_from_string(j.value("shift", "none"));
        s.shift.angle_deg = j.value("angle_deg", 0.0);
        s.shift.sigma = j.value("sigma", 0.0);
        s.shift.class_weights = j.value("class_weights", std::vector<double>{});
    } else if (kind == "csv") {
        t.kind = TaskSpec::Kind::csv;
        t.source_csv = j.value("source", "");
        t.target_csv = j.value("target", "");
        t.label_column = j.value("label_column", t.label_column);
        t.target_labeled = j.value("target_labeled", false);
    } else {
        throw std::invalid_argument("unknown task kind '" + kind + "'");
    }
    return t;
}

ordered_json task_to_json(const TaskSpec& t) {
    ordered_json j;
    j["name"] = t.name;
    if (t.kind == TaskSpec::Kind::synthetic) {
        j["kind"] = "synthetic";
        j["classes"] = t.synthetic.class_count;
        j["dim"] = t.synthetic.dim;
        j["per_class"] = t.synthetic.per_class_n;
        j["radius"] = t.synthetic.radius;
        j["seed"] = t.synthetic.seed;
        const auto& sh = t.synthetic.shift;
        switch (sh.kind) {
            case ShiftSpec::Kind::none: j["shift"] = "none"; break;
            case ShiftSpec::Kind::rotate: j["shift"] = "rotate"; break;
            case ShiftSpec::Kind::noise: j["shift"] = "noise"; break;
            case ShiftSpec::Kind::label_shift: j["shift"] = "label_shift"; break;
            case ShiftSpec::Kind::random_labels: j["shift"] = "random_labels"; break;
        }
        if (sh.kind == ShiftSpec::Kind::rotate) j["angle_deg"] = sh.angle_deg;
        if (sh.kind == ShiftSpec::Kind::noise) j["sigma"] = sh.sigma;
        if (sh.kind == ShiftSpec::Kind::label_shift) j["class_weights"] = sh.class_weights;
    } else {
        j["kind"] = "csv";
        j["source"] = t.source_csv;
        j["target"] = t.target_csv;
        j["label_column"] = t.label_column;
        j["target_labeled"] = t.target_labeled;
    }
    return j;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    try {
        ExperimentConfig cfg;
        for (const auto& t : j.value("tasks", ordered_json::array())) cfg.tasks.push_back(task_from_json(t));
        if (j.contains("architecture")) cfg.architecture = arch_from_json(j.at("architecture"));
        if (j.contains("trainer")) cfg.trainer = trainer_from_json(j.at("trainer"));
        const std::string tau = j.value("surrogate", "exp_shifted");
        if (tau == "exp_shifted") {
            cfg.surrogate.tau = SurrogateConfig::Tau::exp_shifted;
        } else if (tau == "exp_plain") {
            cfg.surrogate.tau = SurrogateConfig::Tau::exp_plain;
        } else {
            throw std::invalid_argument("unknown surrogate '" + tau + "'");
        }
        if (j.contains("estimators")) {
            cfg.estimators.clear();
            for (const auto& e : j.at("estimators")) {
                const std::string name = e.get<std::string>();
                if (name == "hdh") {
                    cfg.estimators.push_back(EstimatorId::hdh);
                } else if (name == "hdeltah") {
                    cfg.estimators.push_back(EstimatorId::hdeltah);
                } else {
                    throw std::invalid_argument("unknown estimator '" + name + "'");
                }
            }
        }
        if (j.contains("bounds")) {
            cfg.bounds.clear();
            for (const auto& b : j.at("bounds")) cfg.bounds.push_back(bound_kind_from_name(b.get<std::string>()));
        }
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.k = j.value("k", cfg.k);
        cfg.delta = j.value("delta", cfg.delta);
        cfg.prior_sigma = j.value("prior_sigma", cfg.prior_sigma);
        cfg.kl_dampening = j.value("kl_dampening", cfg.kl_dampening);
        cfg.strict_delta = j.value("strict_delta", cfg.strict_delta);
        cfg.research_mode = j.value("research_mode", cfg.research_mode);
        if (j.contains("assumed_adaptability")) cfg.assumed_adaptability = j.at("assumed_adaptability").get<double>();
        if (j.contains("assumed_rho")) cfg.assumed_rho = j.at("assumed_rho").get<double>();
        cfg.jobs = j.value("jobs", cfg.jobs);
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    auto& tasks = j["tasks"] = ordered_json::array();
    for (const auto& t : cfg.tasks) tasks.push_back(task_to_json(t));
    j["architecture"] = arch_to_json(cfg.architecture);
    j["trainer"] = trainer_to_json(cfg.trainer);
    j["surrogate"] = cfg.surrogate.tau == SurrogateConfig::Tau::exp_shifted ? "exp_shifted" : "exp_plain";
    auto& est = j["estimators"] = ordered_json::array();
    for (auto e : cfg.estimators) est.push_back(e == EstimatorId::hdh ? "hdh" : "hdeltah");
    auto& bounds = j["bounds"] = ordered_json::array();
    for (auto b : cfg.bounds) bounds.push_back(bound_kind_name(b));
    j["seeds"] = cfg.seeds;
    j["k"] = cfg.k;
    j["delta"] = cfg.delta;
    j["prior_sigma"] = cfg.prior_sigma;
    j["kl_dampening"] = cfg.kl_dampening;
    j["strict_delta"] = cfg.strict_delta;
    j["research_mode"] = cfg.research_mode;
    if (cfg.assumed_adaptability) j["assumed_adaptability"] = *cfg.assumed_adaptability;
    if (cfg.assumed_rho) j["assumed_rho"] = *cfg.assumed_rho;
    j["jobs"] = cfg.jobs;
    return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_to_json(cfg))));
    return buf;
}

// --- suites -----------------------------------------------------------------

namespace {

// Materializes one task for one suite seed. Synthetic tasks are redrawn per
// seed (the repeat convention); CSV tasks are fixed data, so repeats vary
// only the training seeds.
AdaptationTask build_task(const TaskSpec& spec, std::uint64_t seed, bool research_mode) {
    if (spec.kind == TaskSpec::Kind::synthetic) {
        SyntheticSpec s = spec.synthetic;
        s.name = spec.name;
        s.seed = derive_seed(seed, fnv1a64(spec.name));
        auto task = make_synthetic_task(s);
        if (!research_mode) task.target_labels.reset();
        return task;
    }
    AdaptationTask task;
    task.source = load_labeled_csv(spec.source_csv, spec.label_column);
    if (spec.target_labeled) {
        const auto t = load_labeled_csv(spec.target_csv, spec.label_column);
        task.target_features = strip_labels(t);
        if (research_mode) task.target_labels = t.labels;
    } else {
        task.target_features = load_unlabeled_csv(spec.target_csv);
    }
    task.shift_descriptor = "csv";
    return task;
}

std::string sanitize_name(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return out;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

}  // namespace

RankingResult run_ranking_suite(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.research_mode)
        throw std::invalid_argument("ranking suite needs labeled targets (research mode)");
    for (const auto& t : cfg.tasks)
        if (t.kind == TaskSpec::Kind::csv && !t.target_labeled)
            throw std::invalid_argument("ranking suite: csv task '" + t.name + "' has no target labels");

    const bool want_hdh =
        std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorId::hdh) != cfg.estimators.end();
    const bool want_hdeltah = std::find(cfg.estimators.begin(), cfg.estimators.end(),
                                        EstimatorId::hdeltah) != cfg.estimators.end();

    RankingResult result;
    for (const auto& tspec : cfg.tasks) {
        for (const auto seed : cfg.seeds) {
            RankingCell cell;
            cell.task = tspec.name;
            cell.seed = seed;
            try {
                const auto cell_seed = derive_seed(seed, fnv1a64(tspec.name), 0x7a5cULL);
                const auto task = build_task(tspec, seed, true);
                TrainConfig tc = cfg.trainer;
                tc.seed = derive_seed(cell_seed, 0x0e7bULL);
                const auto h = train_erm(task.source, cfg.architecture, tc);
                cell.error_gap = error_gap(h, task.source, task.labeled_target());
                const auto s_x = strip_labels(task.source);
                TrainConfig wc = cfg.trainer;
                wc.seed = derive_seed(cell_seed, 0x0d1fULL);
                if (want_hdh)
                    cell.hdh = hdh_divergence(s_x, task.target_features, cfg.architecture, wc,
                                              cfg.surrogate)
                                   .value;
                if (want_hdeltah)
                    cell.hdeltah = h_delta_h_divergence(h, s_x, task.target_features, wc).value;
            } catch (const std::exception& e) {
                cell.status = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }

    std::vector<double> gaps, hdhs, hdeltahs;
    for (const auto& c : result.cells) {
        if (c.status != "ok") continue;
        gaps.push_back(c.error_gap);
        hdhs.push_back(c.hdh);
        hdeltahs.push_back(c.hdeltah);
    }
    if (gaps.size() < 3) {
        result.caveats.push_back("fewer than 3 usable cells; correlations omitted");
        return result;
    }
    const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
    if (*hi - *lo < 0.05)
        result.caveats.push_back("error-gap spread below 0.05; correlations are fragile");
    auto try_corr = [&](const std::vector<double>& est, const char* label) -> std::optional<double> {
        try {
            return spearman(est, gaps);
        } catch (const std::invalid_argument& e) {
            result.caveats.push_back(std::string(label) + ": " + e.what());
            return std::nullopt;
        }
    };
    if (want_hdh) result.spearman_hdh = try_corr(hdhs, "hdh");
    if (want_hdeltah) result.spearman_hdeltah = try_corr(hdeltahs, "hdeltah");
    return result;
}

namespace {

BoundCell run_bound_cell(const ExperimentConfig& cfg, const TaskSpec& tspec, BoundKind kind,
                         std::uint64_t seed) {
    BoundCell cell;
    cell.task = tspec.name;
    cell.kind = kind;
    cell.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto cell_seed =
            derive_seed(seed, fnv1a64(tspec.name), static_cast<std::uint64_t>(kind));
        auto task = build_task(tspec, seed, cfg.research_mode);
        cell.labeled = task.target_labels.has_value();

        TrainConfig prior_cfg = cfg.trainer;
        prior_cfg.seed = derive_seed(cell_seed, 0x7121ULL);
        const auto prior = train_prior(task.source, cfg.architecture, prior_cfg, cfg.prior_sigma);

        GibbsTrainSpec gspec{prior, cfg.kl_dampening, cfg.trainer};
        gspec.trainer.seed = derive_seed(cell_seed, 0x7122ULL);
        const auto q = train_gibbs(task.source, gspec);

        AssemblyConfig acfg;
        acfg.k = cfg.k;
        acfg.delta = cfg.delta;
        acfg.seed = derive_seed(cell_seed, 0x7123ULL);
        acfg.witness_cfg = cfg.trainer;
        acfg.witness_cfg.seed = derive_seed(cell_seed, 0x7124ULL);
        acfg.surrogate = cfg.surrogate;
        acfg.strict_delta = cfg.strict_delta;
        acfg.assumed_adaptability = cfg.assumed_adaptability;
        acfg.assumed_rho = cfg.assumed_rho;

        switch (kind) {
            case BoundKind::baseline_independent:
                cell.report =
                    assemble_baseline_bound(q, prior, task, DivergenceChoice::model_independent, acfg);
                break;
            case BoundKind::baseline_dependent:
                cell.report =
                    assemble_baseline_bound(q, prior, task, DivergenceChoice::model_dependent, acfg);
                break;
            case BoundKind::flatness:
                cell.report = assemble_flatness_bound(q, prior, task, acfg);
                break;
            case BoundKind::restricted_pair:
                cell.report = assemble_restricted_bound(q, prior, task, RestrictedVariant::pair, acfg);
                break;
            case BoundKind::restricted_anchored:
                cell.report =
                    assemble_restricted_bound(q, prior, task, RestrictedVariant::anchored, acfg);
                break;
        }
        if (cell.labeled) {
            cell.target_risk =
                gibbs_risk_mc(q, task.labeled_target(), cfg.k, derive_seed(cell_seed, 0x7125ULL))
                    .estimate;
            cell.violated = cell.target_risk > cell.report.total;
        }
    } catch (const std::exception& e) {
        cell.status = e.what();
        if (cell.status.empty() || cell.status == "ok") cell.status = "failed";
    }
    cell.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cell;
}

}  // namespace

BoundsSuiteResult run_bounds_suite(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (cfg.bounds.empty()) throw std::invalid_argument("bounds suite: no bound kinds selected");
    if (!cfg.research_mode && (!cfg.assumed_adaptability || !cfg.assumed_rho))
        throw std::invalid_argument(
            "bounds suite: without research mode, declare assumed_adaptability and assumed_rho");

    struct Job {
        const TaskSpec* task;
        BoundKind kind;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& t : cfg.tasks)
        for (const auto kind : cfg.bounds)
            for (const auto seed : cfg.seeds) jobs.push_back({&t, kind, seed});

    const std::string hash = config_hash(cfg);
    std::string report_dir;
    if (!out_dir.empty()) {
        report_dir = out_dir + "/reports";
        std::filesystem::create_directories(report_dir);
    }

    std::vector<BoundCell> cells(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const auto& job = jobs[i];
            auto cell = run_bound_cell(cfg, *job.task, job.kind, job.seed);
            if (!report_dir.empty()) {
                const std::string path = report_dir + "/" + sanitize_name(cell.task) + "_" +
                                         bound_kind_name(cell.kind) + "_" + std::to_string(cell.seed) +
                                         ".json";
                write_file_atomic(path, bound_report_to_json(cell, hash));
            }
            cells[i] = std::move(cell);
        }
    };
    const int pool = std::min<int>(cfg.jobs, static_cast<int>(jobs.size()));
    if (pool <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(pool));
        for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    BoundsSuiteResult result;
    result.cells = std::move(cells);
    long labeled_ok = 0, violations = 0;
    for (const auto& c : result.cells) {
        if (c.status != "ok" || !c.labeled) continue;
        ++labeled_ok;
        if (c.violated) ++violations;
    }
    result.violation_rate =
        labeled_ok > 0 ? static_cast<double>(violations) / static_cast<double>(labeled_ok) : 0.0;
    return result;
}

// --- serialization ----------------------------------------------------------

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

const char* method_name(DivergenceEstimate::Method m) {
    switch (m) {
        case DivergenceEstimate::Method::hdh_surrogate: return "hdh_surrogate";
        case DivergenceEstimate::Method::hdeltah_erm: return "hdeltah_erm";
        case DivergenceEstimate::Method::exact_enumeration: return "exact_enumeration";
        case DivergenceEstimate::Method::mc_over_gibbs: return "mc_over_gibbs";
        case DivergenceEstimate::Method::restricted: return "restricted";
    }
    return "unknown";
}

}  // namespace

std::string bound_report_to_json(const BoundCell& cell, const std::string& cfg_hash) {
    ordered_json j;
    j["config_hash"] = cfg_hash;
    j["task"] = cell.task;
    j["kind"] = bound_kind_name(cell.kind);
    j["seed"] = cell.seed;
    j["status"] = cell.status;
    const auto& r = cell.report;
    ordered_json terms;
    terms["adaptability"] = r.adaptability;
    terms["source_gibbs_risk"] = r.source_gibbs_risk;
    terms["divergence"] = r.divergence_term;
    terms["divergence_mc_penalty"] = r.divergence_mc_penalty;
    terms["kl_nats"] = r.kl_nats;
    terms["complexity_penalty"] = r.complexity_penalty;
    terms["rho"] = r.rho;
    terms["total"] = r.total;
    j["terms"] = std::move(terms);
    j["m"] = r.m;
    j["delta"] = r.delta;
    j["caveats"] = r.caveats;
    ordered_json d;
    d["method"] = method_name(r.divergence.method);
    d["branch"] = r.divergence.branch == DivergenceEstimate::Branch::pq ? "pq" : "uv";
    d["value"] = r.divergence.value;
    d["value_pq"] = r.divergence.value_pq;
    d["value_uv"] = r.divergence.value_uv;
    d["witness"] = r.divergence.witness;
    d["clamped"] = r.divergence.clamped;
    d["tie_count"] = r.divergence.tie_count;
    j["divergence_detail"] = std::move(d);
    j["labeled"] = cell.labeled;
    if (cell.labeled) {
        j["target_risk"] = cell.target_risk;
        j["violated"] = cell.violated;
    }
    j["wall_time_s"] = cell.wall_time_s;
    return j.dump(2) + "\n";
}

std::string bounds_summary_csv(const BoundsSuiteResult& result) {
    std::string out =
        "task,kind,seed,status,adaptability,source_gibbs_risk,divergence,divergence_mc_penalty,"
        "kl_nats,complexity_penalty,rho,total,m,delta,target_risk,violated,violation_rate\n";
    for (const auto& c : result.cells) {
        const auto& r = c.report;
        out += csv_escape(c.task) + "," + bound_kind_name(c.kind) + "," + std::to_string(c.seed) +
               "," + csv_escape(c.status) + ",";
        if (c.status == "ok") {
            out += format_double(r.adaptability) + std::string(",") +
                   format_double(r.source_gibbs_risk) + "," + format_double(r.divergence_term) + "," +
                   format_double(r.divergence_mc_penalty) + "," + format_double(r.kl_nats) + "," +
                   format_double(r.complexity_penalty) + "," + format_double(r.rho) + "," +
                   format_double(r.total) + "," + std::to_string(r.m) + "," +
                   format_double(r.delta) + ",";
            if (c.labeled) {
                out += format_double(c.target_risk) + std::string(",") + (c.violated ? "1" : "0") +
                       "," + format_double(result.violation_rate);
            } else {
                out += ",,";
            }
        } else {
            out += ",,,,,,,,,,,,";
        }
        out += "\n";
    }
    return out;
}

std::string ranking_summary_csv(const RankingResult& result) {
    std::string out = "task,seed,status,error_gap,hdh,hdeltah\n";
    for (const auto& c : result.cells) {
        out += csv_escape(c.task) + "," + std::to_string(c.seed) + "," + csv_escape(c.status) + ",";
        if (c.status == "ok") {
            out += format_double(c.error_gap) + std::string(",") + format_double(c.hdh) + "," +
                   format_double(c.hdeltah);
        } else {
            out += ",,";
        }
        out += "\n";
    }
    out += "spearman,,summary,,";
    out += result.spearman_hdh ? format_double(*result.spearman_hdh) : std::string();
    out += ",";
    out += result.spearman_hdeltah ? format_double(*result.spearman_hdeltah) : std::string();
    out += "\n";
    return out;
}

std::vector<const BoundCell*> trimmed_view(const BoundsSuiteResult& result) {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < result.cells.size(); ++i)
        if (result.cells[i].status == "ok") ok.push_back(i);
    const std::size_t drop =
        static_cast<std::size_t>(std::floor(static_cast<double>(ok.size()) * 0.05));
    std::vector<bool> dropped(result.cells.size(), false);
    if (drop > 0) {
        // Drop the `drop` largest totals; ties resolve toward later cells so
        // the kept set is deterministic.
        std::vector<std::size_t> order = ok;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ta = result.cells[a].report.total;
            const double tb = result.cells[b].report.total;
            if (ta != tb) return ta > tb;
            return a > b;
        });
        for (std::size_t i = 0; i < drop; ++i) dropped[order[i]] = true;
    }
    std::vector<const BoundCell*> view;
    for (const std::size_t i : ok)
        if (!dropped[i]) view.push_back(&result.cells[i]);
    return view;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw std::runtime_error("short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace pbda
