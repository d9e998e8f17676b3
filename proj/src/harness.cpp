#include "seleval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <numeric>
#include <set>
#include <thread>

#include "seleval/rng.hpp"

namespace seleval {

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::CascadedSelective: return "cascaded_selective";
        case Strategy::NoSelection: return "no_selection";
        case Strategy::Heuristic: return "heuristic";
        case Strategy::CascadedHeuristic: return "cascaded_heuristic";
        case Strategy::PointEstimate: return "point_estimate";
    }
    return "?";
}

Strategy parse_strategy(std::string_view s) {
    if (s == "cascaded_selective") return Strategy::CascadedSelective;
    if (s == "no_selection") return Strategy::NoSelection;
    if (s == "heuristic") return Strategy::Heuristic;
    if (s == "cascaded_heuristic") return Strategy::CascadedHeuristic;
    if (s == "point_estimate") return Strategy::PointEstimate;
    throw ConfigError("unknown strategy: " + std::string(s));
}

namespace {

ShotMode parse_shot_mode(std::string_view s) {
    if (s == "individual") return ShotMode::Individual;
    if (s == "majority") return ShotMode::Majority;
    if (s == "randomized") return ShotMode::Randomized;
    throw ConfigError("unknown shot mode: " + std::string(s));
}

ConfidenceMode parse_confidence_mode(std::string_view s) {
    if (s == "simulated_annotators") return ConfidenceMode::SimulatedAnnotators;
    if (s == "predictive") return ConfidenceMode::Predictive;
    throw ConfigError("unknown confidence mode: " + std::string(s));
}

TiePolicy parse_tie_policy(std::string_view s) {
    if (s == "exclude") return TiePolicy::Exclude;
    if (s == "always_disagree") return TiePolicy::AlwaysDisagree;
    throw ConfigError("unknown tie policy: " + std::string(s));
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        const auto& ds = j.at("dataset");
        if (ds.contains("path")) c.dataset_path = ds.at("path").get<std::string>();
        if (ds.contains("synthetic")) {
            const auto& s = ds.at("synthetic");
            WorldParams w;
            w.size = s.at("size").get<std::size_t>();
            w.annotator_pool = s.value("annotators", 5);
            w.seed = s.value("seed", uint64_t{0});
            w.model_tags = s.value("models", 10);
            w.difficulty_slope = s.value("difficulty_slope", 0.4);
            c.synthetic = w;
        }
        if (!c.dataset_path && !c.synthetic)
            throw ConfigError("dataset: either \"path\" or \"synthetic\" is required");
        c.label_space.allow_tie = ds.value("allow_tie", false);

        if (!j.contains("judges") || !j.at("judges").is_array() || j.at("judges").empty())
            throw ConfigError("at least one judge is required");
        for (const auto& je : j.at("judges")) c.judges.push_back(judge_spec_from_json(je));

        if (j.contains("confidence")) {
            const auto& conf = j.at("confidence");
            c.confidence_mode =
                parse_confidence_mode(conf.value("mode", "simulated_annotators"));
            c.shot_mode = parse_shot_mode(conf.value("shots", "individual"));
            c.shots_k = conf.value("k", 5);
            c.annotators_n = conf.value("n", 5);
        }
        c.alpha = j.value("alpha", 0.1);
        c.delta = j.value("delta", 0.1);
        c.cal_size = j.value("cal_size", std::size_t{500});
        c.trials = j.value("trials", 1);
        c.seed = j.value("seed", uint64_t{0});
        c.strategy = parse_strategy(j.value("strategy", "cascaded_selective"));
        c.point_estimate_judge = j.value("point_estimate_judge", -1);
        c.shift = j.value("shift", false);
        c.tie_policy = parse_tie_policy(j.value("tie_policy", "exclude"));
        c.threads = j.value("threads", 0);
        c.shot_pool_size = j.value("shot_pool", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    if (c.shots_k < 1 || c.annotators_n < 1) throw ConfigError("K and N must be >= 1");
    if (c.confidence_mode == ConfidenceMode::Predictive) c.annotators_n = 1;
    return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json ds;
    if (c.dataset_path) ds["path"] = *c.dataset_path;
    if (c.synthetic) {
        ds["synthetic"] = {{"size", c.synthetic->size},
                           {"annotators", c.synthetic->annotator_pool},
                           {"seed", c.synthetic->seed},
                           {"models", c.synthetic->model_tags},
                           {"difficulty_slope", c.synthetic->difficulty_slope}};
    }
    ds["allow_tie"] = c.label_space.allow_tie;
    auto judges = nlohmann::json::array();
    for (const auto& spec : c.judges) judges.push_back(judge_spec_to_json(spec));
    return {{"dataset", std::move(ds)},
            {"judges", std::move(judges)},
            {"confidence",
             {{"mode", c.confidence_mode == ConfidenceMode::Predictive ? "predictive"
                                                                       : "simulated_annotators"},
              {"shots", std::string(shot_mode_name(c.shot_mode))},
              {"k", c.shots_k},
              {"n", c.annotators_n}}},
            {"alpha", c.alpha},
            {"delta", c.delta},
            {"cal_size", c.cal_size},
            {"trials", c.trials},
            {"seed", c.seed},
            {"strategy", std::string(strategy_name(c.strategy))},
            {"point_estimate_judge", c.point_estimate_judge},
            {"shift", c.shift},
            {"tie_policy", c.tie_policy == TiePolicy::Exclude ? "exclude" : "always_disagree"},
            {"threads", c.threads},
            {"shot_pool", c.shot_pool_size}};
}

uint64_t trial_seed(uint64_t master, int trial) {
    return hash_mix(hash_mix(master, fnv1a64("trial")), static_cast<uint64_t>(trial));
}

namespace {

std::vector<std::size_t> seeded_permutation(std::size_t size, uint64_t seed) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    SplitMix64 rng(hash_mix(seed, fnv1a64("split")));
    for (std::size_t i = 0; i + 1 < size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(size - i));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

struct IndexShift {
    std::vector<std::size_t> cal, test;
    long dropped = 0;
    std::vector<std::string> cal_models, test_models;
};

IndexShift shifted_split_indices(const Dataset& dataset, uint64_t seed) {
    std::set<std::string> models;
    for (const auto& inst : dataset.instances) {
        auto a = inst.meta.find("model_a");
        auto b = inst.meta.find("model_b");
        if (a == inst.meta.end() || b == inst.meta.end())
            throw ConfigError("shifted split: instance " + inst.id +
                              " lacks model_a/model_b metadata");
        models.insert(a->second);
        models.insert(b->second);
    }
    if (models.size() < 2) throw ConfigError("shifted split: need at least two distinct models");
    std::vector<std::string> ordered(models.begin(), models.end());
    SplitMix64 rng(hash_mix(seed, fnv1a64("shift")));
    for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(ordered.size() - i));
        std::swap(ordered[i], ordered[j]);
    }
    const std::size_t half = ordered.size() / 2;
    std::set<std::string> first_half(ordered.begin(), ordered.begin() + half);

    IndexShift out;
    out.cal_models.assign(ordered.begin(), ordered.begin() + half);
    out.test_models.assign(ordered.begin() + half, ordered.end());
    std::sort(out.cal_models.begin(), out.cal_models.end());
    std::sort(out.test_models.begin(), out.test_models.end());
    for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
        const auto& inst = dataset.instances[i];
        const bool a1 = first_half.count(inst.meta.at("model_a")) > 0;
        const bool b1 = first_half.count(inst.meta.at("model_b")) > 0;
        if (a1 && b1)
            out.cal.push_back(i);
        else if (!a1 && !b1)
            out.test.push_back(i);
        else
            ++out.dropped;
    }
    return out;
}

}  // namespace

std::pair<Dataset, Dataset> random_split(const Dataset& dataset, std::size_t cal_size,
                                         uint64_t seed) {
    if (cal_size >= dataset.size())
        throw std::invalid_argument("random_split: cal_size must be < dataset size");
    const auto perm = seeded_permutation(dataset.size(), seed);
    Dataset cal, test;
    cal.label_space = test.label_space = dataset.label_space;
    for (std::size_t i = 0; i < perm.size(); ++i)
        (i < cal_size ? cal : test).instances.push_back(dataset.instances[perm[i]]);
    return {std::move(cal), std::move(test)};
}

ShiftResult shifted_split(const Dataset& dataset, uint64_t seed) {
    const IndexShift idx = shifted_split_indices(dataset, seed);
    ShiftResult out;
    out.cal.label_space = out.test.label_space = dataset.label_space;
    for (std::size_t i : idx.cal) out.cal.instances.push_back(dataset.instances[i]);
    for (std::size_t i : idx.test) out.test.instances.push_back(dataset.instances[i]);
    out.dropped = idx.dropped;
    out.cal_models = idx.cal_models;
    out.test_models = idx.test_models;
    return out;
}

std::size_t RunContext::instance_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown instance id: " + id);
    return it->second;
}

RunContext RunContext::prepare(const ExperimentConfig& config) {
    RunContext ctx;
    ctx.config_ = config;

    // A file path supplies the data; synthetic params (also) supply the latent
    // world that synthetic judges read. Both may be present: a saved synthetic
    // dataset can be re-evaluated from its file against the same world.
    Dataset full;
    if (config.synthetic) {
        auto [ds, world] = generate_world(*config.synthetic);
        full = std::move(ds);
        ctx.world_ = std::make_shared<SyntheticWorld>(std::move(world));
    }
    if (config.dataset_path) {
        full = load_dataset_jsonl(*config.dataset_path, config.label_space);
    } else if (!config.synthetic) {
        throw ConfigError("config has neither a dataset path nor synthetic world parameters");
    }

    // Carve the shot pool off the head of a seeded shuffle; pooled instances
    // never appear in any calibration or test split, so shots can never
    // include the instance under evaluation.
    std::size_t pool_need = 0;
    if (config.confidence_mode == ConfidenceMode::SimulatedAnnotators ||
        config.confidence_mode == ConfidenceMode::Predictive) {
        switch (config.shot_mode) {
            case ShotMode::Individual:
            case ShotMode::Randomized:
                pool_need = static_cast<std::size_t>(config.shots_k);
                break;
            case ShotMode::Majority:
                pool_need = static_cast<std::size_t>(config.shots_k) *
                            static_cast<std::size_t>(config.annotators_n);
                break;
        }
    }
    pool_need = std::max(pool_need, config.shot_pool_size);
    if (pool_need + 1 >= full.size())
        throw ConfigError("dataset too small for a " + std::to_string(pool_need) +
                          "-instance shot pool");
    const auto perm = seeded_permutation(full.size(), hash_mix(config.seed, fnv1a64("pool")));
    ctx.pool_.label_space = ctx.data_.label_space = full.label_space;
    for (std::size_t i = 0; i < perm.size(); ++i)
        (i < pool_need ? ctx.pool_ : ctx.data_).instances.push_back(
            std::move(full.instances[perm[i]]));

    ctx.plan_ = build_shot_plan(ctx.pool_.instances, config.shot_mode, config.shots_k,
                                config.annotators_n, config.seed);
    ctx.digest_ = shot_plan_digest(ctx.plan_);

    for (const auto& spec : config.judges) {
        auto judge = make_judge(spec, ctx.world_);
        register_remote_shot_texts(*judge, ctx.pool_.instances);
        ctx.judges_.push_back(std::move(judge));
    }

    for (std::size_t i = 0; i < ctx.data_.instances.size(); ++i) {
        const auto& inst = ctx.data_.instances[i];
        ctx.index_[inst.id] = i;
        if (!inst.annotations.empty()) ctx.truth_[inst.id] = majority_label(inst.annotations);
    }

    // Judge outputs once per (instance, judge); every strategy and trial reads
    // this shared table.
    const int threads = config.threads > 0
                            ? config.threads
                            : std::max(1u, std::thread::hardware_concurrency());
    ctx.judgements_.resize(ctx.judges_.size());
    for (auto& v : ctx.judgements_) v.resize(ctx.data_.instances.size());
    for (std::size_t j = 0; j < ctx.judges_.size(); ++j) {
        Judge& judge = *ctx.judges_[j];
        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::string error;
        std::mutex err_mu;
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= ctx.data_.instances.size() || failed.load()) return;
                try {
                    const AnnotatorSimulation sim =
                        judge.evaluate(ctx.data_.instances[i], ctx.plan_);
                    ctx.judgements_[j][i] = config.confidence_mode == ConfidenceMode::Predictive
                                                ? predictive_probability(sim.rows.at(0),
                                                                         ctx.data_.label_space)
                                                : aggregate_simulated_annotators(
                                                      sim, ctx.data_.label_space);
                } catch (const std::exception& e) {
                    std::lock_guard lock(err_mu);
                    if (!failed.exchange(true))
                        error = "judge " + judge.spec().id + " failed on instance " +
                                ctx.data_.instances[i].id + ": " + e.what();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (failed.load()) throw std::runtime_error(error);
    }
    return ctx;
}

std::vector<int> RunContext::all_judges() const {
    std::vector<int> idx(judges_.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

int RunContext::strongest_judge() const { return static_cast<int>(judges_.size()) - 1; }

std::vector<CascadeStage> RunContext::stages(const std::vector<int>& judge_indices) const {
    std::vector<CascadeStage> out;
    for (int j : judge_indices) {
        CascadeStage stage;
        stage.spec = judges_[static_cast<std::size_t>(j)]->spec();
        stage.evaluate = [this, j](const PreferenceInstance& inst) {
            return judgements_[static_cast<std::size_t>(j)][instance_index(inst.id)];
        };
        out.push_back(std::move(stage));
    }
    return out;
}

namespace {

std::vector<EvalRecord> records_for(const RunContext& ctx, int judge,
                                    const std::vector<std::size_t>& instance_idx) {
    std::vector<EvalRecord> out;
    out.reserve(instance_idx.size());
    for (std::size_t i : instance_idx) {
        const auto& inst = ctx.data().instances[i];
        if (inst.annotations.empty()) continue;
        const MajorityLabel m = majority_label(inst.annotations);
        if (!m.has_winner() && ctx.config().tie_policy == TiePolicy::Exclude) continue;
        const Judgement& j = ctx.judgement(static_cast<std::size_t>(judge), i);
        EvalRecord r;
        r.instance_id = inst.id;
        r.verdict = j.verdict;
        r.confidence = j.confidence;
        r.human = m.label;
        out.push_back(std::move(r));
    }
    return out;
}

ThresholdSet fixed_thresholds(const RunContext& ctx, const std::vector<int>& judges,
                              std::optional<double> value) {
    ThresholdSet ts;
    ts.alpha = ctx.config().alpha;
    ts.delta = ctx.config().delta;
    for (int j : judges) {
        ThresholdSet::PerJudge pj;
        pj.id = ctx.config().judges[static_cast<std::size_t>(j)].id;
        pj.threshold = value;
        ts.per_judge.push_back(std::move(pj));
    }
    return ts;
}

}  // namespace

TrialReport run_strategy(const RunContext& ctx, Strategy strategy,
                         const std::vector<std::size_t>& cal_idx,
                         const std::vector<std::size_t>& test_idx,
                         ThresholdSet* thresholds_out) {
    const auto& config = ctx.config();
    std::vector<int> judges;
    ThresholdSet thresholds;
    switch (strategy) {
        case Strategy::CascadedSelective: {
            judges = ctx.all_judges();
            std::vector<std::string> ids;
            std::vector<std::vector<EvalRecord>> records;
            for (int j : judges) {
                ids.push_back(config.judges[static_cast<std::size_t>(j)].id);
                records.push_back(records_for(ctx, j, cal_idx));
            }
            thresholds = calibrate_cascade_aligned(ids, records, config.alpha, config.delta);
            break;
        }
        case Strategy::NoSelection:
            judges = {ctx.strongest_judge()};
            thresholds = fixed_thresholds(ctx, judges, 0.0);
            break;
        case Strategy::Heuristic:
            judges = {ctx.strongest_judge()};
            thresholds = fixed_thresholds(ctx, judges, 1.0 - config.alpha);
            break;
        case Strategy::CascadedHeuristic:
            judges = ctx.all_judges();
            thresholds = fixed_thresholds(ctx, judges, 1.0 - config.alpha);
            break;
        case Strategy::PointEstimate: {
            int j = config.point_estimate_judge;
            if (j < 0) j = ctx.strongest_judge();
            if (j >= static_cast<int>(config.judges.size()))
                throw ConfigError("point_estimate_judge out of range");
            judges = {j};
            const auto records = records_for(ctx, j, cal_idx);
            if (records.empty()) throw ConfigError("point estimate: empty calibration set");
            thresholds = fixed_thresholds(ctx, judges, std::nullopt);
            thresholds.per_judge[0].threshold = point_estimate_threshold(records, config.alpha);
            break;
        }
    }
    if (thresholds_out) *thresholds_out = thresholds;

    const auto stages = ctx.stages(judges);
    std::vector<CascadeOutcome> outcomes;
    outcomes.reserve(test_idx.size());
    for (std::size_t i : test_idx)
        outcomes.push_back(run_cascade(ctx.data().instances[i], stages, thresholds));

    // Metrics condition on decided human majorities; under the exclude policy
    // tied instances leave both the numerator and the coverage denominator.
    std::vector<CascadeOutcome> kept;
    kept.reserve(outcomes.size());
    for (auto& o : outcomes) {
        auto it = ctx.truth().find(o.instance_id);
        const bool decided = it != ctx.truth().end() && it->second.has_winner();
        if (!decided && ctx.config().tie_policy == TiePolicy::Exclude) continue;
        if (!decided && o.decision == CascadeOutcome::Decision::Evaluated) {
            // always-disagree accounting: keep the instance, count the miss
            o.verdict = std::nullopt;
        }
        kept.push_back(std::move(o));
    }

    std::vector<JudgeSpec> specs;
    for (const auto& s : config.judges) specs.push_back(s);

    // tolerate always-disagree rows lacking truth
    std::unordered_map<std::string, MajorityLabel> truth = ctx.truth();
    if (ctx.config().tie_policy == TiePolicy::AlwaysDisagree) {
        for (const auto& o : kept) {
            auto it = truth.find(o.instance_id);
            if (it == truth.end() || !it->second.has_winner()) {
                MajorityLabel never;
                never.label = Label::Tie;  // never matches a binary verdict
                never.count = 1;
                never.total = 1;
                truth[o.instance_id] = never;
            }
        }
    }
    return trial_report(kept, truth, specs);
}

AggregateReport run_trials(const ExperimentConfig& config) {
    RunContext ctx = RunContext::prepare(config);
    return run_trials(ctx);
}

AggregateReport run_trials(const RunContext& ctx) {
    const ExperimentConfig& config = ctx.config();
    if (!config.shift && config.cal_size >= ctx.data().size())
        throw ConfigError("cal_size " + std::to_string(config.cal_size) +
                          " must be smaller than the post-pool dataset (" +
                          std::to_string(ctx.data().size()) + ")");

    AggregateReport agg;
    agg.trials = config.trials;
    agg.alpha = config.alpha;
    agg.delta = config.delta;
    agg.strategy = std::string(strategy_name(config.strategy));
    agg.per_trial.resize(static_cast<std::size_t>(config.trials));

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= config.trials || failed.load()) return;
            const uint64_t seed = trial_seed(config.seed, t);
            try {
                std::vector<std::size_t> cal_idx, test_idx;
                if (config.shift) {
                    IndexShift s = shifted_split_indices(ctx.data(), seed);
                    cal_idx = std::move(s.cal);
                    test_idx = std::move(s.test);
                    if (cal_idx.empty() || test_idx.empty())
                        throw std::runtime_error("shifted split produced an empty side");
                } else {
                    const auto perm = seeded_permutation(ctx.data().size(), seed);
                    cal_idx.assign(perm.begin(),
                                   perm.begin() + static_cast<long>(config.cal_size));
                    test_idx.assign(perm.begin() + static_cast<long>(config.cal_size),
                                    perm.end());
                }
                auto& row = agg.per_trial[static_cast<std::size_t>(t)];
                row.trial = t;
                row.seed = seed;
                row.report = run_strategy(ctx, config.strategy, cal_idx, test_idx);
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mu);
                if (!failed.exchange(true))
                    error = "trial " + std::to_string(t) + " (seed " + std::to_string(seed) +
                            ") failed: " + e.what();
            }
        }
    };
    const int threads = config.threads > 0
                            ? config.threads
                            : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(threads, config.trials); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load()) throw std::runtime_error(error);

    // reduce in trial order for deterministic float accumulation
    std::vector<std::optional<double>> agreements;
    double cov_sum = 0.0, cost_sum = 0.0;
    std::map<std::string, double> comp_sum;
    long defined = 0;
    for (const auto& row : agg.per_trial) {
        const TrialReport& r = row.report;
        agreements.push_back(r.selective_agreement);
        cov_sum += r.coverage;
        cost_sum += r.relative_cost;
        agg.failed_instances += r.failed;
        if (r.selective_agreement) {
            ++defined;
            const double a = *r.selective_agreement;
            agg.agreement_mean = agg.agreement_mean.value_or(0.0) + a;
            agg.agreement_min = agg.agreement_min ? std::min(*agg.agreement_min, a) : a;
            agg.agreement_max = agg.agreement_max ? std::max(*agg.agreement_max, a) : a;
            for (const auto& [id, frac] : r.composition) comp_sum[id] += frac;
        }
    }
    agg.undefined_runs = config.trials - defined;
    if (defined > 0) {
        agg.agreement_mean = *agg.agreement_mean / defined;
        for (auto& [id, total] : comp_sum) agg.composition_mean[id] = total / defined;
    }
    agg.coverage_mean = cov_sum / config.trials;
    agg.relative_cost_mean = cost_sum / config.trials;
    agg.success_rate = guarantee_success_rate(agreements, config.alpha);
    return agg;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> opt_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

std::string aggregate_to_json(const AggregateReport& report) {
    nlohmann::json j;
    j["trials"] = report.trials;
    j["alpha"] = report.alpha;
    j["delta"] = report.delta;
    j["strategy"] = report.strategy;
    j["success_rate"] = report.success_rate;
    j["agreement_mean"] = opt_json(report.agreement_mean);
    j["agreement_min"] = opt_json(report.agreement_min);
    j["agreement_max"] = opt_json(report.agreement_max);
    j["coverage_mean"] = report.coverage_mean;
    j["composition_mean"] = report.composition_mean;
    j["relative_cost_mean"] = report.relative_cost_mean;
    j["undefined_runs"] = report.undefined_runs;
    j["failed_instances"] = report.failed_instances;
    return j.dump(2) + "\n";
}

AggregateReport aggregate_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("aggregate report: invalid JSON (") + e.what() + ")");
    }
    AggregateReport r;
    try {
        r.trials = j.at("trials").get<int>();
        r.alpha = j.at("alpha").get<double>();
        r.delta = j.at("delta").get<double>();
        r.strategy = j.value("strategy", "");
        r.success_rate = j.at("success_rate").get<double>();
        r.agreement_mean = opt_from(j.at("agreement_mean"));
        r.agreement_min = opt_from(j.at("agreement_min"));
        r.agreement_max = opt_from(j.at("agreement_max"));
        r.coverage_mean = j.at("coverage_mean").get<double>();
        for (auto it = j.at("composition_mean").begin(); it != j.at("composition_mean").end();
             ++it)
            r.composition_mean[it.key()] = it.value().get<double>();
        r.relative_cost_mean = j.at("relative_cost_mean").get<double>();
        r.undefined_runs = j.at("undefined_runs").get<long>();
        r.failed_instances = j.at("failed_instances").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("aggregate report: schema violation (") + e.what() +
                              ")");
    }
    return r;
}

std::string aggregate_to_csv(const AggregateReport& report) {
    std::string csv = "trial,seed,agreement,coverage,relative_cost,evaluated,abstained,failed";
    std::vector<std::string> judge_ids;
    for (const auto& [id, _] : report.composition_mean) judge_ids.push_back(id);
    for (const auto& id : judge_ids) csv += ",comp_" + id;
    csv += "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& row : report.per_trial) {
        const TrialReport& r = row.report;
        csv += std::to_string(row.trial) + "," + std::to_string(row.seed) + ",";
        if (r.selective_agreement) csv += num(*r.selective_agreement);
        csv += "," + num(r.coverage) + "," + num(r.relative_cost) + "," +
               std::to_string(r.evaluated) + "," + std::to_string(r.abstained) + "," +
               std::to_string(r.failed);
        for (const auto& id : judge_ids) {
            auto it = r.composition.find(id);
            csv += ",";
            csv += num(it == r.composition.end() ? 0.0 : it->second);
        }
        csv += "\n";
    }
    return csv;
}

}  // namespace seleval
