#include "seleval/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "seleval/harness.hpp"
#include "seleval/io_util.hpp"
#include "seleval/rng.hpp"

namespace seleval {

namespace {

constexpr const char* kVersion = "0.1.0";

nlohmann::json load_json_file(const std::string& path, const char* what) {
    const std::string text = read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string(what) + " " + path + ": invalid JSON (" + e.what() +
                              ")");
    }
}

std::string hex_digest(const std::string& blob) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(blob)));
    return buf;
}

void write_manifest(const std::string& path, const std::string& command,
                    const ExperimentConfig& config, const nlohmann::json& extra) {
    nlohmann::json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = config.seed;
    m["config_digest"] = hex_digest(experiment_config_to_json(config).dump());
    m["deterministic"] = true;
    for (const auto& spec : config.judges) {
        if (spec.kind == JudgeKind::Remote) m["deterministic"] = false;  // network involved
    }
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_file_atomic(path, m.dump(2) + "\n");
}

// Paths inside a config file resolve against the config's own directory;
// paths given on the command line resolve against the working directory.
std::string resolve_near(const std::string& config_path, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(config_path).parent_path() / p).string();
}

ExperimentConfig config_from_flags(const std::string& config_path,
                                   const std::optional<std::string>& dataset,
                                   const std::optional<double>& alpha,
                                   const std::optional<double>& delta,
                                   const std::optional<uint64_t>& seed,
                                   const std::optional<int>& trials) {
    ExperimentConfig config = parse_experiment_config(load_json_file(config_path, "config"));
    if (config.dataset_path) config.dataset_path = resolve_near(config_path, *config.dataset_path);
    for (auto& spec : config.judges) {
        if (spec.params.contains("cache_path"))
            spec.params["cache_path"] =
                resolve_near(config_path, spec.params["cache_path"].get<std::string>());
    }
    if (dataset) config.dataset_path = *dataset;  // synthetic world params stay
    if (alpha) config.alpha = *alpha;
    if (delta) config.delta = *delta;
    if (seed) config.seed = *seed;
    if (trials) config.trials = *trials;
    if (!(config.alpha > 0.0 && config.alpha < 1.0))
        throw ConfigError("--alpha must lie in (0, 1)");
    if (!(config.delta > 0.0 && config.delta < 1.0))
        throw ConfigError("--delta must lie in (0, 1)");
    if (config.trials < 1) throw ConfigError("--trials must be >= 1");
    return config;
}

int cmd_calibrate(const std::string& config_path, const std::optional<std::string>& dataset,
                  const std::optional<double>& alpha, const std::optional<double>& delta,
                  const std::optional<uint64_t>& seed, const std::string& out) {
    ExperimentConfig config =
        config_from_flags(config_path, dataset, alpha, delta, seed, std::nullopt);
    RunContext ctx = RunContext::prepare(config);

    std::vector<std::size_t> all(ctx.data().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<std::string> ids;
    std::vector<std::vector<EvalRecord>> records;
    for (std::size_t j = 0; j < config.judges.size(); ++j) {
        ids.push_back(config.judges[j].id);
        std::vector<EvalRecord> r;
        for (std::size_t i : all) {
            const auto& inst = ctx.data().instances[i];
            if (inst.annotations.empty()) continue;
            const MajorityLabel m = majority_label(inst.annotations);
            if (!m.has_winner() && config.tie_policy == TiePolicy::Exclude) continue;
            const Judgement& jm = ctx.judgement(j, i);
            r.push_back({inst.id, jm.verdict, jm.confidence, m.label});
        }
        records.push_back(std::move(r));
    }
    const ThresholdSet ts =
        calibrate_cascade_aligned(ids, records, config.alpha, config.delta);

    write_file_atomic(out, threshold_set_to_json(ts));
    write_manifest(out + ".manifest.json", "calibrate", config,
                   {{"out", out}, {"shot_plan_digest", ctx.plan_digest()}});

    std::printf("calibrated %zu judge(s) at alpha=%g delta=%g on %zu records\n",
                ts.per_judge.size(), ts.alpha, ts.delta,
                records.empty() ? 0 : records.front().size());
    for (const auto& pj : ts.per_judge) {
        if (pj.threshold)
            std::printf("  %-16s threshold %.6f\n", pj.id.c_str(), *pj.threshold);
        else
            std::printf("  %-16s always abstain%s\n", pj.id.c_str(),
                        pj.warning.empty() ? "" : (" (" + pj.warning + ")").c_str());
    }
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& dataset_path,
                 const std::string& thresholds_path, const std::string& out) {
    ExperimentConfig config = config_from_flags(config_path, dataset_path, std::nullopt,
                                                std::nullopt, std::nullopt, std::nullopt);
    if (load_dataset_jsonl(dataset_path, config.label_space).size() == 0) {
        write_file_atomic(out, "");
        write_file_atomic(out + ".report.json", trial_report_to_json(TrialReport{}));
        write_manifest(out + ".manifest.json", "evaluate", config,
                       {{"thresholds", thresholds_path}, {"out", out}});
        std::printf("dataset is empty; wrote empty outcomes\n");
        return 0;
    }
    const ThresholdSet ts = threshold_set_from_json(read_file(thresholds_path));
    if (ts.per_judge.size() != config.judges.size())
        throw ValidationError("thresholds list " + std::to_string(ts.per_judge.size()) +
                              " judge(s), config cascade has " +
                              std::to_string(config.judges.size()));
    for (std::size_t i = 0; i < ts.per_judge.size(); ++i) {
        if (ts.per_judge[i].id != config.judges[i].id)
            throw ValidationError("judge order mismatch at position " + std::to_string(i) +
                                  ": thresholds say \"" + ts.per_judge[i].id +
                                  "\", config says \"" + config.judges[i].id + "\"");
    }

    RunContext ctx = RunContext::prepare(config);
    const auto stages = ctx.stages(ctx.all_judges());
    const auto outcomes =
        evaluate_dataset(ctx.data(), stages, ts,
                         config.threads > 0 ? config.threads : 1);

    // agreement only over evaluated instances with a decided human majority
    std::vector<CascadeOutcome> with_truth;
    long unlabeled = 0;
    for (const auto& o : outcomes) {
        auto it = ctx.truth().find(o.instance_id);
        const bool decided = it != ctx.truth().end() && it->second.has_winner();
        if (o.decision == CascadeOutcome::Decision::Evaluated && !decided) {
            ++unlabeled;
            continue;
        }
        if (!decided && o.decision != CascadeOutcome::Decision::Evaluated &&
            config.tie_policy == TiePolicy::Exclude && it == ctx.truth().end()) {
            // unlabeled non-evaluated instances still count for coverage
        }
        with_truth.push_back(o);
    }
    const TrialReport report = trial_report(with_truth, ctx.truth(), config.judges);

    write_file_atomic(out, outcomes_to_jsonl(outcomes));
    nlohmann::json rj = nlohmann::json::parse(trial_report_to_json(report));
    rj["unlabeled_evaluated"] = unlabeled;
    write_file_atomic(out + ".report.json", rj.dump(2) + "\n");
    write_manifest(out + ".manifest.json", "evaluate", config,
                   {{"thresholds", thresholds_path}, {"out", out}});
    std::printf("evaluated %ld, abstained %ld, failed %ld (coverage %.4f)\n", report.evaluated,
                report.abstained, report.failed, report.coverage);
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::optional<int>& trials,
                 const std::optional<uint64_t>& seed, const std::string& out_dir) {
    ExperimentConfig config = config_from_flags(config_path, std::nullopt, std::nullopt,
                                                std::nullopt, seed, trials);
    std::filesystem::create_directories(out_dir);
    const AggregateReport report = run_trials(config);
    write_file_atomic(out_dir + "/aggregate.json", aggregate_to_json(report));
    write_file_atomic(out_dir + "/trials.csv", aggregate_to_csv(report));
    write_manifest(out_dir + "/manifest.json", "simulate", config,
                   {{"out", out_dir}, {"trials", config.trials}});
    std::printf("%d trial(s): success rate %.4f, mean coverage %.4f\n", report.trials,
                report.success_rate, report.coverage_mean);
    return 0;
}

int cmd_replay(const std::string& config_path, const std::optional<std::string>& dataset,
               const std::optional<std::string>& cache,
               const std::optional<uint64_t>& seed, const std::string& out_dir) {
    ExperimentConfig config = config_from_flags(config_path, dataset, std::nullopt,
                                                std::nullopt, seed, std::nullopt);
    for (auto& spec : config.judges) {
        if (cache) {
            spec.kind = JudgeKind::Cached;
            spec.params["cache_path"] = *cache;
        }
        if (spec.kind != JudgeKind::Cached)
            throw ConfigError("replay requires cached judges; \"" + spec.id + "\" is " +
                              std::string(judge_kind_name(spec.kind)));
    }
    RunContext ctx = RunContext::prepare(config);
    for (const auto& spec : config.judges) {
        const auto header = load_prediction_cache(spec.params.at("cache_path"));
        if (header.shot_plan_digest != ctx.plan_digest())
            throw ValidationError("cache digest " + header.shot_plan_digest +
                                  " does not match the shot plan digest " + ctx.plan_digest() +
                                  " for judge \"" + spec.id + "\"");
    }

    if (config.cal_size >= ctx.data().size())
        throw ConfigError("cal_size must be smaller than the post-pool dataset");
    const uint64_t split_seed = trial_seed(config.seed, 0);
    const auto perm_pair = random_split(ctx.data(), config.cal_size, split_seed);
    std::vector<std::size_t> cal_idx, test_idx;
    for (const auto& inst : perm_pair.first.instances) cal_idx.push_back(ctx.instance_index(inst.id));
    for (const auto& inst : perm_pair.second.instances) test_idx.push_back(ctx.instance_index(inst.id));

    ThresholdSet ts;
    const TrialReport report = run_strategy(ctx, config.strategy, cal_idx, test_idx, &ts);

    std::vector<CascadeOutcome> outcomes;
    const auto stages = ctx.stages(ctx.all_judges());
    if (config.strategy == Strategy::CascadedSelective) {
        for (std::size_t i : test_idx)
            outcomes.push_back(run_cascade(ctx.data().instances[i], stages, ts));
    }

    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir + "/thresholds.json", threshold_set_to_json(ts));
    write_file_atomic(out_dir + "/outcomes.jsonl", outcomes_to_jsonl(outcomes));
    write_file_atomic(out_dir + "/report.json", trial_report_to_json(report));
    write_manifest(out_dir + "/manifest.json", "replay", config,
                   {{"out", out_dir}, {"shot_plan_digest", ctx.plan_digest()}});
    std::printf("replayed %zu test instance(s): coverage %.4f\n", test_idx.size(),
                report.coverage);
    return 0;
}

int cmd_report(const std::string& aggregate_path, const std::string& format,
               const std::optional<std::string>& out) {
    const AggregateReport r = aggregate_from_json(read_file(aggregate_path));
    if (r.trials < 1) throw ValidationError("aggregate report is empty (trials < 1)");
    std::string body;
    char buf[128];
    auto line = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof buf, fmt, args...);
        body += buf;
        body += '\n';
    };
    if (format == "table") {
        line("strategy            %s", r.strategy.c_str());
        line("trials              %d", r.trials);
        line("alpha / delta       %.4g / %.4g", r.alpha, r.delta);
        line("success rate        %.4f", r.success_rate);
        if (r.agreement_mean)
            line("agreement mean      %.4f (min %.4f, max %.4f)", *r.agreement_mean,
                 *r.agreement_min, *r.agreement_max);
        else
            line("agreement mean      undefined");
        line("coverage mean       %.4f", r.coverage_mean);
        line("relative cost mean  %.4f", r.relative_cost_mean);
        line("undefined runs      %ld", r.undefined_runs);
        for (const auto& [id, frac] : r.composition_mean)
            line("composition %-12s %.4f", id.c_str(), frac);
    } else if (format == "csv") {
        body = "strategy,trials,alpha,delta,success_rate,agreement_mean,coverage_mean,"
               "relative_cost_mean,undefined_runs\n";
        std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%.17g,", r.strategy.c_str(), r.trials,
                      r.alpha, r.delta, r.success_rate);
        body += buf;
        if (r.agreement_mean) {
            std::snprintf(buf, sizeof buf, "%.17g", *r.agreement_mean);
            body += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%ld\n", r.coverage_mean,
                      r.relative_cost_mean, r.undefined_runs);
        body += buf;
    } else {
        throw ConfigError("--format must be table or csv");
    }
    if (out)
        write_file_atomic(*out, body);
    else
        std::fputs(body.c_str(), stdout);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"selective pairwise evaluation with a human-agreement guarantee"};
    app.require_subcommand(1);

    std::string config_path, out, dataset_path, thresholds_path, aggregate_path;
    std::string format = "table";
    std::optional<std::string> dataset_opt, cache_opt, out_opt;
    std::optional<double> alpha_opt, delta_opt;
    std::optional<uint64_t> seed_opt;
    std::optional<int> trials_opt;

    auto* cal = app.add_subcommand("calibrate", "calibrate cascade thresholds on a dataset");
    cal->add_option("--config", config_path, "experiment config JSON")->required();
    cal->add_option("--dataset", dataset_opt, "dataset JSONL (overrides config)");
    cal->add_option("--alpha", alpha_opt, "risk tolerance in (0,1)");
    cal->add_option("--delta", delta_opt, "error level in (0,1)");
    cal->add_option("--seed", seed_opt, "master seed");
    cal->add_option("--out", out, "thresholds output path")->required();

    auto* ev = app.add_subcommand("evaluate", "run the cascade over a dataset");
    ev->add_option("--config", config_path, "experiment config JSON")->required();
    ev->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    ev->add_option("--thresholds", thresholds_path, "thresholds JSON from calibrate")->required();
    ev->add_option("--out", out, "outcomes JSONL output path")->required();

    auto* sim = app.add_subcommand("simulate", "seeded multi-trial experiment sweep");
    sim->add_option("--config", config_path, "experiment config JSON")->required();
    sim->add_option("--trials", trials_opt, "number of trials");
    sim->add_option("--seed", seed_opt, "master seed");
    sim->add_option("--out", out, "output directory")->required();

    auto* rep = app.add_subcommand("replay", "full pipeline against a prediction cache");
    rep->add_option("--config", config_path, "experiment config JSON")->required();
    rep->add_option("--dataset", dataset_opt, "dataset JSONL (overrides config)");
    rep->add_option("--cache", cache_opt, "prediction cache JSONL (overrides judge params)");
    rep->add_option("--seed", seed_opt, "master seed");
    rep->add_option("--out", out, "output directory")->required();

    auto* report = app.add_subcommand("report", "render an aggregate report");
    report->add_option("--aggregate", aggregate_path, "aggregate JSON from simulate")->required();
    report->add_option("--format", format, "table or csv");
    report->add_option("--out", out_opt, "write here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(cal))
            return cmd_calibrate(config_path, dataset_opt, alpha_opt, delta_opt, seed_opt, out);
        if (app.got_subcommand(ev))
            return cmd_evaluate(config_path, dataset_path, thresholds_path, out);
        if (app.got_subcommand(sim)) return cmd_simulate(config_path, trials_opt, seed_opt, out);
        if (app.got_subcommand(rep))
            return cmd_replay(config_path, dataset_opt, cache_opt, seed_opt, out);
        if (app.got_subcommand(report)) return cmd_report(aggregate_path, format, out_opt);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const CacheMissError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const TransportError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

}  // namespace seleval
