#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "seleval/harness.hpp"

using namespace seleval;
using nlohmann::json;

namespace {

json base_config(std::size_t size, int trials, uint64_t seed) {
    return json{
        {"dataset", {{"synthetic", {{"size", size}, {"annotators", 5}, {"seed", 99}}}}},
        {"judges",
         json::array({{{"id", "small"},
                       {"kind", "synthetic"},
                       {"cost_weight", 0.05},
                       {"params", {{"skill", 1.0}, {"tau", 0.5}}}},
                      {{"id", "medium"},
                       {"kind", "synthetic"},
                       {"cost_weight", 0.25},
                       {"params", {{"skill", 2.0}, {"tau", 0.5}}}},
                      {{"id", "large"},
                       {"kind", "synthetic"},
                       {"cost_weight", 1.0},
                       {"params", {{"skill", 4.0}, {"tau", 0.5}}}}})},
        {"confidence",
         {{"mode", "simulated_annotators"}, {"shots", "individual"}, {"k", 5}, {"n", 5}}},
        {"alpha", 0.1},
        {"delta", 0.1},
        {"cal_size", 300},
        {"trials", trials},
        {"seed", seed},
        {"strategy", "cascaded_selective"}};
}

Dataset tagged_dataset(int size) {
    Dataset ds;
    for (int i = 0; i < size; ++i) {
        PreferenceInstance inst;
        inst.id = "d" + std::to_string(i);
        inst.annotations = {Label::First};
        inst.meta["model_a"] = "m" + std::to_string(i % 4);
        inst.meta["model_b"] = "m" + std::to_string((i + 1 + i / 4) % 4);
        ds.instances.push_back(inst);
    }
    return ds;
}

}  // namespace

TEST_CASE("random_split is a deterministic partition") {
    Dataset ds = tagged_dataset(50);
    auto [cal1, test1] = random_split(ds, 20, 7);
    auto [cal2, test2] = random_split(ds, 20, 7);
    CHECK(cal1.size() == 20);
    CHECK(test1.size() == 30);
    for (std::size_t i = 0; i < cal1.size(); ++i)
        CHECK(cal1.instances[i].id == cal2.instances[i].id);

    std::set<std::string> seen;
    for (const auto& inst : cal1.instances) seen.insert(inst.id);
    for (const auto& inst : test1.instances) CHECK(seen.insert(inst.id).second);
    CHECK(seen.size() == 50);

    auto [cal3, test3] = random_split(ds, 20, 8);
    bool same = true;
    for (std::size_t i = 0; i < cal1.size(); ++i)
        same = same && cal3.instances[i].id == cal1.instances[i].id;
    CHECK_FALSE(same);

    auto [cal4, test4] = random_split(ds, 49, 7);
    CHECK(test4.size() == 1);
    CHECK_THROWS_AS(random_split(ds, 50, 7), std::invalid_argument);
}

TEST_CASE("shifted_split separates model halves and drops cross pairs") {
    Dataset ds = tagged_dataset(200);
    const auto split = shifted_split(ds, 5);
    CHECK(split.cal_models.size() == 2);
    CHECK(split.test_models.size() == 2);
    std::set<std::string> cal_models(split.cal_models.begin(), split.cal_models.end());
    for (const auto& inst : split.cal.instances) {
        CHECK(cal_models.count(inst.meta.at("model_a")) == 1);
        CHECK(cal_models.count(inst.meta.at("model_b")) == 1);
    }
    for (const auto& inst : split.test.instances) {
        CHECK(cal_models.count(inst.meta.at("model_a")) == 0);
        CHECK(cal_models.count(inst.meta.at("model_b")) == 0);
    }
    CHECK(split.dropped ==
          static_cast<long>(ds.size() - split.cal.size() - split.test.size()));
    CHECK(split.dropped > 0);

    const auto again = shifted_split(ds, 5);
    CHECK(again.cal.size() == split.cal.size());
    for (std::size_t i = 0; i < split.cal.size(); ++i)
        CHECK(again.cal.instances[i].id == split.cal.instances[i].id);

    Dataset missing = ds;
    missing.instances[3].meta.erase("model_b");
    CHECK_THROWS_AS(shifted_split(missing, 5), ConfigError);
}

TEST_CASE("config parsing validates ranges and judge lists") {
    auto good = base_config(100, 1, 1);
    CHECK_NOTHROW(parse_experiment_config(good));

    auto bad = good;
    bad["alpha"] = 1.5;
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
    bad = good;
    bad["judges"] = json::array();
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
    bad = good;
    bad["strategy"] = "mystery";
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
    bad = good;
    bad["dataset"] = json::object();
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
    bad = good;
    bad["confidence"]["shots"] = "sideways";
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
}

TEST_CASE("run context pools shots away from the working data") {
    const auto config = parse_experiment_config(base_config(120, 1, 3));
    const RunContext ctx = RunContext::prepare(config);
    CHECK(ctx.pool().size() == 5);  // individual mode needs K inputs
    CHECK(ctx.data().size() == 115);
    std::set<std::string> pooled;
    for (const auto& inst : ctx.pool().instances) pooled.insert(inst.id);
    for (const auto& inst : ctx.data().instances) CHECK(pooled.count(inst.id) == 0);
    for (const auto& annotator : ctx.plan().assignments)
        for (const auto& shot : annotator) CHECK(pooled.count(shot.instance_id) == 1);

    // stages read the shared judgement table
    const auto stages = ctx.stages(ctx.all_judges());
    const auto& inst = ctx.data().instances[17];
    const Judgement direct = ctx.judgement(2, 17);
    const Judgement via = stages[2].evaluate(inst);
    CHECK(direct.confidence == via.confidence);
    CHECK(direct.verdict == via.verdict);
}

TEST_CASE("no-selection covers everything with the strongest judge only") {
    const auto config = parse_experiment_config(base_config(200, 1, 4));
    const RunContext ctx = RunContext::prepare(config);
    std::vector<std::size_t> cal_idx, test_idx;
    for (std::size_t i = 0; i < 100; ++i) cal_idx.push_back(i);
    for (std::size_t i = 100; i < ctx.data().size(); ++i) test_idx.push_back(i);

    const auto rep = run_strategy(ctx, Strategy::NoSelection, cal_idx, test_idx);
    CHECK(rep.coverage == 1.0);
    CHECK(rep.abstained == 0);
    REQUIRE(rep.composition.count("large") == 1);
    CHECK(rep.composition.at("large") == 1.0);
    CHECK(rep.relative_cost == doctest::Approx(1.0));
}

TEST_CASE("heuristic uses only the strongest judge at threshold 1-alpha") {
    const auto config = parse_experiment_config(base_config(200, 1, 4));
    const RunContext ctx = RunContext::prepare(config);
    std::vector<std::size_t> cal_idx, test_idx;
    for (std::size_t i = 0; i < 100; ++i) cal_idx.push_back(i);
    for (std::size_t i = 100; i < ctx.data().size(); ++i) test_idx.push_back(i);

    ThresholdSet ts;
    const auto rep = run_strategy(ctx, Strategy::Heuristic, cal_idx, test_idx, &ts);
    REQUIRE(ts.per_judge.size() == 1);
    CHECK(ts.per_judge[0].id == "large");
    CHECK(*ts.per_judge[0].threshold == doctest::Approx(0.9));
    CHECK(rep.coverage <= 1.0);
    for (const auto& [id, _] : rep.composition) CHECK(id == "large");
}

TEST_CASE("point estimate picks the designated judge") {
    auto cfg = base_config(200, 1, 4);
    cfg["point_estimate_judge"] = 0;
    const auto config = parse_experiment_config(cfg);
    const RunContext ctx = RunContext::prepare(config);
    std::vector<std::size_t> cal_idx, test_idx;
    for (std::size_t i = 0; i < 120; ++i) cal_idx.push_back(i);
    for (std::size_t i = 120; i < ctx.data().size(); ++i) test_idx.push_back(i);

    ThresholdSet ts;
    run_strategy(ctx, Strategy::PointEstimate, cal_idx, test_idx, &ts);
    REQUIRE(ts.per_judge.size() == 1);
    CHECK(ts.per_judge[0].id == "small");
}

TEST_CASE("heuristic on a perfectly calibrated judge hits the target agreement") {
    // A=1 world with the human_vote link and no noise: confidence equals
    // P(verdict = the single human vote) exactly. Quadrature oracle:
    // E[h | h >= 1-alpha] with h ~ U(0.5, 1).
    json cfg{{"dataset", {{"synthetic", {{"size", 4000}, {"annotators", 1}, {"seed", 21}}}}},
             {"judges", json::array({{{"id", "cal"},
                                      {"kind", "synthetic"},
                                      {"cost_weight", 1.0},
                                      {"params",
                                       {{"skill", 1.0}, {"tau", 0.0}, {"link", "human_vote"}}}}})},
             {"confidence",
              {{"mode", "simulated_annotators"}, {"shots", "randomized"}, {"k", 2}, {"n", 3}}},
             {"alpha", 0.1},
             {"delta", 0.1},
             {"cal_size", 500},
             {"trials", 1},
             {"seed", 5},
             {"strategy", "heuristic"}};
    const auto config = parse_experiment_config(cfg);
    const RunContext ctx = RunContext::prepare(config);
    std::vector<std::size_t> cal_idx, test_idx;
    for (std::size_t i = 0; i < 500; ++i) cal_idx.push_back(i);
    for (std::size_t i = 500; i < ctx.data().size(); ++i) test_idx.push_back(i);
    const auto rep = run_strategy(ctx, Strategy::Heuristic, cal_idx, test_idx);
    REQUIRE(rep.selective_agreement.has_value());
    const double oracle = 0.95;  // mean of U(0.9, 1.0)
    CHECK(*rep.selective_agreement >= 1.0 - 0.1 - 0.03);
    CHECK(std::fabs(*rep.selective_agreement - oracle) < 0.03);
    CHECK(rep.coverage == doctest::Approx(0.2).epsilon(0.15));  // P(h >= 0.9) = 0.2
}

TEST_CASE("run_trials aggregates a single trial to its own report") {
    auto cfg = base_config(300, 1, 11);
    cfg["cal_size"] = 150;
    const auto config = parse_experiment_config(cfg);
    const RunContext ctx = RunContext::prepare(config);
    const auto agg = run_trials(ctx);
    REQUIRE(agg.per_trial.size() == 1);
    const auto& r = agg.per_trial[0].report;
    if (r.selective_agreement) {
        CHECK(agg.agreement_mean == r.selective_agreement);
        CHECK(agg.agreement_min == r.selective_agreement);
        CHECK(agg.success_rate ==
              (*r.selective_agreement >= 1.0 - config.alpha ? 1.0 : 0.0));
    } else {
        CHECK(agg.undefined_runs == 1);
        CHECK(agg.success_rate == 0.0);
    }
    CHECK(agg.coverage_mean == doctest::Approx(r.coverage));
}

TEST_CASE("run_trials is deterministic and thread-count independent") {
    auto cfg = base_config(400, 6, 123);
    cfg["cal_size"] = 200;
    auto config = parse_experiment_config(cfg);
    config.threads = 1;
    const auto a = run_trials(config);
    config.threads = 4;
    const auto b = run_trials(config);
    CHECK(aggregate_to_json(a) == aggregate_to_json(b));
    CHECK(aggregate_to_csv(a) == aggregate_to_csv(b));

    // a different master seed changes the trials but not the schema
    config.seed = 124;
    const auto c = run_trials(config);
    CHECK(aggregate_to_json(c) != aggregate_to_json(b));
    CHECK(aggregate_from_json(aggregate_to_json(c)).trials == 6);
}

TEST_CASE("run_trials under shift uses disjoint model halves per trial") {
    auto cfg = base_config(600, 3, 9);
    cfg["shift"] = true;
    cfg["dataset"]["synthetic"]["models"] = 6;
    const auto config = parse_experiment_config(cfg);
    const auto agg = run_trials(config);
    CHECK(agg.per_trial.size() == 3);
    for (const auto& row : agg.per_trial) CHECK(row.report.evaluated + row.report.abstained > 0);
}

TEST_CASE("csv export carries one row per trial with a header") {
    auto config = parse_experiment_config(base_config(300, 4, 2));
    config.cal_size = 150;
    const auto agg = run_trials(config);
    const std::string csv = aggregate_to_csv(agg);
    const auto lines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == 5);
    CHECK(csv.rfind("trial,seed,agreement,coverage,relative_cost,evaluated,abstained,failed",
                    0) == 0);
}

TEST_CASE("coverage responds monotonically to alpha on a fixed split") {
    auto cfg = base_config(1200, 1, 31);
    cfg["cal_size"] = 400;
    const auto config = parse_experiment_config(cfg);
    const RunContext ctx = RunContext::prepare(config);
    std::vector<std::size_t> cal_idx, test_idx;
    for (std::size_t i = 0; i < 400; ++i) cal_idx.push_back(i);
    for (std::size_t i = 400; i < ctx.data().size(); ++i) test_idx.push_back(i);

    double prev = 2.0;
    for (double alpha : {0.3, 0.2, 0.1, 0.05}) {
        auto cfg2 = cfg;
        cfg2["alpha"] = alpha;
        const RunContext ctx2 = RunContext::prepare(parse_experiment_config(cfg2));
        const auto rep = run_strategy(ctx2, Strategy::CascadedSelective, cal_idx, test_idx);
        CHECK(rep.coverage <= prev + 1e-12);
        prev = rep.coverage;
    }
}
