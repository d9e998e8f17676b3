#include "seleval/judges.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "seleval/io_util.hpp"
#include "seleval/rng.hpp"

namespace seleval {

std::string_view judge_kind_name(JudgeKind k) {
    switch (k) {
        case JudgeKind::Synthetic: return "synthetic";
        case JudgeKind::Cached: return "cached";
        case JudgeKind::Remote: return "remote";
    }
    return "?";
}

JudgeKind parse_judge_kind(std::string_view s) {
    if (s == "synthetic") return JudgeKind::Synthetic;
    if (s == "cached") return JudgeKind::Cached;
    if (s == "remote") return JudgeKind::Remote;
    throw ConfigError("unknown judge kind: " + std::string(s));
}

JudgeSpec judge_spec_from_json(const nlohmann::json& j) {
    JudgeSpec spec;
    try {
        spec.id = j.at("id").get<std::string>();
        spec.kind = parse_judge_kind(j.at("kind").get<std::string>());
        spec.cost_weight = j.value("cost_weight", 1.0);
        if (spec.cost_weight < 0.0)
            throw ConfigError("judge " + spec.id + ": cost_weight must be >= 0");
        spec.params = j.value("params", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("judge spec: ") + e.what());
    }
    return spec;
}

nlohmann::json judge_spec_to_json(const JudgeSpec& spec) {
    return {{"id", spec.id},
            {"kind", std::string(judge_kind_name(spec.kind))},
            {"cost_weight", spec.cost_weight},
            {"params", spec.params}};
}

const SyntheticWorld::InstanceTruth& SyntheticWorld::truth_of(
    const std::string& instance_id) const {
    auto it = truths.find(instance_id);
    if (it == truths.end())
        throw std::invalid_argument("synthetic world has no instance " + instance_id);
    return it->second;
}

std::pair<Dataset, SyntheticWorld> generate_world(const WorldParams& params) {
    if (params.size < 1) throw ConfigError("generate_world: size must be >= 1");
    if (params.annotator_pool < 1 || params.annotator_pool % 2 == 0)
        throw ConfigError("generate_world: annotator pool A must be odd");
    if (params.model_tags < 2) throw ConfigError("generate_world: need >= 2 model tags");

    Dataset ds;
    ds.label_space.allow_tie = false;
    SyntheticWorld world;
    world.seed = params.seed;
    world.annotator_pool = params.annotator_pool;
    world.difficulty_slope = params.difficulty_slope;

    SplitMix64 rng(hash_mix(params.seed, fnv1a64("world")));
    char idbuf[32];
    for (std::size_t i = 0; i < params.size; ++i) {
        std::snprintf(idbuf, sizeof idbuf, "synth-%06zu", i);
        PreferenceInstance inst;
        inst.id = idbuf;
        inst.query = "synthetic query " + inst.id;
        inst.response_a = "synthetic response A for " + inst.id;
        inst.response_b = "synthetic response B for " + inst.id;

        SyntheticWorld::InstanceTruth t;
        t.truth = rng.uniform() < 0.5 ? Label::First : Label::Second;
        t.difficulty = rng.uniform();
        const double h = 1.0 - t.difficulty / 2.0;  // P(vote = y*)
        for (int a = 0; a < params.annotator_pool; ++a) {
            const bool votes_truth = rng.uniform() < h;
            inst.annotations.push_back(
                votes_truth ? t.truth : (t.truth == Label::First ? Label::Second : Label::First));
        }
        const int ma = static_cast<int>(rng.uniform_int(params.model_tags));
        const int mb_off =
            1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(params.model_tags - 1)));
        const int mb = (ma + mb_off) % params.model_tags;
        inst.meta["model_a"] = "model-" + std::to_string(ma);
        inst.meta["model_b"] = "model-" + std::to_string(mb);

        world.truths.emplace(inst.id, t);
        ds.instances.push_back(std::move(inst));
    }
    return {std::move(ds), std::move(world)};
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

class SyntheticJudge final : public Judge {
public:
    SyntheticJudge(JudgeSpec spec, std::shared_ptr<const SyntheticWorld> world)
        : spec_(std::move(spec)), world_(std::move(world)) {
        if (!world_) throw ConfigError("synthetic judge " + spec_.id + " needs a world");
        skill_ = spec_.params.value("skill", 1.0);
        tau_ = spec_.params.value("tau", 0.5);
        if (tau_ < 0.0) throw ConfigError("synthetic judge " + spec_.id + ": tau must be >= 0");
        const std::string link = spec_.params.value("link", "logistic");
        if (link == "human_vote")
            human_vote_link_ = true;  // row prob = P(a random human vote is y*)
        else if (link != "logistic")
            throw ConfigError("synthetic judge " + spec_.id + ": unknown link \"" + link + "\"");
    }

    const JudgeSpec& spec() const override { return spec_; }

    AnnotatorSimulation evaluate(const PreferenceInstance& instance,
                                 const ShotPlan& plan) override {
        if (plan.annotators < 1) throw ConfigError("shot plan has no annotators");
        const auto& t = world_->truth_of(instance.id);
        // Margin shrinks with difficulty; at slope <= 1 the judge never turns
        // against the latent truth, it only becomes overconfident relative to
        // the noisier human majority.
        const double margin = skill_ * (1.0 - world_->difficulty_slope * t.difficulty);
        AnnotatorSimulation sim;
        sim.instance_id = instance.id;
        sim.judge_id = spec_.id;
        const int other = t.truth == Label::First ? 1 : 0;
        const int truth_col = static_cast<int>(t.truth);
        for (int j = 0; j < plan.annotators; ++j) {
            SplitMix64 rng(hash_mix(hash_mix(hash_mix(world_->seed, fnv1a64(spec_.id)),
                                             fnv1a64(instance.id)),
                                    static_cast<uint64_t>(j)));
            const double noise = tau_ > 0.0 ? rng.normal(0.0, tau_) : 0.0;
            const double q = human_vote_link_
                                 ? std::clamp(1.0 - t.difficulty / 2.0 + noise, 0.0, 1.0)
                                 : logistic(margin + noise);
            LabelRow row{};
            row[truth_col] = q;
            row[other] = 1.0 - q;
            sim.rows.push_back(row);
        }
        return sim;
    }

private:
    JudgeSpec spec_;
    std::shared_ptr<const SyntheticWorld> world_;
    double skill_ = 1.0;
    double tau_ = 0.5;
    bool human_vote_link_ = false;
};

class CachedJudge final : public Judge {
public:
    explicit CachedJudge(JudgeSpec spec) : spec_(std::move(spec)) {
        const std::string path = spec_.params.value("cache_path", "");
        if (path.empty())
            throw ConfigError("cached judge " + spec_.id + ": params.cache_path is required");
        cache_ = load_prediction_cache(path);
    }

    const JudgeSpec& spec() const override { return spec_; }

    const PredictionCache& cache() const { return cache_; }

    AnnotatorSimulation evaluate(const PreferenceInstance& instance,
                                 const ShotPlan& plan) override {
        AnnotatorSimulation sim;
        sim.instance_id = instance.id;
        sim.judge_id = spec_.id;
        std::string missing;
        for (int j = 0; j < plan.annotators; ++j) {
            auto it = cache_.rows.find(PredictionCache::key(instance.id, spec_.id, j));
            if (it == cache_.rows.end()) {
                if (!missing.empty()) missing += ", ";
                missing += "(" + instance.id + ", " + spec_.id + ", " + std::to_string(j) + ")";
                continue;
            }
            sim.rows.push_back(it->second);
        }
        if (!missing.empty())
            throw CacheMissError("prediction cache misses: " + missing);
        return sim;
    }

private:
    JudgeSpec spec_;
    PredictionCache cache_;
};

}  // namespace

std::string PredictionCache::key(const std::string& instance_id, const std::string& judge_id,
                                 int annotator) {
    return instance_id + '\x1f' + judge_id + '\x1f' + std::to_string(annotator);
}

PredictionCache load_prediction_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prediction cache: " + path);
    PredictionCache cache;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("cache line " + std::to_string(line_no) + ": invalid JSON (" +
                                  e.what() + ")");
        }
        if (!have_header) {
            if (!j.value("header", false))
                throw ValidationError("cache line 1: missing {\"header\":true,...} line");
            cache.shot_plan_digest = j.value("shot_plan_digest", "");
            have_header = true;
            continue;
        }
        try {
            const auto id = j.at("instance_id").get<std::string>();
            const auto judge = j.at("judge_id").get<std::string>();
            const int annotator = j.at("annotator").get<int>();
            const auto& p = j.at("p");
            LabelRow row{};
            row[0] = p.at("A").get<double>();
            row[1] = p.at("B").get<double>();
            row[2] = p.value("tie", 0.0);
            cache.rows[PredictionCache::key(id, judge, annotator)] = row;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("cache line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) throw ValidationError("prediction cache is empty: " + path);
    return cache;
}

void save_prediction_cache(const PredictionCache& cache,
                           const std::vector<std::tuple<std::string, std::string, int>>& order,
                           const std::string& path) {
    std::string body;
    nlohmann::json header = {{"header", true}, {"shot_plan_digest", cache.shot_plan_digest}};
    body += header.dump();
    body += '\n';
    for (const auto& [id, judge, annotator] : order) {
        auto it = cache.rows.find(PredictionCache::key(id, judge, annotator));
        if (it == cache.rows.end())
            throw std::invalid_argument("save_prediction_cache: missing row for " + id);
        const LabelRow& row = it->second;
        nlohmann::json j;
        j["instance_id"] = id;
        j["judge_id"] = judge;
        j["annotator"] = annotator;
        nlohmann::json p = {{"A", row[0]}, {"B", row[1]}};
        if (row[2] != 0.0) p["tie"] = row[2];
        j["p"] = std::move(p);
        body += j.dump();
        body += '\n';
    }
    write_file_atomic(path, body);
}

std::unique_ptr<Judge> make_remote_judge(const JudgeSpec& spec);  // remote_judge.cpp

std::unique_ptr<Judge> make_judge(const JudgeSpec& spec,
                                  std::shared_ptr<const SyntheticWorld> world) {
    switch (spec.kind) {
        case JudgeKind::Synthetic:
            return std::make_unique<SyntheticJudge>(spec, std::move(world));
        case JudgeKind::Cached: return std::make_unique<CachedJudge>(spec);
        case JudgeKind::Remote: return make_remote_judge(spec);
    }
    throw ConfigError("unknown judge kind");
}

}  // namespace seleval
