#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seleval/confidence.hpp"
#include "seleval/core.hpp"

namespace seleval {

enum class JudgeKind { Synthetic, Cached, Remote };

std::string_view judge_kind_name(JudgeKind k);
JudgeKind parse_judge_kind(std::string_view s);

struct JudgeSpec {
    std::string id;
    JudgeKind kind = JudgeKind::Synthetic;
    double cost_weight = 1.0;
    nlohmann::json params;  // kind-specific:
                            //   synthetic: skill, tau
                            //   cached:    cache_path
                            //   remote:    endpoint, model, temperature, max_in_flight,
                            //              retries, timeout_ms, template, samples, allow_tie
};

JudgeSpec judge_spec_from_json(const nlohmann::json& j);
nlohmann::json judge_spec_to_json(const JudgeSpec& spec);

// Latent ground truth behind a generated dataset; the synthetic judge reads
// per-instance truth and difficulty from here.
struct SyntheticWorld {
    struct InstanceTruth {
        Label truth = Label::First;
        double difficulty = 0.0;  // d in [0, 1]
    };
    uint64_t seed = 0;
    int annotator_pool = 5;         // A, odd
    double difficulty_slope = 0.4;  // how fast difficulty erodes the judge margin
    std::unordered_map<std::string, InstanceTruth> truths;

    const InstanceTruth& truth_of(const std::string& instance_id) const;
};

struct WorldParams {
    std::size_t size = 0;
    int annotator_pool = 5;  // A, must be odd
    uint64_t seed = 0;
    int model_tags = 10;            // distinct synthetic model names for meta
    double difficulty_slope = 0.4;  // carried into the world for its judges
};

// Synthetic preference dataset: per instance a latent truth y* (uniform),
// difficulty d ~ U(0,1), and A human votes each equal to y* with probability
// h = 1 - d/2. meta carries model_a/model_b tags for shift splits.
std::pair<Dataset, SyntheticWorld> generate_world(const WorldParams& params);

struct CacheMissError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Uniform judge interface: N label-distribution rows for one instance.
class Judge {
public:
    virtual ~Judge() = default;
    virtual const JudgeSpec& spec() const = 0;
    virtual AnnotatorSimulation evaluate(const PreferenceInstance& instance,
                                         const ShotPlan& plan) = 0;
};

// Prediction cache JSONL: a header line {"header":true,"shot_plan_digest":...}
// then rows {"instance_id","judge_id","annotator","p":{"A":f,"B":f,"tie":f?}}.
struct PredictionCache {
    std::string shot_plan_digest;
    std::unordered_map<std::string, LabelRow> rows;  // key: id \x1f judge \x1f annotator

    static std::string key(const std::string& instance_id, const std::string& judge_id,
                           int annotator);
};

PredictionCache load_prediction_cache(const std::string& path);
void save_prediction_cache(const PredictionCache& cache,
                           const std::vector<std::tuple<std::string, std::string, int>>& order,
                           const std::string& path);

// world may be null for cached/remote judges.
std::unique_ptr<Judge> make_judge(const JudgeSpec& spec,
                                  std::shared_ptr<const SyntheticWorld> world);

// Hands the remote backend the texts behind shot-plan instance ids so prompts
// can render full examples. No-op for other judge kinds.
void register_remote_shot_texts(Judge& judge, std::span<const PreferenceInstance> pool);

}  // namespace seleval
