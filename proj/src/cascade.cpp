#include "seleval/cascade.hpp"

#include <atomic>
#include <thread>

#include <json.hpp>

namespace seleval {

CascadeOutcome run_cascade(const PreferenceInstance& instance,
                           std::span<const CascadeStage> stages,
                           const ThresholdSet& thresholds) {
    if (stages.size() != thresholds.per_judge.size())
        throw std::invalid_argument("run_cascade: stages and thresholds disagree in length");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].spec.id != thresholds.per_judge[i].id)
            throw std::invalid_argument("run_cascade: judge order mismatch at position " +
                                        std::to_string(i) + " (" + stages[i].spec.id + " vs " +
                                        thresholds.per_judge[i].id + ")");
    }

    CascadeOutcome out;
    out.instance_id = instance.id;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        Judgement j;
        try {
            j = stages[i].evaluate(instance);
        } catch (const std::exception& e) {
            out.decision = CascadeOutcome::Decision::Failed;
            out.error = std::string(e.what());
            return out;
        }
        out.judges_consulted.emplace_back(stages[i].spec.id, j.confidence);
        out.cost += stages[i].spec.cost_weight;
        const auto& threshold = thresholds.per_judge[i].threshold;
        if (threshold && j.confidence >= *threshold) {
            out.decision = CascadeOutcome::Decision::Evaluated;
            out.judge_id = stages[i].spec.id;
            out.verdict = j.verdict;
            out.confidence = j.confidence;
            return out;  // later judges are never queried
        }
    }
    out.decision = CascadeOutcome::Decision::Abstained;
    return out;
}

std::vector<CascadeOutcome> evaluate_dataset(const Dataset& test,
                                             std::span<const CascadeStage> stages,
                                             const ThresholdSet& thresholds, int threads) {
    std::vector<CascadeOutcome> outcomes(test.instances.size());
    if (threads <= 1 || test.instances.size() < 2) {
        for (std::size_t i = 0; i < test.instances.size(); ++i)
            outcomes[i] = run_cascade(test.instances[i], stages, thresholds);
        return outcomes;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= test.instances.size()) return;
            outcomes[i] = run_cascade(test.instances[i], stages, thresholds);
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(threads, static_cast<int>(test.instances.size()));
    pool.reserve(count);
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return outcomes;
}

std::string outcomes_to_jsonl(const std::vector<CascadeOutcome>& outcomes) {
    std::string body;
    for (const auto& o : outcomes) {
        nlohmann::json j;
        j["id"] = o.instance_id;
        switch (o.decision) {
            case CascadeOutcome::Decision::Evaluated:
                j["decision"] = "evaluated";
                j["judge"] = o.judge_id;
                j["verdict"] = std::string(label_name(*o.verdict));
                j["confidence"] = *o.confidence;
                break;
            case CascadeOutcome::Decision::Abstained: j["decision"] = "abstained"; break;
            case CascadeOutcome::Decision::Failed:
                j["decision"] = "failed";
                j["error"] = o.error;
                break;
        }
        j["cost"] = o.cost;
        body += j.dump();
        body += '\n';
    }
    return body;
}

}  // namespace seleval
