#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seleval/core.hpp"
#include "seleval/judges.hpp"
#include "seleval/risk.hpp"

namespace seleval {

struct CascadeOutcome {
    enum class Decision { Evaluated, Abstained, Failed };

    std::string instance_id;
    Decision decision = Decision::Abstained;
    std::string judge_id;  // accepting judge when evaluated
    std::optional<Label> verdict;
    std::optional<double> confidence;
    std::vector<std::pair<std::string, double>> judges_consulted;  // (judge, confidence)
    double cost = 0.0;  // sum of consulted judges' cost weights
    std::string error;  // transport/cache failure detail when failed
};

struct CascadeStage {
    JudgeSpec spec;
    JudgeFn evaluate;
};

// One pass of the cascade for one instance: judges are consulted in order and
// charged; the first judge with a finite threshold and confidence at or above
// it evaluates, later judges are never queried.
CascadeOutcome run_cascade(const PreferenceInstance& instance,
                           std::span<const CascadeStage> stages, const ThresholdSet& thresholds);

// One outcome per instance in input order; judge failures become Failed
// outcomes without aborting the batch. threads <= 1 runs inline.
std::vector<CascadeOutcome> evaluate_dataset(const Dataset& test,
                                             std::span<const CascadeStage> stages,
                                             const ThresholdSet& thresholds, int threads = 1);

// Outcome JSONL:
// {"id","decision":"evaluated"|"abstained"|"failed","judge"?,"verdict"?,"confidence"?,"cost"}
std::string outcomes_to_jsonl(const std::vector<CascadeOutcome>& outcomes);

}  // namespace seleval
