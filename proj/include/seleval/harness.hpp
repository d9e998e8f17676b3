#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seleval/cascade.hpp"
#include "seleval/core.hpp"
#include "seleval/judges.hpp"
#include "seleval/metrics.hpp"
#include "seleval/risk.hpp"

namespace seleval {

enum class Strategy {
    CascadedSelective,
    NoSelection,
    Heuristic,
    CascadedHeuristic,
    PointEstimate,
};

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);

enum class ConfidenceMode { SimulatedAnnotators, Predictive };

struct ExperimentConfig {
    // dataset source: a JSONL file or synthetic world parameters
    std::optional<std::string> dataset_path;
    LabelSpace label_space;
    std::optional<WorldParams> synthetic;

    std::vector<JudgeSpec> judges;  // cascade order (cheapest first)

    ConfidenceMode confidence_mode = ConfidenceMode::SimulatedAnnotators;
    ShotMode shot_mode = ShotMode::Individual;
    int shots_k = 5;      // K
    int annotators_n = 5; // N

    double alpha = 0.1;
    double delta = 0.1;
    std::size_t cal_size = 500;
    int trials = 1;
    uint64_t seed = 0;
    Strategy strategy = Strategy::CascadedSelective;
    int point_estimate_judge = -1;  // -1 = strongest (last)
    bool shift = false;
    TiePolicy tie_policy = TiePolicy::Exclude;
    int threads = 0;                // 0 = hardware concurrency
    std::size_t shot_pool_size = 0; // 0 = smallest pool the mode needs
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

// Seeded shuffle; first cal_size instances to cal, rest to test.
std::pair<Dataset, Dataset> random_split(const Dataset& dataset, std::size_t cal_size,
                                         uint64_t seed);

struct ShiftResult {
    Dataset cal;
    Dataset test;
    long dropped = 0;  // instances pairing models across the two halves
    std::vector<std::string> cal_models;
    std::vector<std::string> test_models;
};

// Seeded partition of the model-identifier set into two halves; cal keeps
// instances with both models in half 1, test those with both in half 2.
ShiftResult shifted_split(const Dataset& dataset, uint64_t seed);

// Fully prepared run context: data, world, judges, shot plan and the judge
// outputs computed once per (instance, judge) and shared by every strategy.
class RunContext {
public:
    static RunContext prepare(const ExperimentConfig& config);

    const ExperimentConfig& config() const { return config_; }
    const Dataset& data() const { return data_; }              // pool removed
    const Dataset& pool() const { return pool_; }
    const ShotPlan& plan() const { return plan_; }
    const std::string& plan_digest() const { return digest_; }
    const std::unordered_map<std::string, MajorityLabel>& truth() const { return truth_; }

    // cached judgement of judge j on data().instances[i]
    const Judgement& judgement(std::size_t judge, std::size_t instance) const {
        return judgements_[judge][instance];
    }
    std::size_t instance_index(const std::string& id) const;

    // Cascade stages whose evaluate functions read the cached judgements.
    std::vector<CascadeStage> stages(const std::vector<int>& judge_indices) const;
    std::vector<int> all_judges() const;
    int strongest_judge() const;

private:
    ExperimentConfig config_;
    Dataset data_;
    Dataset pool_;
    ShotPlan plan_;
    std::string digest_;
    std::shared_ptr<SyntheticWorld> world_;
    std::vector<std::unique_ptr<Judge>> judges_;
    std::vector<std::vector<Judgement>> judgements_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, MajorityLabel> truth_;
};

// One strategy on one explicit split. cal/test index into context.data().
TrialReport run_strategy(const RunContext& context, Strategy strategy,
                         const std::vector<std::size_t>& cal_idx,
                         const std::vector<std::size_t>& test_idx,
                         ThresholdSet* thresholds_out = nullptr);

struct AggregateReport {
    int trials = 0;
    double alpha = 0.0;
    double delta = 0.0;
    std::string strategy;
    double success_rate = 0.0;
    std::optional<double> agreement_mean, agreement_min, agreement_max;
    double coverage_mean = 0.0;
    std::map<std::string, double> composition_mean;
    double relative_cost_mean = 0.0;
    long undefined_runs = 0;
    long failed_instances = 0;

    struct TrialRow {
        int trial = 0;
        uint64_t seed = 0;
        TrialReport report;
    };
    std::vector<TrialRow> per_trial;
};

// Seeded repeated splits; deterministic given the master seed, including
// under parallel trial execution.
AggregateReport run_trials(const ExperimentConfig& config);
AggregateReport run_trials(const RunContext& context);

std::string aggregate_to_json(const AggregateReport& report);
AggregateReport aggregate_from_json(const std::string& text);
std::string aggregate_to_csv(const AggregateReport& report);

// trial_seed(master, t): the per-trial seed derivation shared by all paths.
uint64_t trial_seed(uint64_t master, int trial);

}  // namespace seleval
