#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seleval/cascade.hpp"
#include "seleval/core.hpp"
#include "seleval/judges.hpp"

namespace seleval {

struct ConfidenceSample {
    double confidence = 0.0;
    bool correct = false;
};

// Binned expected calibration error: sum_b (n_b/n) * |acc_b - conf_b| over
// `bins` equal-width bins on [0, 1], right-inclusive on the last bin.
double ece(std::span<const ConfidenceSample> samples, int bins = 10);

// Mann-Whitney probability that a random correct sample outranks a random
// incorrect one, ties counted 0.5. Empty when either class is absent.
std::optional<double> auroc(std::span<const ConfidenceSample> samples);

// Average precision over descending-confidence prefixes, tie blocks processed
// as one step. Empty when there is no positive (correct) sample.
std::optional<double> auprc(std::span<const ConfidenceSample> samples);

struct CalibrationReport {
    struct Bin {
        double mean_confidence = 0.0;
        double accuracy = 0.0;
        long count = 0;
    };
    double accuracy = 0.0;
    double ece = 0.0;
    std::optional<double> auroc;
    std::optional<double> auprc;
    std::vector<Bin> bins;
};

CalibrationReport calibration_report(std::span<const ConfidenceSample> samples, int bins = 10);

struct TrialReport {
    std::optional<double> selective_agreement;  // empty when nothing evaluated
    double coverage = 0.0;                      // evaluated / (evaluated + abstained)
    std::map<std::string, double> composition;  // judge -> share of evaluated
    double relative_cost = 0.0;
    long evaluated = 0;
    long abstained = 0;
    long failed = 0;
};

// truth maps instance id to the human majority; every evaluated outcome must
// have a decided entry there (ties are excluded upstream).
TrialReport trial_report(const std::vector<CascadeOutcome>& outcomes,
                         const std::unordered_map<std::string, MajorityLabel>& truth,
                         std::span<const JudgeSpec> specs);

// Fraction of runs whose defined agreement reaches 1 - alpha; undefined runs
// count as failures.
double guarantee_success_rate(const std::vector<std::optional<double>>& per_run_agreement,
                              double alpha);

std::string trial_report_to_json(const TrialReport& report);
std::string calibration_report_to_json(const CalibrationReport& report);

}  // namespace seleval
