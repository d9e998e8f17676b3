#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seleval/confidence.hpp"
#include "seleval/core.hpp"

namespace seleval {

// One calibration observation: what the judge said vs. what humans decided.
// human is empty only under TiePolicy::AlwaysDisagree (vote-count tie kept as
// a guaranteed disagreement); it then never equals the verdict.
struct EvalRecord {
    std::string instance_id;
    Label verdict = Label::First;
    double confidence = 0.0;
    std::optional<Label> human;

    bool agrees() const { return human.has_value() && *human == verdict; }
};

struct RiskPoint {
    double lambda = 0.0;
    long n = 0;             // covered count n(lambda)
    long k = 0;             // errors among covered
    double risk_hat = 0.0;  // k/n, 0 when n = 0
    double risk_bound = 1.0;
};

// Exact one-sided upper confidence bound sup{R : P(Bin(n,R) <= k) >= delta},
// bisected on the binomial CDF to absolute tolerance 1e-10. Direct summation
// of the CDF for n <= 1000, regularized incomplete beta above. Exactly 1 when
// k = n. Throws std::invalid_argument for n = 0 or k out of range.
double binomial_upper_bound(long k, long n, double delta);

// Coverage and error counts at one threshold. risk_bound is 1.0 on empty
// coverage so it always fails the test.
RiskPoint empirical_risk(std::span<const EvalRecord> records, double lambda, double delta);

struct CalibrationResult {
    std::optional<double> threshold;  // empty = always abstain
    std::vector<RiskPoint> trace;     // one point per visited grid value
};

// Fixed-sequence threshold selection over the grid of distinct observed
// confidences, largest first. Grid points where even a zero-error bound
// cannot reach alpha (n(lambda) < ceil(ln delta / ln(1-alpha))) are recorded
// in the trace but are not candidates; from the first candidate on, the walk
// stops at the first bound above alpha and the threshold is the last passing
// grid value.
CalibrationResult calibrate_single(std::span<const EvalRecord> records, double alpha,
                                   double delta);

// A judge's evaluation function: (verdict, confidence) for one instance.
using JudgeFn = std::function<Judgement(const PreferenceInstance&)>;

struct ThresholdSet {
    struct PerJudge {
        std::string id;
        std::optional<double> threshold;  // empty = always abstain
        std::vector<RiskPoint> trace;
        std::string warning;  // set when the working set ran out before this judge
    };
    double alpha = 0.0;
    double delta = 0.0;
    std::vector<PerJudge> per_judge;  // cascade order
};

// Builds EvalRecords for one judge over a set of instances, applying the tie
// policy to instances without a strict human majority. Instances with no
// annotations are skipped.
std::vector<EvalRecord> make_eval_records(const std::string& judge_id, const JudgeFn& judge,
                                          std::span<const PreferenceInstance> instances,
                                          TiePolicy tie_policy);

// Sequential per-judge calibration at level delta/|judges|; after each finite
// threshold the working set shrinks to the abstained records. Judges reached
// with an empty working set get ALWAYS-ABSTAIN with a warning.
ThresholdSet calibrate_cascade(const std::vector<std::pair<std::string, JudgeFn>>& judges,
                               const Dataset& cal, double alpha, double delta,
                               TiePolicy tie_policy = TiePolicy::Exclude);

// Core of the cascade calibration over pre-extracted records: records[j][i]
// is judge j's record for calibration instance i (one shared instance order).
ThresholdSet calibrate_cascade_aligned(const std::vector<std::string>& judge_ids,
                                       const std::vector<std::vector<EvalRecord>>& records,
                                       double alpha, double delta);

// Point-estimate baseline: the smallest observed confidence value whose
// empirical risk (no confidence bound) stays within alpha; empty when no grid
// value qualifies.
std::optional<double> point_estimate_threshold(std::span<const EvalRecord> records,
                                               double alpha);

// JSON round trip for the serialized schema
// {"alpha","delta","judges":[{"id","threshold":f|null,"always_abstain",b,"trace":[...]}]}
std::string threshold_set_to_json(const ThresholdSet& ts);
ThresholdSet threshold_set_from_json(const std::string& text);

}  // namespace seleval
