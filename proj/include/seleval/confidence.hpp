#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seleval/core.hpp"

namespace seleval {

// Per-label probability row; columns follow the Label enum order A, B, tie.
using LabelRow = std::array<double, kNumLabels>;

// N simulated annotators' label distributions for one instance from one judge.
struct AnnotatorSimulation {
    std::string instance_id;
    std::string judge_id;
    std::vector<LabelRow> rows;

    std::size_t annotators() const { return rows.size(); }
};

// Throws ValidationError unless every row is a probability vector (sum within
// 1e-6 of 1, entries >= 0, no mass outside the label space) and N >= 1.
void validate_simulation(const AnnotatorSimulation& sim, const LabelSpace& space);

struct Judgement {
    Label verdict = Label::First;
    double confidence = 0.0;
};

// Column-wise mean over rows; verdict = argmax of the mean with ties broken by
// the fixed label order A < B < tie; confidence = that maximum mean.
Judgement aggregate_simulated_annotators(const AnnotatorSimulation& sim,
                                         const LabelSpace& space);

// Argmax over a single row, same tie-break.
Judgement predictive_probability(const LabelRow& row, const LabelSpace& space);

// Extracts the first decimal number from a judge's free-text confidence
// statement; values in (1, 100] are read as percentages; the result is
// clamped to [0, 1]. Unparseable replies yield 0.5 (logged to stderr).
double parse_verbalized(std::string_view reply);

enum class ShotMode { Individual, Majority, Randomized };

std::string_view shot_mode_name(ShotMode m);

struct ShotExample {
    std::string instance_id;
    Label label = Label::First;
};

struct ShotPlan {
    ShotMode mode = ShotMode::Randomized;
    int shots_per_annotator = 0;  // K
    int annotators = 0;           // N
    uint64_t seed = 0;
    std::vector<std::vector<ShotExample>> assignments;  // N lists of length K
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Builds the per-annotator shot assignments from a pool of annotated
// instances. Pure function of (pool order, mode, k, n, seed).
//   Individual : the same K seed-sampled inputs for every annotator; annotator
//                j carries vote position j of each input (the pool must expose
//                annotation lists of one common length >= N).
//   Majority   : N disjoint seed-sampled K-subsets, each input labeled with
//                its strict majority label (inputs without one are not eligible).
//   Randomized : the same K inputs, labels i.i.d. uniform over {A, B}.
// Throws ConfigError naming the shortfall when the pool is too small.
ShotPlan build_shot_plan(std::span<const PreferenceInstance> pool, ShotMode mode, int k,
                         int n, uint64_t seed);

// Stable digest of a plan's full content, for prediction-cache headers.
std::string shot_plan_digest(const ShotPlan& plan);

}  // namespace seleval
