#include "seleval/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>

#include "seleval/rng.hpp"

namespace seleval {

void validate_simulation(const AnnotatorSimulation& sim, const LabelSpace& space) {
    if (sim.rows.empty())
        throw ValidationError("simulation " + sim.instance_id + ": no annotator rows");
    for (std::size_t j = 0; j < sim.rows.size(); ++j) {
        const LabelRow& row = sim.rows[j];
        double sum = 0.0;
        for (int c = 0; c < kNumLabels; ++c) {
            if (row[c] < 0.0)
                throw ValidationError("simulation " + sim.instance_id + ": negative probability in row " +
                                      std::to_string(j));
            if (!space.contains(static_cast<Label>(c)) && row[c] != 0.0)
                throw ValidationError("simulation " + sim.instance_id +
                                      ": probability mass outside the label space in row " +
                                      std::to_string(j));
            sum += row[c];
        }
        if (std::fabs(sum - 1.0) > 1e-6)
            throw ValidationError("simulation " + sim.instance_id + ": row " + std::to_string(j) +
                                  " sums to " + std::to_string(sum));
    }
}

namespace {

Judgement argmax_judgement(const LabelRow& mean, const LabelSpace& space) {
    Judgement j;
    j.verdict = Label::First;
    j.confidence = mean[0];
    for (int c = 1; c < space.size(); ++c) {
        if (mean[c] > j.confidence) {  // strict: ties keep the earlier label
            j.confidence = mean[c];
            j.verdict = static_cast<Label>(c);
        }
    }
    return j;
}

}  // namespace

Judgement aggregate_simulated_annotators(const AnnotatorSimulation& sim,
                                         const LabelSpace& space) {
    validate_simulation(sim, space);
    // Column means accumulated in sorted order, so the result is exactly
    // invariant under annotator permutation.
    LabelRow mean{};
    std::vector<double> col(sim.rows.size());
    for (int c = 0; c < kNumLabels; ++c) {
        for (std::size_t j = 0; j < sim.rows.size(); ++j) col[j] = sim.rows[j][c];
        std::sort(col.begin(), col.end());
        mean[c] = std::accumulate(col.begin(), col.end(), 0.0) /
                  static_cast<double>(sim.rows.size());
    }
    return argmax_judgement(mean, space);
}

Judgement predictive_probability(const LabelRow& row, const LabelSpace& space) {
    AnnotatorSimulation one;
    one.rows.push_back(row);
    validate_simulation(one, space);
    return argmax_judgement(row, space);
}

double parse_verbalized(std::string_view reply) {
    static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+))");
    std::cmatch m;
    if (!std::regex_search(reply.data(), reply.data() + reply.size(), m, number)) {
        std::fprintf(stderr, "warning: no confidence value in judge reply, using 0.5\n");
        return 0.5;
    }
    double v = std::strtod(m.str(0).c_str(), nullptr);
    if (v > 1.0 && v <= 100.0) v /= 100.0;  // percentage form
    return std::clamp(v, 0.0, 1.0);
}

std::string_view shot_mode_name(ShotMode m) {
    switch (m) {
        case ShotMode::Individual: return "individual";
        case ShotMode::Majority: return "majority";
        case ShotMode::Randomized: return "randomized";
    }
    return "?";
}

namespace {

// Seed-sampled choice of `count` distinct pool indices, deterministic in
// (pool order, seed). Partial Fisher-Yates over the index vector.
std::vector<std::size_t> sample_indices(std::size_t pool_size, std::size_t count,
                                        SplitMix64& rng) {
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(pool_size - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

}  // namespace

ShotPlan build_shot_plan(std::span<const PreferenceInstance> pool, ShotMode mode, int k,
                         int n, uint64_t seed) {
    if (k < 1 || n < 1) throw ConfigError("shot plan: K and N must be >= 1");
    ShotPlan plan;
    plan.mode = mode;
    plan.shots_per_annotator = k;
    plan.annotators = n;
    plan.seed = seed;
    SplitMix64 rng(hash_mix(seed, 0x73686f74u));  // "shot" stream

    switch (mode) {
        case ShotMode::Randomized: {
            if (pool.size() < static_cast<std::size_t>(k))
                throw ConfigError("shot plan (randomized): pool has " +
                                  std::to_string(pool.size()) + " instances, need K=" +
                                  std::to_string(k));
            const auto idx = sample_indices(pool.size(), static_cast<std::size_t>(k), rng);
            plan.assignments.resize(n);
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < k; ++i) {
                    Label l = rng.uniform() < 0.5 ? Label::First : Label::Second;
                    plan.assignments[j].push_back({pool[idx[i]].id, l});
                }
            }
            break;
        }
        case ShotMode::Majority: {
            std::vector<std::size_t> eligible;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (!pool[i].annotations.empty() &&
                    majority_label(pool[i].annotations).has_winner())
                    eligible.push_back(i);
            }
            const std::size_t need = static_cast<std::size_t>(k) * static_cast<std::size_t>(n);
            if (eligible.size() < need)
                throw ConfigError("shot plan (majority): " + std::to_string(eligible.size()) +
                                  " pool instances have a majority label, need K*N=" +
                                  std::to_string(need));
            auto perm = sample_indices(eligible.size(), need, rng);
            plan.assignments.resize(n);
            std::size_t cursor = 0;
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < k; ++i) {
                    const PreferenceInstance& inst = pool[eligible[perm[cursor++]]];
                    plan.assignments[j].push_back(
                        {inst.id, *majority_label(inst.annotations).label});
                }
            }
            break;
        }
        case ShotMode::Individual: {
            if (pool.empty()) throw ConfigError("shot plan (individual): empty pool");
            const std::size_t width = pool.front().annotations.size();
            for (const auto& inst : pool) {
                if (inst.annotations.size() != width)
                    throw ConfigError("shot plan (individual): instance " + inst.id + " has " +
                                      std::to_string(inst.annotations.size()) +
                                      " annotations, expected " + std::to_string(width) +
                                      " (equal-length annotator lists required)");
            }
            if (width < static_cast<std::size_t>(n))
                throw ConfigError("shot plan (individual): pool exposes " +
                                  std::to_string(width) + " annotators, need N=" +
                                  std::to_string(n));
            if (pool.size() < static_cast<std::size_t>(k))
                throw ConfigError("shot plan (individual): pool has " +
                                  std::to_string(pool.size()) + " instances, need K=" +
                                  std::to_string(k));
            const auto idx = sample_indices(pool.size(), static_cast<std::size_t>(k), rng);
            plan.assignments.resize(n);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < k; ++i)
                    plan.assignments[j].push_back(
                        {pool[idx[i]].id, pool[idx[i]].annotations[static_cast<std::size_t>(j)]});
            break;
        }
    }
    return plan;
}

std::string shot_plan_digest(const ShotPlan& plan) {
    std::string blob;
    blob += shot_mode_name(plan.mode);
    blob += '|' + std::to_string(plan.shots_per_annotator);
    blob += '|' + std::to_string(plan.annotators);
    blob += '|' + std::to_string(plan.seed);
    for (const auto& annotator : plan.assignments) {
        blob += "||";
        for (const auto& shot : annotator) {
            blob += shot.instance_id;
            blob += '=';
            blob += label_name(shot.label);
            blob += ';';
        }
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(blob)));
    return buf;
}

}  // namespace seleval
