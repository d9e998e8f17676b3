#include "seleval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace seleval {

namespace {

int bin_index(double confidence, int bins) {
    // equal-width over [0,1], right-inclusive last bin
    int b = static_cast<int>(std::floor(confidence * bins));
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    return b;
}

}  // namespace

double ece(std::span<const ConfidenceSample> samples, int bins) {
    if (samples.empty()) throw std::invalid_argument("ece: no samples");
    if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<long> correct(bins, 0), count(bins, 0);
    for (const auto& s : samples) {
        const int b = bin_index(s.confidence, bins);
        conf_sum[b] += s.confidence;
        correct[b] += s.correct ? 1 : 0;
        count[b] += 1;
    }
    double total = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double acc = static_cast<double>(correct[b]) / count[b];
        const double conf = conf_sum[b] / count[b];
        total += (static_cast<double>(count[b]) / samples.size()) * std::fabs(acc - conf);
    }
    return total;
}

std::optional<double> auroc(std::span<const ConfidenceSample> samples) {
    long pos = 0, neg = 0;
    for (const auto& s : samples) (s.correct ? pos : neg)++;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<ConfidenceSample> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ConfidenceSample& a, const ConfidenceSample& b) {
                  return a.confidence > b.confidence;
              });
    // Pair counting in half units keeps the value an exact rational, so
    // auroc(x) + auroc(flip x) == 1 holds exactly.
    long long score2 = 0;  // 2 per win, 1 per tie
    long neg_seen = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        long block_pos = 0, block_neg = 0;
        while (j < sorted.size() && sorted[j].confidence == sorted[i].confidence) {
            (sorted[j].correct ? block_pos : block_neg)++;
            ++j;
        }
        const long neg_below = neg - neg_seen - block_neg;
        score2 += 2LL * block_pos * neg_below + 1LL * block_pos * block_neg;
        neg_seen += block_neg;
        i = j;
    }
    return static_cast<double>(score2) / static_cast<double>(2LL * pos * neg);
}

std::optional<double> auprc(std::span<const ConfidenceSample> samples) {
    long pos = 0;
    for (const auto& s : samples) pos += s.correct ? 1 : 0;
    if (pos == 0 || samples.empty()) return std::nullopt;

    std::vector<ConfidenceSample> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ConfidenceSample& a, const ConfidenceSample& b) {
                  return a.confidence > b.confidence;
              });
    double ap = 0.0;
    long tp = 0, seen = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        long block_tp = 0;
        while (j < sorted.size() && sorted[j].confidence == sorted[i].confidence) {
            block_tp += sorted[j].correct ? 1 : 0;
            ++j;
        }
        const long block = static_cast<long>(j - i);
        tp += block_tp;
        seen += block;
        if (block_tp > 0) {
            const double precision = static_cast<double>(tp) / seen;
            const double recall_inc = static_cast<double>(block_tp) / pos;
            ap += recall_inc * precision;
        }
        i = j;
    }
    return ap;
}

CalibrationReport calibration_report(std::span<const ConfidenceSample> samples, int bins) {
    if (samples.empty()) throw std::invalid_argument("calibration_report: no samples");
    CalibrationReport rep;
    long correct = 0;
    for (const auto& s : samples) correct += s.correct ? 1 : 0;
    rep.accuracy = static_cast<double>(correct) / samples.size();
    rep.ece = ece(samples, bins);
    rep.auroc = auroc(samples);
    rep.auprc = auprc(samples);
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<long> ok(bins, 0), count(bins, 0);
    for (const auto& s : samples) {
        const int b = bin_index(s.confidence, bins);
        conf_sum[b] += s.confidence;
        ok[b] += s.correct ? 1 : 0;
        count[b] += 1;
    }
    for (int b = 0; b < bins; ++b) {
        CalibrationReport::Bin bin;
        bin.count = count[b];
        if (count[b] > 0) {
            bin.mean_confidence = conf_sum[b] / count[b];
            bin.accuracy = static_cast<double>(ok[b]) / count[b];
        }
        rep.bins.push_back(bin);
    }
    return rep;
}

TrialReport trial_report(const std::vector<CascadeOutcome>& outcomes,
                         const std::unordered_map<std::string, MajorityLabel>& truth,
                         std::span<const JudgeSpec> specs) {
    TrialReport rep;
    double max_weight = 0.0;
    for (const auto& s : specs) max_weight = std::max(max_weight, s.cost_weight);

    long agree = 0;
    double total_cost = 0.0;
    std::map<std::string, long> by_judge;
    for (const auto& o : outcomes) {
        total_cost += o.cost;
        switch (o.decision) {
            case CascadeOutcome::Decision::Evaluated: {
                ++rep.evaluated;
                by_judge[o.judge_id] += 1;
                auto it = truth.find(o.instance_id);
                if (it == truth.end() || !it->second.has_winner())
                    throw std::invalid_argument("trial_report: evaluated instance " +
                                                o.instance_id + " lacks a decided human majority");
                if (o.verdict && *o.verdict == *it->second.label) ++agree;
                break;
            }
            case CascadeOutcome::Decision::Abstained: ++rep.abstained; break;
            case CascadeOutcome::Decision::Failed: ++rep.failed; break;
        }
    }
    if (rep.evaluated > 0) {
        rep.selective_agreement = static_cast<double>(agree) / rep.evaluated;
        for (const auto& [id, n] : by_judge)
            rep.composition[id] = static_cast<double>(n) / rep.evaluated;
    }
    const long considered = rep.evaluated + rep.abstained;
    rep.coverage = considered > 0 ? static_cast<double>(rep.evaluated) / considered : 0.0;
    if (!outcomes.empty() && max_weight > 0.0)
        rep.relative_cost = total_cost / (static_cast<double>(outcomes.size()) * max_weight);
    return rep;
}

double guarantee_success_rate(const std::vector<std::optional<double>>& per_run_agreement,
                              double alpha) {
    if (per_run_agreement.empty())
        throw std::invalid_argument("guarantee_success_rate: no runs");
    long ok = 0;
    for (const auto& a : per_run_agreement)
        if (a.has_value() && *a >= 1.0 - alpha - 1e-12) ++ok;
    return static_cast<double>(ok) / per_run_agreement.size();
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

}  // namespace

std::string trial_report_to_json(const TrialReport& report) {
    nlohmann::json j;
    j["selective_agreement"] = opt_json(report.selective_agreement);
    j["coverage"] = report.coverage;
    j["composition"] = report.composition;
    j["relative_cost"] = report.relative_cost;
    j["evaluated"] = report.evaluated;
    j["abstained"] = report.abstained;
    j["failed"] = report.failed;
    return j.dump(2) + "\n";
}

std::string calibration_report_to_json(const CalibrationReport& report) {
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    j["ece"] = report.ece;
    j["auroc"] = opt_json(report.auroc);
    j["auprc"] = opt_json(report.auprc);
    auto bins = nlohmann::json::array();
    for (const auto& b : report.bins)
        bins.push_back({{"mean_confidence", b.mean_confidence},
                        {"accuracy", b.accuracy},
                        {"count", b.count}});
    j["bins"] = std::move(bins);
    return j.dump(2) + "\n";
}

}  // namespace seleval
