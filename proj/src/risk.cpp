#include "seleval/risk.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <json.hpp>

namespace seleval {

namespace {

// log Gamma table for exact binomial terms up to the summation cutoff
constexpr long kSummationCutoff = 1000;

const double* lgamma_table() {
    static double table[kSummationCutoff + 2];
    static std::once_flag once;
    std::call_once(once, [] {
        for (long i = 0; i <= kSummationCutoff + 1; ++i)
            table[i] = std::lgamma(static_cast<double>(i) + 1.0);
    });
    return table;
}

double log_choose(long n, long k) {
    const double* lg = lgamma_table();
    return lg[n] - lg[k] - lg[n - k];
}

// P(Bin(n, p) <= k) by direct summation of exact terms.
double binom_cdf_sum(long k, long n, double p) {
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return k >= n ? 1.0 : 0.0;
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    double sum = 0.0;
    for (long i = 0; i <= k; ++i)
        sum += std::exp(log_choose(n, i) + static_cast<double>(i) * lp +
                        static_cast<double>(n - i) * lq);
    return std::min(sum, 1.0);
}

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= kEps) break;
    }
    return h;
}

double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// P(Bin(n, p) <= k) = I_{1-p}(n-k, k+1)
double binom_cdf_beta(long k, long n, double p) {
    if (k >= n) return 1.0;
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return 0.0;
    return inc_beta(static_cast<double>(n - k), static_cast<double>(k) + 1.0, 1.0 - p);
}

double binom_cdf(long k, long n, double p) {
    return n <= kSummationCutoff ? binom_cdf_sum(k, n, p) : binom_cdf_beta(k, n, p);
}

}  // namespace

double binomial_upper_bound(long k, long n, double delta) {
    if (n < 1) throw std::invalid_argument("binomial_upper_bound: n must be >= 1");
    if (k < 0 || k > n) throw std::invalid_argument("binomial_upper_bound: k out of [0, n]");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("binomial_upper_bound: delta outside (0, 1)");
    if (k == n) return 1.0;

    // CDF(k; n, R) is strictly decreasing in R for k < n; bisect for the
    // crossing with delta keeping lo on the >= delta side.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (binom_cdf(k, n, mid) >= delta)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

RiskPoint empirical_risk(std::span<const EvalRecord> records, double lambda, double delta) {
    if (records.empty()) throw std::invalid_argument("empirical_risk: no records");
    RiskPoint p;
    p.lambda = lambda;
    for (const EvalRecord& r : records) {
        if (r.confidence >= lambda) {
            ++p.n;
            if (!r.agrees()) ++p.k;
        }
    }
    if (p.n > 0) {
        p.risk_hat = static_cast<double>(p.k) / static_cast<double>(p.n);
        p.risk_bound = binomial_upper_bound(p.k, p.n, delta);
    } else {
        p.risk_hat = 0.0;
        p.risk_bound = 1.0;
    }
    return p;
}

namespace {

// Smallest n at which even a zero-error bound can reach alpha:
// 1 - delta^(1/n) <= alpha  <=>  n >= ln(delta) / ln(1 - alpha).
long min_testable_n(double alpha, double delta) {
    const double raw = std::log(delta) / std::log1p(-alpha);
    long n = static_cast<long>(std::ceil(raw - 1e-9));
    return std::max<long>(n, 1);
}

}  // namespace

CalibrationResult calibrate_single(std::span<const EvalRecord> records, double alpha,
                                   double delta) {
    if (records.empty()) throw std::invalid_argument("calibrate_single: no records");
    if (!(alpha > 0.0 && alpha < 1.0) || !(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("calibrate_single: alpha and delta must lie in (0, 1)");

    std::vector<const EvalRecord*> sorted;
    sorted.reserve(records.size());
    for (const EvalRecord& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const EvalRecord* a, const EvalRecord* b) {
        if (a->confidence != b->confidence) return a->confidence > b->confidence;
        return a->instance_id < b->instance_id;  // stable grid across input orders
    });

    const long gate = min_testable_n(alpha, delta);
    CalibrationResult result;
    long n = 0, k = 0;
    bool entered = false;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double lambda = sorted[i]->confidence;
        // absorb the whole block of records sharing this grid value
        while (i < sorted.size() && sorted[i]->confidence == lambda) {
            ++n;
            if (!sorted[i]->agrees()) ++k;
            ++i;
        }
        RiskPoint point;
        point.lambda = lambda;
        point.n = n;
        point.k = k;
        point.risk_hat = static_cast<double>(k) / static_cast<double>(n);
        point.risk_bound = binomial_upper_bound(k, n, delta);
        result.trace.push_back(point);
        if (n < gate) continue;  // the test has no power here; not a candidate
        entered = true;
        if (point.risk_bound <= alpha)
            result.threshold = lambda;
        else
            break;  // first violation past the gate ends the fixed sequence
    }
    (void)entered;
    return result;
}

std::vector<EvalRecord> make_eval_records(const std::string& judge_id, const JudgeFn& judge,
                                          std::span<const PreferenceInstance> instances,
                                          TiePolicy tie_policy) {
    std::vector<EvalRecord> out;
    out.reserve(instances.size());
    for (const PreferenceInstance& inst : instances) {
        if (inst.annotations.empty()) continue;
        const MajorityLabel m = majority_label(inst.annotations);
        if (!m.has_winner() && tie_policy == TiePolicy::Exclude) continue;
        const Judgement j = judge(inst);
        EvalRecord r;
        r.instance_id = inst.id;
        r.verdict = j.verdict;
        r.confidence = j.confidence;
        r.human = m.label;
        out.push_back(std::move(r));
    }
    (void)judge_id;
    return out;
}

ThresholdSet calibrate_cascade_aligned(const std::vector<std::string>& judge_ids,
                                       const std::vector<std::vector<EvalRecord>>& records,
                                       double alpha, double delta) {
    if (judge_ids.empty()) throw std::invalid_argument("calibrate_cascade: no judges");
    if (records.size() != judge_ids.size())
        throw std::invalid_argument("calibrate_cascade: one record vector per judge required");
    const std::size_t count = records.front().size();
    for (const auto& r : records)
        if (r.size() != count)
            throw std::invalid_argument("calibrate_cascade: record vectors must align");
    if (count == 0)
        throw std::invalid_argument("calibrate_cascade: calibration set empty after tie exclusion");

    ThresholdSet ts;
    ts.alpha = alpha;
    ts.delta = delta;
    const double level = delta / static_cast<double>(judge_ids.size());

    std::vector<std::size_t> working(count);
    for (std::size_t i = 0; i < count; ++i) working[i] = i;

    for (std::size_t j = 0; j < judge_ids.size(); ++j) {
        ThresholdSet::PerJudge pj;
        pj.id = judge_ids[j];
        if (working.empty()) {
            pj.warning = "working set exhausted before this judge; always abstaining";
            ts.per_judge.push_back(std::move(pj));
            continue;
        }
        std::vector<EvalRecord> subset;
        subset.reserve(working.size());
        for (std::size_t i : working) subset.push_back(records[j][i]);
        CalibrationResult res = calibrate_single(subset, alpha, level);
        pj.threshold = res.threshold;
        pj.trace = std::move(res.trace);
        if (pj.threshold) {
            std::vector<std::size_t> next;
            for (std::size_t i : working)
                if (records[j][i].confidence < *pj.threshold) next.push_back(i);
            working = std::move(next);
        }
        ts.per_judge.push_back(std::move(pj));
    }
    return ts;
}

ThresholdSet calibrate_cascade(const std::vector<std::pair<std::string, JudgeFn>>& judges,
                               const Dataset& cal, double alpha, double delta,
                               TiePolicy tie_policy) {
    if (judges.empty()) throw std::invalid_argument("calibrate_cascade: no judges");

    std::vector<const PreferenceInstance*> kept;
    for (const PreferenceInstance& inst : cal.instances) {
        if (inst.annotations.empty()) continue;
        if (tie_policy == TiePolicy::Exclude && !majority_label(inst.annotations).has_winner())
            continue;
        kept.push_back(&inst);
    }

    std::vector<std::string> ids;
    std::vector<std::vector<EvalRecord>> records(judges.size());
    for (std::size_t j = 0; j < judges.size(); ++j) {
        ids.push_back(judges[j].first);
        records[j].reserve(kept.size());
        for (const PreferenceInstance* inst : kept) {
            const MajorityLabel m = majority_label(inst->annotations);
            const Judgement judgement = judges[j].second(*inst);
            EvalRecord r;
            r.instance_id = inst->id;
            r.verdict = judgement.verdict;
            r.confidence = judgement.confidence;
            r.human = m.label;
            records[j].push_back(std::move(r));
        }
    }
    return calibrate_cascade_aligned(ids, records, alpha, delta);
}

std::optional<double> point_estimate_threshold(std::span<const EvalRecord> records,
                                               double alpha) {
    if (records.empty()) throw std::invalid_argument("point_estimate_threshold: no records");
    std::vector<const EvalRecord*> sorted;
    sorted.reserve(records.size());
    for (const EvalRecord& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const EvalRecord* a, const EvalRecord* b) {
        return a->confidence > b->confidence;
    });
    std::optional<double> best;
    long n = 0, k = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double lambda = sorted[i]->confidence;
        while (i < sorted.size() && sorted[i]->confidence == lambda) {
            ++n;
            if (!sorted[i]->agrees()) ++k;
            ++i;
        }
        if (static_cast<double>(k) / static_cast<double>(n) <= alpha) best = lambda;
    }
    return best;
}

std::string threshold_set_to_json(const ThresholdSet& ts) {
    nlohmann::json j;
    j["alpha"] = ts.alpha;
    j["delta"] = ts.delta;
    auto judges = nlohmann::json::array();
    for (const auto& pj : ts.per_judge) {
        nlohmann::json e;
        e["id"] = pj.id;
        e["always_abstain"] = !pj.threshold.has_value();
        if (pj.threshold)
            e["threshold"] = *pj.threshold;
        else
            e["threshold"] = nullptr;
        auto trace = nlohmann::json::array();
        for (const RiskPoint& p : pj.trace) {
            trace.push_back({{"lambda", p.lambda},
                             {"n", p.n},
                             {"k", p.k},
                             {"risk_hat", p.risk_hat},
                             {"risk_bound", p.risk_bound}});
        }
        e["trace"] = std::move(trace);
        if (!pj.warning.empty()) e["warning"] = pj.warning;
        judges.push_back(std::move(e));
    }
    j["judges"] = std::move(judges);
    return j.dump(2) + "\n";
}

ThresholdSet threshold_set_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("thresholds: invalid JSON (") + e.what() + ")");
    }
    ThresholdSet ts;
    try {
        ts.alpha = j.at("alpha").get<double>();
        ts.delta = j.at("delta").get<double>();
        for (const auto& e : j.at("judges")) {
            ThresholdSet::PerJudge pj;
            pj.id = e.at("id").get<std::string>();
            const bool abstain = e.at("always_abstain").get<bool>();
            if (e.at("threshold").is_null() != abstain)
                throw ValidationError("thresholds: threshold must be null iff always_abstain");
            if (!abstain) pj.threshold = e.at("threshold").get<double>();
            if (e.contains("trace")) {
                for (const auto& t : e.at("trace")) {
                    RiskPoint p;
                    p.lambda = t.at("lambda").get<double>();
                    p.n = t.at("n").get<long>();
                    p.k = t.at("k").get<long>();
                    p.risk_hat = t.at("risk_hat").get<double>();
                    p.risk_bound = t.at("risk_bound").get<double>();
                    pj.trace.push_back(p);
                }
            }
            if (e.contains("warning")) pj.warning = e.at("warning").get<std::string>();
            ts.per_judge.push_back(std::move(pj));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("thresholds: schema violation (") + e.what() + ")");
    }
    return ts;
}

}  // namespace seleval
