// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "seleval/cli.hpp"
#include "seleval/harness.hpp"
#include "seleval/io_util.hpp"
#include "seleval/metrics.hpp"
#include "seleval/rng.hpp"
#include "seleval/risk.hpp"

using namespace seleval;
using nlohmann::json;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("%s  criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

// ---- independent oracles ---------------------------------------------------

double oracle_cdf(long k, long n, double p) {
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return k >= n ? 1.0 : 0.0;
    double term = std::pow(1.0 - p, static_cast<double>(n));
    double sum = term;
    for (long i = 1; i <= k; ++i) {
        term *= static_cast<double>(n - i + 1) / static_cast<double>(i) * p / (1.0 - p);
        sum += term;
    }
    return sum;
}

double oracle_bound(long k, long n, double delta) {
    if (k == n) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (oracle_cdf(k, n, mid) >= delta ? lo : hi) = mid;
    }
    return lo;
}

std::optional<double> oracle_calibrate(const std::vector<EvalRecord>& records, double alpha,
                                       double delta) {
    std::vector<double> grid;
    for (const auto& r : records) grid.push_back(r.confidence);
    std::sort(grid.begin(), grid.end(), std::greater<>());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    std::vector<double> bounds;
    std::vector<long> ns;
    for (double lambda : grid) {
        long n = 0, k = 0;
        for (const auto& r : records) {
            if (r.confidence >= lambda) {
                ++n;
                if (!r.agrees()) ++k;
            }
        }
        ns.push_back(n);
        bounds.push_back(oracle_bound(k, n, delta));
    }
    const long gate = std::max<long>(
        1, static_cast<long>(std::ceil(std::log(delta) / std::log1p(-alpha) - 1e-9)));
    std::size_t start = 0;
    while (start < grid.size() && ns[start] < gate) ++start;
    if (start == grid.size() || bounds[start] > alpha) return std::nullopt;
    std::size_t end = start;
    while (end + 1 < grid.size() && bounds[end + 1] <= alpha) ++end;
    return grid[end];
}

double auroc_pairwise(const std::vector<ConfidenceSample>& s) {
    long long num = 0, pairs = 0;
    for (const auto& p : s) {
        if (!p.correct) continue;
        for (const auto& q : s) {
            if (q.correct) continue;
            ++pairs;
            if (p.confidence > q.confidence)
                num += 2;
            else if (p.confidence == q.confidence)
                num += 1;
        }
    }
    return static_cast<double>(num) / static_cast<double>(2 * pairs);
}

// ---- shared experiment config ----------------------------------------------

json monte_carlo_config() {
    return json{
        {"dataset",
         {{"synthetic",
           {{"size", 2500}, {"annotators", 5}, {"seed", 777}, {"models", 10}}}}},
        {"judges",
         json::array({{{"id", "small"},
                       {"kind", "synthetic"},
                       {"cost_weight", 0.05},
                       {"params", {{"skill", 1.0}, {"tau", 0.5}}}},
                      {{"id", "medium"},
                       {"kind", "synthetic"},
                       {"cost_weight", 0.25},
                       {"params", {{"skill", 2.0}, {"tau", 0.5}}}},
                      {{"id", "large"},
                       {"kind", "synthetic"},
                       {"cost_weight", 1.0},
                       {"params", {{"skill", 4.0}, {"tau", 0.5}}}}})},
        {"confidence",
         {{"mode", "simulated_annotators"}, {"shots", "individual"}, {"k", 5}, {"n", 5}}},
        {"alpha", 0.1},
        {"delta", 0.1},
        {"cal_size", 500},
        {"trials", 1000},
        {"seed", 42},
        {"strategy", "cascaded_selective"}};
}

void criterion_1() {
    const double t0 = now_seconds();
    bool ok = true;
    std::string detail;
    for (long n = 1; n <= 50 && ok; ++n) {
        for (long k = 0; k <= n && ok; ++k) {
            for (double delta : {0.01, 0.05, 0.1, 0.5}) {
                const double bound = binomial_upper_bound(k, n, delta);
                if (std::fabs(bound - oracle_bound(k, n, delta)) >= 1e-9) {
                    ok = false;
                    detail = "mismatch at k=" + std::to_string(k) + " n=" + std::to_string(n);
                    break;
                }
                if (oracle_cdf(k, n, bound) < delta - 1e-12) {
                    ok = false;
                    detail = "CDF below delta at the bound";
                    break;
                }
                if (bound < 1.0 && oracle_cdf(k, n, std::min(1.0, bound + 1e-6)) >= delta) {
                    ok = false;
                    detail = "sup property violated";
                    break;
                }
            }
        }
    }
    const double dt = now_seconds() - t0;
    if (dt >= 10.0) {
        ok = false;
        detail = "runtime " + std::to_string(dt) + "s";
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "binomial bound equals the summation oracle, sup property holds (%.1fs)", dt);
    report(1, ok, ok ? buf : detail);
}

void criterion_2() {
    bool ok = true;
    for (long n : {1L, 5L, 10L, 100L}) {
        for (double delta : {0.01, 0.05, 0.1, 0.5}) {
            const double expect = 1.0 - std::pow(delta, 1.0 / static_cast<double>(n));
            if (std::fabs(binomial_upper_bound(0, n, delta) - expect) >= 1e-9) ok = false;
        }
        if (binomial_upper_bound(n, n, 0.1) != 1.0) ok = false;
    }
    report(2, ok, "closed forms: k=0 gives 1-delta^(1/n), k=n gives exactly 1");
}

void criterion_3() {
    const double t0 = now_seconds();
    SplitMix64 rng(4242);
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_int(96));
        std::vector<EvalRecord> records;
        const double base = 0.55 + 0.4 * rng.uniform();
        for (int i = 0; i < n; ++i) {
            EvalRecord r;
            r.instance_id = "r" + std::to_string(i);
            double conf = 0.5 + 0.5 * rng.uniform();
            if (rng.uniform() < 0.3) conf = std::round(conf * 100.0) / 100.0;
            r.confidence = conf;
            r.verdict = Label::First;
            r.human = rng.uniform() < std::min(1.0, base + 0.3 * (conf - 0.5))
                          ? Label::First
                          : Label::Second;
            records.push_back(std::move(r));
        }
        for (double alpha : {0.05, 0.1, 0.2, 0.3}) {
            const auto got = calibrate_single(records, alpha, 0.1).threshold;
            const auto expect = oracle_calibrate(records, alpha, 0.1);
            if (got != expect) ok = false;
        }
    }
    const double dt = now_seconds() - t0;
    if (dt >= 30.0) ok = false;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "calibrate_single equals the exhaustive full-grid scan oracle (%.1fs)", dt);
    report(3, ok, buf);
}

AggregateReport run_with_strategy(const json& base, const std::string& strategy, int trials) {
    json cfg = base;
    cfg["strategy"] = strategy;
    cfg["trials"] = trials;
    return run_trials(parse_experiment_config(cfg));
}

void criteria_4_and_5() {
    const double t0 = now_seconds();
    const json base = monte_carlo_config();
    const RunContext ctx = RunContext::prepare(parse_experiment_config(base));
    const auto selective = run_trials(ctx);
    const double dt = now_seconds() - t0;
    char buf[220];
    std::snprintf(buf, sizeof buf,
                  "Theorem-1 Monte Carlo: success %.3f >= 0.88 over 1000 trials (%.0fs)",
                  selective.success_rate, dt);
    report(4, selective.success_rate >= 0.88, buf);

    const auto pe = run_with_strategy(base, "point_estimate", 1000);
    const auto ch = run_with_strategy(base, "cascaded_heuristic", 1000);
    const auto ns = run_with_strategy(base, "no_selection", 50);
    const bool ordering = selective.success_rate > pe.success_rate &&
                          selective.success_rate > ch.success_rate &&
                          ns.coverage_mean == 1.0;
    std::snprintf(buf, sizeof buf,
                  "baseline ordering: selective %.3f > point-estimate %.3f, > cascaded-heuristic "
                  "%.3f; no-selection coverage %.0f%%",
                  selective.success_rate, pe.success_rate, ch.success_rate,
                  100.0 * ns.coverage_mean);
    report(5, ordering, buf);
}

void criterion_6() {
    json cfg = monte_carlo_config();
    cfg["trials"] = 1;
    bool ok = true;
    double prev = 2.0;
    std::string covs;
    for (double alpha : {0.3, 0.25, 0.2, 0.15, 0.1, 0.05}) {
        cfg["alpha"] = alpha;
        const auto agg = run_trials(parse_experiment_config(cfg));
        if (agg.coverage_mean > prev + 1e-12) ok = false;
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.3f", agg.coverage_mean);
        covs += buf;
        prev = agg.coverage_mean;
    }
    report(6, ok, "coverage nonincreasing as alpha tightens (0.3 -> 0.05):" + covs);
}

void criterion_7() {
    SplitMix64 rng(909);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_int(196));
        std::vector<ConfidenceSample> s;
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            double c = rng.uniform();
            if (rng.uniform() < 0.25) c = std::round(c * 10.0) / 10.0;
            const bool correct = rng.uniform() < 0.3 + 0.4 * c;
            s.push_back({c, correct});
            (correct ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        const auto v = auroc(s);
        if (!v || std::fabs(*v - auroc_pairwise(s)) >= 1e-9) ok = false;
        auto flipped = s;
        for (auto& e : flipped) e.correct = !e.correct;
        if (*v + *auroc(flipped) != 1.0) ok = false;
    }
    // hand-computed examples
    const std::vector<ConfidenceSample> e1{{0.8, true}, {0.8, false}};
    if (std::fabs(ece(e1, 10) - 0.3) > 1e-12) ok = false;
    std::vector<ConfidenceSample> e2;
    for (int i = 0; i < 6; ++i) e2.push_back({0.6, true});
    for (int i = 0; i < 4; ++i) e2.push_back({0.6, false});
    if (std::fabs(ece(e2, 10)) > 1e-12) ok = false;
    const std::vector<ConfidenceSample> e3{{0.9, false}, {0.8, true}, {0.7, true}};
    if (std::fabs(*auprc(e3) - 7.0 / 12.0) > 1e-12) ok = false;
    report(7, ok, "AUROC pairwise oracle (1e-9), flip identity, ECE/AUPRC hand examples");
}

void criterion_8() {
    SplitMix64 rng(313);
    bool ok = true;
    const LabelSpace binary{false};
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const double pa = rng.uniform();
        const LabelRow row{pa, 1.0 - pa, 0.0};
        AnnotatorSimulation one;
        one.rows = {row};
        const auto a = aggregate_simulated_annotators(one, binary);
        const auto p = predictive_probability(row, binary);
        if (a.verdict != p.verdict || a.confidence != p.confidence) ok = false;
    }
    for (int trial = 0; trial < 300 && ok; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(6));
        AnnotatorSimulation sim;
        for (int i = 0; i < n; ++i) {
            const double pa = rng.uniform();
            sim.rows.push_back({pa, 1.0 - pa, 0.0});
        }
        const auto base = aggregate_simulated_annotators(sim, binary);
        AnnotatorSimulation shuffled = sim;
        for (std::size_t i = 0; i + 1 < shuffled.rows.size(); ++i)
            std::swap(shuffled.rows[i],
                      shuffled.rows[i + rng.uniform_int(shuffled.rows.size() - i)]);
        const auto permuted = aggregate_simulated_annotators(shuffled, binary);
        if (base.verdict != permuted.verdict || base.confidence != permuted.confidence)
            ok = false;
    }
    report(8, ok, "N=1 aggregation equals predictive probability; permutation invariance exact");
}

void criterion_9() {
    const double t0 = now_seconds();
    json cfg = monte_carlo_config();
    cfg["shift"] = true;
    cfg["trials"] = 500;
    cfg["seed"] = 43;
    const auto agg = run_trials(parse_experiment_config(cfg));
    const double dt = now_seconds() - t0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "distribution-shift guarantee: success %.3f >= 0.87 over 500 trials (%.0fs)",
                  agg.success_rate, dt);
    report(9, agg.success_rate >= 0.87, buf);
}

void criterion_10() {
    namespace fs = std::filesystem;
    const fs::path tmp = fs::temp_directory_path() / "seleval_acceptance";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    json cfg = monte_carlo_config();
    cfg["dataset"]["synthetic"]["size"] = 600;
    cfg["cal_size"] = 200;
    cfg["trials"] = 5;
    const std::string cfg_path = (tmp / "config.json").string();
    write_file_atomic(cfg_path, cfg.dump(2));

    auto run_sim = [&](const std::string& out) {
        const std::string out_dir = (tmp / out).string();
        const char* argv[] = {"seleval", "simulate", "--config", cfg_path.c_str(),
                              "--out",   out_dir.c_str()};
        return run_cli(6, argv);
    };
    bool ok = run_sim("run1") == 0 && run_sim("run2") == 0;
    if (ok) {
        ok = read_file((tmp / "run1/aggregate.json").string()) ==
                 read_file((tmp / "run2/aggregate.json").string()) &&
             read_file((tmp / "run1/trials.csv").string()) ==
                 read_file((tmp / "run2/trials.csv").string()) &&
             read_file((tmp / "run1/manifest.json").string()) ==
                 read_file((tmp / "run2/manifest.json").string());
    }
    std::string detail = ok ? "cmd_simulate byte-identical across runs" : "simulate runs differ";

    // replay of the shipped fixture against the frozen golden outputs
    const fs::path fixtures = SELEVAL_FIXTURE_DIR;
    const fs::path replay_dir = fixtures / "replay";
    const std::string replay_cfg = (replay_dir / "config.json").string();
    const std::string replay_out = (tmp / "replay").string();
    const char* argv[] = {"seleval", "replay", "--config", replay_cfg.c_str(),
                          "--out",   replay_out.c_str()};
    const int code = run_cli(6, argv);
    bool replay_ok = code == 0;
    if (replay_ok) {
        for (const char* name : {"report.json", "thresholds.json", "outcomes.jsonl"}) {
            if (read_file(replay_out + "/" + name) !=
                read_file((replay_dir / "golden" / name).string()))
                replay_ok = false;
        }
    }
    ok = ok && replay_ok;
    detail += replay_ok ? "; replay matches the frozen golden byte-for-byte"
                        : "; replay diverges from the golden fixture";
    report(10, ok, detail);
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criteria_4_and_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    std::printf("%s (%d failure%s)\n", failures == 0 ? "ALL CRITERIA PASS" : "FAILURES PRESENT",
                failures, failures == 1 ? "" : "s");
    return failures == 0 ? 0 : 1;
}
