#include <algorithm>
#include <cctype>
#include <set>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "seleval/judges.hpp"

namespace seleval {

namespace {

// Appendix-style pairwise judging prompts; shots render in plan order before
// the instance under evaluation.
constexpr const char* kChatHeader =
    "Given a question and two assistant's answers to the question, an annotator chose "
    "which assistant's answer is preferred. Given examples of the annotator's decision, "
    "predict the annotator's verdict on the given example. If Assistant A's response is "
    "preferred to Assistant B's, the annotator chose \"[[A]]\". If Assistant B's response "
    "is preferred to Assistant A's, the annotator chose \"[[B]]\".\n\n";

constexpr const char* kSummaryHeader =
    "Given a document and two summaries of the document, an annotator chose which summary "
    "is preferred. Given examples of the annotator's decision, predict the annotator's "
    "verdict on the given example. If Summary A is preferred to Summary B, the annotator "
    "chose \"[[A]]\". If Summary B is preferred to Summary A, the annotator chose "
    "\"[[B]]\".\n\n";

struct TemplateParts {
    const char* header;
    const char* query_tag;
    const char* a_tag;
    const char* b_tag;
};

constexpr TemplateParts kChatParts{kChatHeader, "[Question]", "[Assistant A's response]",
                                   "[Assistant B's response]"};
constexpr TemplateParts kSummaryParts{kSummaryHeader, "[Document]", "[Summary A]",
                                      "[Summary B]"};

std::string verdict_marker(Label l) {
    switch (l) {
        case Label::First: return "[[A]]";
        case Label::Second: return "[[B]]";
        case Label::Tie: return "[[tie]]";
    }
    return "[[A]]";
}

// Counting semaphore bounding concurrent requests per judge.
class InFlightGate {
public:
    explicit InFlightGate(int limit) : available_(limit) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++available_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int available_;
};

struct GateGuard {
    InFlightGate& gate;
    explicit GateGuard(InFlightGate& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
};

// Token text -> verdict label after stripping marker punctuation.
std::optional<Label> recognize_token(std::string_view token, bool allow_tie) {
    std::string core;
    for (char c : token) {
        if (c == '[' || c == ']' || c == '`' || c == '\'' || c == '"' ||
            std::isspace(static_cast<unsigned char>(c)))
            continue;
        core += c;
    }
    if (core == "A") return Label::First;
    if (core == "B") return Label::Second;
    if (allow_tie) {
        std::string lower = core;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (lower == "tie") return Label::Tie;
    }
    return std::nullopt;
}

class RemoteJudge final : public Judge {
public:
    explicit RemoteJudge(JudgeSpec spec) : spec_(std::move(spec)) {
        endpoint_ = spec_.params.value("endpoint", "");
        if (endpoint_.empty())
            throw ConfigError("remote judge " + spec_.id + ": params.endpoint is required");
        model_ = spec_.params.value("model", "");
        if (model_.empty())
            throw ConfigError("remote judge " + spec_.id + ": params.model is required");
        temperature_ = spec_.params.value("temperature", 1.0);
        retries_ = spec_.params.value("retries", 3);
        timeout_ms_ = spec_.params.value("timeout_ms", 30000);
        samples_ = spec_.params.value("samples", 5);
        allow_tie_ = spec_.params.value("allow_tie", false);
        backoff_ms_ = spec_.params.value("backoff_ms", 250);
        const std::string tmpl = spec_.params.value("template", "chat");
        if (tmpl == "chat")
            parts_ = kChatParts;
        else if (tmpl == "summarization")
            parts_ = kSummaryParts;
        else
            throw ConfigError("remote judge " + spec_.id + ": unknown template \"" + tmpl + "\"");
        gate_ = std::make_unique<InFlightGate>(std::max(1, spec_.params.value("max_in_flight", 4)));
        if (const char* key = std::getenv("JUDGE_API_KEY")) api_key_ = key;

        auto split = endpoint_.find('/', endpoint_.find("//") == std::string::npos
                                             ? 0
                                             : endpoint_.find("//") + 2);
        if (split == std::string::npos) {
            host_ = endpoint_;
            path_ = "/v1/chat/completions";
        } else {
            host_ = endpoint_.substr(0, split);
            path_ = endpoint_.substr(split);
        }
    }

    const JudgeSpec& spec() const override { return spec_; }

    AnnotatorSimulation evaluate(const PreferenceInstance& instance,
                                 const ShotPlan& plan) override {
        AnnotatorSimulation sim;
        sim.instance_id = instance.id;
        sim.judge_id = spec_.id;
        sim.rows.resize(plan.assignments.size());
        // One request per simulated annotator; a bounded window of them runs
        // concurrently and rows land at their annotator index, so results are
        // order-deterministic.
        std::vector<std::thread> workers;
        std::mutex err_mu;
        std::string first_error;
        for (std::size_t j = 0; j < plan.assignments.size(); ++j) {
            workers.emplace_back([&, j] {
                try {
                    sim.rows[j] = one_row(instance, plan, j);
                } catch (const std::exception& e) {
                    std::lock_guard lock(err_mu);
                    if (first_error.empty()) first_error = e.what();
                }
            });
        }
        for (auto& w : workers) w.join();
        if (!first_error.empty()) throw TransportError(first_error);
        return sim;
    }

private:
    std::string render_prompt(const PreferenceInstance& instance, const ShotPlan& plan,
                              std::size_t annotator) const {
        std::string p = parts_.header;
        for (const auto& shot : plan.assignments[annotator]) {
            p += std::string(parts_.query_tag) + "\n" + shot_query(shot.instance_id) + "\n\n";
            p += std::string(parts_.a_tag) + "\n" + shot_text(shot.instance_id, true) + "\n\n";
            p += std::string(parts_.b_tag) + "\n" + shot_text(shot.instance_id, false) + "\n\n";
            p += "[Verdict]:\n" + verdict_marker(shot.label) + "\n\n";
        }
        p += std::string(parts_.query_tag) + "\n" + instance.query + "\n\n";
        p += std::string(parts_.a_tag) + "\n" + instance.response_a + "\n\n";
        p += std::string(parts_.b_tag) + "\n" + instance.response_b + "\n\n";
        p += allow_tie_ ? "Verdict (either \"[[A]]\", \"[[B]]\" or \"[[tie]]\"):"
                        : "Verdict (either \"[[A]]\" or \"[[B]]\"):";
        return p;
    }

    // Shot texts come from the shot pool registered by the harness/CLI before
    // evaluation; unresolved ids degrade to the id itself.
    std::string shot_query(const std::string& id) const {
        auto it = shot_texts_.find(id);
        return it == shot_texts_.end() ? id : it->second.query;
    }
    std::string shot_text(const std::string& id, bool first) const {
        auto it = shot_texts_.find(id);
        if (it == shot_texts_.end()) return id;
        return first ? it->second.response_a : it->second.response_b;
    }

public:
    void register_shot_texts(std::span<const PreferenceInstance> pool) {
        for (const auto& inst : pool)
            shot_texts_[inst.id] = {inst.query, inst.response_a, inst.response_b};
    }

private:
    nlohmann::json post_json(const nlohmann::json& request) {
        GateGuard guard(*gate_);
        int last_status = 0;
        std::string last_error;
        for (int attempt = 0; attempt <= retries_; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
            httplib::Client client(host_);
            client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
            client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = client.Post(path_, headers, request.dump(), "application/json");
            if (!res) {
                last_error = "connection error: " + httplib::to_string(res.error());
                continue;
            }
            last_status = res->status;
            if (res->status >= 500) {
                last_error = "server status " + std::to_string(res->status);
                continue;  // retryable
            }
            if (res->status != 200)
                throw TransportError(spec_.id + ": request rejected with status " +
                                     std::to_string(res->status) + ": " + res->body);
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                throw TransportError(spec_.id + ": unparseable provider response: " + e.what());
            }
        }
        throw TransportError(spec_.id + ": retries exhausted (" + last_error +
                             (last_status ? ", last status " + std::to_string(last_status) : "") +
                             ")");
    }

    // Normalized mass over recognized verdict tokens at the first content
    // position that exposes any; error when the provider output never does.
    std::optional<LabelRow> row_from_logprobs(const nlohmann::json& response) const {
        const auto* content = [&]() -> const nlohmann::json* {
            if (!response.contains("choices") || response["choices"].empty()) return nullptr;
            const auto& choice = response["choices"][0];
            if (!choice.contains("logprobs") || choice["logprobs"].is_null()) return nullptr;
            if (!choice["logprobs"].contains("content")) return nullptr;
            return &choice["logprobs"]["content"];
        }();
        if (!content) return std::nullopt;
        for (const auto& position : *content) {
            LabelRow mass{};
            bool any = false;
            std::set<std::string> seen;  // a token counts once per position
            auto consider = [&](const nlohmann::json& entry) {
                if (!entry.contains("token") || !entry.contains("logprob")) return;
                const auto token = entry["token"].get<std::string>();
                if (!seen.insert(token).second) return;
                auto label = recognize_token(token, allow_tie_);
                if (!label) return;
                mass[static_cast<int>(*label)] += std::exp(entry["logprob"].get<double>());
                any = true;
            };
            if (position.contains("top_logprobs"))
                for (const auto& entry : position["top_logprobs"]) consider(entry);
            consider(position);
            if (!any) continue;
            double sum = mass[0] + mass[1] + mass[2];
            if (sum <= 0.0) continue;
            for (auto& m : mass) m /= sum;
            return mass;
        }
        throw TransportError(spec_.id +
                             ": provider logprobs contain no recognizable verdict tokens");
    }

    LabelRow row_from_sampling(const PreferenceInstance& instance, const ShotPlan& plan,
                               std::size_t annotator) {
        nlohmann::json request = base_request(instance, plan, annotator);
        request["n"] = samples_;
        const nlohmann::json response = post_json(request);
        if (!response.contains("choices") || response["choices"].empty())
            throw TransportError(spec_.id + ": sampling response has no choices");
        LabelRow votes{};
        long parsed = 0;
        for (const auto& choice : response["choices"]) {
            if (!choice.contains("message") || !choice["message"].contains("content")) continue;
            const std::string text = choice["message"]["content"].get<std::string>();
            std::optional<Label> found;
            for (Label l : {Label::First, Label::Second, Label::Tie}) {
                if (l == Label::Tie && !allow_tie_) continue;
                const auto pos = text.find(verdict_marker(l));
                if (pos != std::string::npos) {
                    found = l;
                    break;
                }
            }
            if (found) {
                votes[static_cast<int>(*found)] += 1.0;
                ++parsed;
            }
        }
        if (parsed == 0)
            throw TransportError(spec_.id + ": no sampled choice contained a verdict marker");
        for (auto& v : votes) v /= static_cast<double>(parsed);
        return votes;
    }

    nlohmann::json base_request(const PreferenceInstance& instance, const ShotPlan& plan,
                                std::size_t annotator) const {
        return {{"model", model_},
                {"temperature", temperature_},
                {"messages",
                 nlohmann::json::array(
                     {{{"role", "system"}, {"content", "You are a helpful assistant."}},
                      {{"role", "user"},
                       {"content", render_prompt(instance, plan, annotator)}}})}};
    }

    LabelRow one_row(const PreferenceInstance& instance, const ShotPlan& plan,
                     std::size_t annotator) {
        nlohmann::json request = base_request(instance, plan, annotator);
        request["logprobs"] = true;
        request["top_logprobs"] = 20;
        request["max_tokens"] = 8;
        const nlohmann::json response = post_json(request);
        if (auto row = row_from_logprobs(response)) return *row;
        // provider exposes no probabilities: fall back to verdict sampling
        return row_from_sampling(instance, plan, annotator);
    }

    struct ShotText {
        std::string query, response_a, response_b;
    };

    JudgeSpec spec_;
    std::string endpoint_, host_, path_, model_, api_key_;
    double temperature_ = 1.0;
    int retries_ = 3, timeout_ms_ = 30000, samples_ = 5, backoff_ms_ = 250;
    bool allow_tie_ = false;
    TemplateParts parts_ = kChatParts;
    std::unique_ptr<InFlightGate> gate_;
    std::unordered_map<std::string, ShotText> shot_texts_;
};

}  // namespace

std::unique_ptr<Judge> make_remote_judge(const JudgeSpec& spec) {
    return std::make_unique<RemoteJudge>(spec);
}

void register_remote_shot_texts(Judge& judge, std::span<const PreferenceInstance> pool) {
    if (auto* remote = dynamic_cast<RemoteJudge*>(&judge)) remote->register_shot_texts(pool);
}

}  // namespace seleval
