#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seleval {

// Pairwise preference label. Tie is a vote category of its own ("this pair is
// a tie"), distinct from a tied vote *count* (see MajorityLabel).
enum class Label : uint8_t { First = 0, Second = 1, Tie = 2 };

constexpr int kNumLabels = 3;

std::string_view label_name(Label l);                  // "A" | "B" | "tie"
std::optional<Label> parse_label(std::string_view s);  // inverse of label_name

// Declared up front per dataset; records never carry a verdict outside it.
struct LabelSpace {
    bool allow_tie = false;

    int size() const { return allow_tie ? 3 : 2; }
    bool contains(Label l) const { return l != Label::Tie || allow_tie; }
};

struct PreferenceInstance {
    std::string id;
    std::string query;
    std::string response_a;
    std::string response_b;
    std::vector<Label> annotations;           // raw human votes, may be empty
    std::map<std::string, std::string> meta;  // model_a / model_b for shift splits
};

// Plurality of human votes. label is empty when the top counts are tied.
struct MajorityLabel {
    std::optional<Label> label;
    int count = 0;  // votes for the winner (top count when tied)
    int total = 0;

    bool has_winner() const { return label.has_value(); }
};

struct Dataset {
    LabelSpace label_space;
    std::vector<PreferenceInstance> instances;

    std::size_t size() const { return instances.size(); }
};

// How instances with no strict human majority enter risk computations.
enum class TiePolicy {
    Exclude,         // drop them (default; the paper calibrates on non-tied instances)
    AlwaysDisagree,  // keep them as guaranteed disagreements
};

// Strict plurality over the votes; tie votes count as their own category.
// Throws std::invalid_argument on an empty list.
MajorityLabel majority_label(const std::vector<Label>& annotations);

// count/total for a decided majority; throws std::invalid_argument when the
// majority has no winner.
double agreement_density(const MajorityLabel& m);

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset JSONL, one instance per line:
// {"id","query","response_a","response_b","annotations":["A"|"B"|"tie",...],"meta":{...}}
Dataset load_dataset_jsonl(const std::string& path, LabelSpace space = {});
void save_dataset_jsonl(const Dataset& dataset, const std::string& path);

}  // namespace seleval
