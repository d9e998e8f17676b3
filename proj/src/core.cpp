#include "seleval/core.hpp"

#include <array>
#include <fstream>

#include <json.hpp>

#include "seleval/io_util.hpp"

namespace seleval {

std::string_view label_name(Label l) {
    switch (l) {
        case Label::First: return "A";
        case Label::Second: return "B";
        case Label::Tie: return "tie";
    }
    return "?";
}

std::optional<Label> parse_label(std::string_view s) {
    if (s == "A") return Label::First;
    if (s == "B") return Label::Second;
    if (s == "tie") return Label::Tie;
    return std::nullopt;
}

MajorityLabel majority_label(const std::vector<Label>& annotations) {
    if (annotations.empty())
        throw std::invalid_argument("majority_label: empty annotation list");
    std::array<int, kNumLabels> counts{};
    for (Label l : annotations) counts[static_cast<int>(l)]++;

    int best = 0;
    for (int i = 1; i < kNumLabels; ++i)
        if (counts[i] > counts[best]) best = i;

    MajorityLabel m;
    m.total = static_cast<int>(annotations.size());
    m.count = counts[best];
    bool unique = true;
    for (int i = 0; i < kNumLabels; ++i)
        if (i != best && counts[i] == counts[best]) unique = false;
    if (unique) m.label = static_cast<Label>(best);
    return m;
}

double agreement_density(const MajorityLabel& m) {
    if (!m.has_winner())
        throw std::invalid_argument("agreement_density: no majority winner");
    return static_cast<double>(m.count) / static_cast<double>(m.total);
}

namespace {

PreferenceInstance instance_from_json(const nlohmann::json& j, const LabelSpace& space,
                                      std::size_t line_no) {
    auto fail = [&](const std::string& what) {
        throw ValidationError("dataset line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) fail("expected a JSON object");
    PreferenceInstance inst;
    for (const char* key : {"id", "query", "response_a", "response_b"}) {
        if (!j.contains(key) || !j.at(key).is_string())
            fail(std::string("missing string field \"") + key + "\"");
    }
    inst.id = j.at("id").get<std::string>();
    inst.query = j.at("query").get<std::string>();
    inst.response_a = j.at("response_a").get<std::string>();
    inst.response_b = j.at("response_b").get<std::string>();
    if (j.contains("annotations")) {
        if (!j.at("annotations").is_array()) fail("\"annotations\" must be an array");
        for (const auto& a : j.at("annotations")) {
            if (!a.is_string()) fail("annotation entries must be strings");
            auto l = parse_label(a.get<std::string>());
            if (!l) fail("unknown label \"" + a.get<std::string>() + "\"");
            if (!space.contains(*l))
                fail("label \"" + a.get<std::string>() + "\" outside the declared label space");
            inst.annotations.push_back(*l);
        }
    }
    if (j.contains("meta")) {
        if (!j.at("meta").is_object()) fail("\"meta\" must be an object");
        for (auto it = j.at("meta").begin(); it != j.at("meta").end(); ++it) {
            if (!it.value().is_string()) fail("meta values must be strings");
            inst.meta[it.key()] = it.value().get<std::string>();
        }
    }
    return inst;
}

}  // namespace

Dataset load_dataset_jsonl(const std::string& path, LabelSpace space) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    Dataset ds;
    ds.label_space = space;
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("dataset line " + std::to_string(line_no) +
                                  ": invalid JSON (" + e.what() + ")");
        }
        PreferenceInstance inst = instance_from_json(j, space, line_no);
        auto [it, inserted] = seen.emplace(inst.id, line_no);
        if (!inserted)
            throw ValidationError("dataset line " + std::to_string(line_no) +
                                  ": duplicate id \"" + inst.id + "\" (first seen on line " +
                                  std::to_string(it->second) + ")");
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

void save_dataset_jsonl(const Dataset& dataset, const std::string& path) {
    std::string body;
    for (const auto& inst : dataset.instances) {
        nlohmann::json j;
        j["id"] = inst.id;
        j["query"] = inst.query;
        j["response_a"] = inst.response_a;
        j["response_b"] = inst.response_b;
        auto ann = nlohmann::json::array();
        for (Label l : inst.annotations) ann.push_back(std::string(label_name(l)));
        j["annotations"] = std::move(ann);
        j["meta"] = inst.meta;
        body += j.dump();
        body += '\n';
    }
    write_file_atomic(path, body);
}

}  // namespace seleval
