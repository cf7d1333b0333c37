#include "morph/datasets.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::datasets {

namespace {

constexpr int kCanonicalSchema = 1;
constexpr std::size_t kMaxReasons = 20;

struct Collector {
    LoadReport report;

    void skip(std::string reason) {
        ++report.raw_rows;
        ++report.skipped;
        if (report.skip_reasons.size() < kMaxReasons) report.skip_reasons.push_back(std::move(reason));
    }
    void keep(DatasetInstance d) {
        ++report.raw_rows;
        report.instances.push_back(std::move(d));
    }
};

bool components_valid(const DatasetInstance& d) {
    for (const auto& name : component_names(d.task)) {
        auto it = d.components.find(name);
        if (it == d.components.end() || util::is_blank(it->second)) return false;
    }
    return d.components.size() == component_names(d.task).size();
}

void require_task(TaskKind actual, TaskKind expected, Format f) {
    if (actual != expected) {
        throw ConfigError(std::string(to_string(f)) + " holds " + std::string(to_string(expected)) +
                          " data, not " + std::string(to_string(actual)));
    }
}

json parse_whole(const std::filesystem::path& path) {
    try {
        return json::parse(util::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void load_squad2(const std::filesystem::path& path, Collector& c) {
    auto doc = parse_whole(path);
    if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array()) {
        throw ConfigError(path.string() + ": not a SQuAD-format file (no data array)");
    }
    for (const auto& article : doc["data"]) {
        for (const auto& para : article.value("paragraphs", json::array())) {
            auto context = para.value("context", std::string());
            for (const auto& qa : para.value("qas", json::array())) {
                try {
                    DatasetInstance d;
                    d.task = TaskKind::QAc;
                    d.instance_id = qa.at("id").get<std::string>();
                    d.components["context"] = context;
                    d.components["question"] = qa.at("question").get<std::string>();
                    auto answers = qa.value("answers", json::array());
                    bool impossible = qa.value("is_impossible", false) || answers.empty();
                    d.gold_label = impossible ? std::string("unknown") : answers.at(0).at("text").get<std::string>();
                    d.metadata = {{"format", "squad2-json"}, {"title", article.value("title", "")}};
                    if (!components_valid(d)) {
                        c.skip(d.instance_id + ": blank context or question");
                        continue;
                    }
                    c.keep(std::move(d));
                } catch (const json::exception& e) {
                    c.skip(std::string("malformed question: ") + e.what());
                }
            }
        }
    }
}

void load_snli(const std::filesystem::path& path, Collector& c) {
    std::istringstream in(util::read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::is_blank(line)) continue;
        try {
            auto row = json::parse(line);
            DatasetInstance d;
            d.task = TaskKind::NLI;
            d.instance_id = row.contains("pairID") ? row["pairID"].get<std::string>() : "snli-" + std::to_string(line_no);
            d.components["premise"] = row.at("sentence1").get<std::string>();
            d.components["hypothesis"] = row.at("sentence2").get<std::string>();
            auto gold = util::to_lower(util::trim(row.value("gold_label", std::string("-"))));
            if (gold == "entailment" || gold == "contradiction" || gold == "neutral") d.gold_label = gold;
            d.metadata = {{"format", "snli-jsonl"}, {"line", line_no}};
            if (!components_valid(d)) {
                c.skip("line " + std::to_string(line_no) + ": blank premise or hypothesis");
                continue;
            }
            c.keep(std::move(d));
        } catch (const json::exception& e) {
            c.skip("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void load_sst2(const std::filesystem::path& path, Collector& c) {
    std::istringstream in(util::read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    std::size_t sentence_col = 0;
    std::size_t label_col = 1;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (util::is_blank(line)) continue;
        auto cols = util::split(line, '\t');
        if (first) {
            first = false;
            auto lowered = cols;
            for (auto& col : lowered) col = util::to_lower(util::trim(col));
            auto s = std::find(lowered.begin(), lowered.end(), "sentence");
            auto l = std::find(lowered.begin(), lowered.end(), "label");
            if (s != lowered.end() && l != lowered.end()) {
                sentence_col = static_cast<std::size_t>(s - lowered.begin());
                label_col = static_cast<std::size_t>(l - lowered.begin());
                continue;
            }
        }
        if (cols.size() <= std::max(sentence_col, label_col)) {
            c.skip("line " + std::to_string(line_no) + ": too few columns");
            continue;
        }
        auto label = util::trim(cols[label_col]);
        if (label != "0" && label != "1") {
            c.skip("line " + std::to_string(line_no) + ": label must be 0 or 1");
            continue;
        }
        DatasetInstance d;
        d.task = TaskKind::SA;
        d.instance_id = "sst2-" + std::to_string(line_no);
        d.components["text"] = util::trim(cols[sentence_col]);
        d.gold_label = label == "1" ? "positive" : "negative";
        d.metadata = {{"format", "sst2-tsv"}, {"line", line_no}};
        if (!components_valid(d)) {
            c.skip("line " + std::to_string(line_no) + ": blank sentence");
            continue;
        }
        c.keep(std::move(d));
    }
}

void load_redocred(const std::filesystem::path& path, const LoadOptions& opts, Collector& c) {
    auto doc = parse_whole(path);
    if (!doc.is_array()) throw ConfigError(path.string() + ": expected a JSON array of documents");
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& row = doc[i];
        auto id = "redocred-" + std::to_string(i);
        try {
            const auto& labels = row.at("labels");
            if (!labels.is_array() || labels.empty()) {
                c.skip(id + ": no relation labels");
                continue;
            }
            std::vector<std::string> sentences;
            for (const auto& sent : row.at("sents")) sentences.push_back(detokenize(sent.get<std::vector<std::string>>()));
            util::Rng rng(util::mix_seed(opts.seed, row.value("title", id)));
            auto pick = static_cast<std::size_t>(rng.below(labels.size()));
            const auto& label = labels[pick];
            const auto& vertices = row.at("vertexSet");
            auto h = label.at("h").get<std::size_t>();
            auto t = label.at("t").get<std::size_t>();
            auto rel = label.at("r").get<std::string>();

            DatasetInstance d;
            d.task = TaskKind::RE;
            d.instance_id = id;
            d.components["text"] = util::join(sentences, " ");
            d.components["head_entity"] = vertices.at(h).at(0).at("name").get<std::string>();
            d.components["tail_entity"] = vertices.at(t).at(0).at("name").get<std::string>();
            auto name = opts.relation_names.find(rel);
            d.gold_label = name != opts.relation_names.end() ? name->second : rel;
            d.metadata = {{"format", "redocred-json"},
                          {"title", row.value("title", "")},
                          {"relation_id", rel},
                          {"label_index", pick}};
            if (!components_valid(d)) {
                c.skip(id + ": blank text or entity");
                continue;
            }
            c.keep(std::move(d));
        } catch (const json::exception& e) {
            c.skip(id + ": " + e.what());
        }
    }
}

void load_canonical(TaskKind task, const std::filesystem::path& path, Collector& c) {
    std::istringstream in(util::read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::is_blank(line)) continue;
        if (!header) {
            json h;
            try {
                h = json::parse(line);
            } catch (const json::exception& e) {
                throw ConfigError(path.string() + ": bad header: " + e.what());
            }
            if (h.value("schema_version", 0) != kCanonicalSchema) {
                throw ConfigError(path.string() + ": unsupported canonical schema_version");
            }
            require_task(task, parse_task_kind(h.at("task").get<std::string>()), Format::CanonicalJsonl);
            header = true;
            continue;
        }
        try {
            auto d = json::parse(line).get<DatasetInstance>();
            if (d.task != task || !components_valid(d)) {
                c.skip("line " + std::to_string(line_no) + ": components do not match the task");
                continue;
            }
            c.keep(std::move(d));
        } catch (const std::exception& e) {
            c.skip("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header) throw ConfigError(path.string() + ": missing header line");
}

}  // namespace

std::string_view to_string(Format f) {
    switch (f) {
        case Format::Squad2Json: return "squad2-json";
        case Format::SnliJsonl: return "snli-jsonl";
        case Format::Sst2Tsv: return "sst2-tsv";
        case Format::RedocredJson: return "redocred-json";
        case Format::CanonicalJsonl: return "canonical-jsonl";
    }
    return "?";
}

Format parse_format(std::string_view s) {
    for (auto f : {Format::Squad2Json, Format::SnliJsonl, Format::Sst2Tsv, Format::RedocredJson, Format::CanonicalJsonl}) {
        if (to_string(f) == s) return f;
    }
    throw ConfigError("unknown dataset format '" + std::string(s) + "'");
}

TaskInput DatasetInstance::to_input(const std::string& prompt_id) const {
    return TaskInput{components, prompt_id};
}

void to_json(json& j, const DatasetInstance& d) {
    j = json{{"instance_id", d.instance_id},
             {"task", to_string(d.task)},
             {"components", d.components},
             {"gold_label", d.gold_label ? json(*d.gold_label) : json(nullptr)},
             {"metadata", d.metadata}};
}

void from_json(const json& j, DatasetInstance& d) {
    d.instance_id = j.at("instance_id").get<std::string>();
    d.task = parse_task_kind(j.at("task").get<std::string>());
    d.components = j.at("components").get<std::map<std::string, std::string>>();
    d.gold_label.reset();
    if (j.contains("gold_label") && j["gold_label"].is_string()) d.gold_label = j["gold_label"].get<std::string>();
    d.metadata = j.value("metadata", json::object());
}

LoadReport load_dataset(TaskKind task, const std::filesystem::path& path, Format format, const LoadOptions& opts) {
    if (!std::filesystem::exists(path)) throw ConfigError("dataset file not found: " + path.string());
    Collector c;
    switch (format) {
        case Format::Squad2Json:
            require_task(task, TaskKind::QAc, format);
            load_squad2(path, c);
            break;
        case Format::SnliJsonl:
            require_task(task, TaskKind::NLI, format);
            load_snli(path, c);
            break;
        case Format::Sst2Tsv:
            require_task(task, TaskKind::SA, format);
            load_sst2(path, c);
            break;
        case Format::RedocredJson:
            require_task(task, TaskKind::RE, format);
            load_redocred(path, opts, c);
            break;
        case Format::CanonicalJsonl: load_canonical(task, path, c); break;
    }
    if (c.report.instances.empty()) {
        throw ConfigError(path.string() + ": no valid rows (" + std::to_string(c.report.skipped) + " skipped)");
    }
    std::set<std::string> seen;
    for (const auto& d : c.report.instances) {
        if (!seen.insert(d.instance_id).second) throw ConfigError(path.string() + ": duplicate instance id " + d.instance_id);
    }
    return std::move(c.report);
}

std::map<std::string, std::string> load_relation_names(const std::filesystem::path& path) {
    auto doc = parse_whole(path);
    try {
        return doc.get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<DatasetInstance> sample_instances(const std::vector<DatasetInstance>& instances, std::size_t n,
                                              std::uint64_t seed) {
    if (n > instances.size()) {
        throw PreconditionError("cannot sample " + std::to_string(n) + " of " + std::to_string(instances.size()) +
                                " instances");
    }
    util::Rng rng(seed);
    auto idx = rng.choose(instances.size(), n);
    std::sort(idx.begin(), idx.end());
    std::vector<DatasetInstance> out;
    out.reserve(n);
    for (auto i : idx) out.push_back(instances[i]);
    return out;
}

void write_canonical(const std::filesystem::path& path, TaskKind task, const std::vector<DatasetInstance>& instances) {
    std::string out = json{{"schema_version", kCanonicalSchema}, {"task", to_string(task)}}.dump() + "\n";
    for (const auto& d : instances) out += json(d).dump() + "\n";
    util::write_text_file_atomic(path, out);
}

std::string detokenize(const std::vector<std::string>& tokens) {
    static const std::set<std::string> attach_left{".", ",", ";", ":", "!", "?", ")", "]", "}", "%",
                                                   "'s", "'re", "'ve", "'ll", "'d", "'m", "n't", "''"};
    static const std::set<std::string> attach_right{"(", "[", "{", "$", "``"};
    std::string out;
    bool glue_next = false;
    for (const auto& tok : tokens) {
        if (tok.empty()) continue;
        bool glue = out.empty() || glue_next || attach_left.count(tok) != 0;
        if (!glue) out += ' ';
        out += tok;
        glue_next = attach_right.count(tok) != 0;
    }
    return out;
}

}  // namespace morph::datasets
