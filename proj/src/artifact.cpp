#include "morph/artifact.hpp"

#include <algorithm>
#include <sstream>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph {

void to_json(json& j, const GroupResult& r) {
    j = json{{"group_id", r.group_id},
             {"model", r.model},
             {"run_index", r.run_index},
             {"outputs", r.outputs},
             {"verdict", r.verdict ? json(*r.verdict) : json(nullptr)},
             {"quadrant", r.quadrant ? json(to_string(*r.quadrant)) : json(nullptr)},
             {"gt_match", r.gt_match ? json(*r.gt_match) : json(nullptr)},
             {"trace", r.trace}};
    if (!r.infra_error.empty()) j["infra_error"] = r.infra_error;
}

void from_json(const json& j, GroupResult& r) {
    r.group_id = j.at("group_id").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.run_index = j.value("run_index", 0);
    r.outputs = j.at("outputs").get<std::vector<tasks::NormalizedOutput>>();
    r.verdict.reset();
    if (j.contains("verdict") && !j["verdict"].is_null()) r.verdict = verdict_from_json(j["verdict"]);
    r.quadrant.reset();
    if (j.contains("quadrant") && !j["quadrant"].is_null()) r.quadrant = parse_quadrant(j["quadrant"].get<std::string>());
    r.gt_match.reset();
    if (j.contains("gt_match") && !j["gt_match"].is_null()) r.gt_match = j["gt_match"].get<bool>();
    r.infra_error = j.value("infra_error", "");
    r.trace = j.value("trace", json::object());
}

namespace artifact {

std::filesystem::path results_path(const std::filesystem::path& run_dir, const std::string& model) {
    return run_dir / kResultsDir / (model + ".jsonl");
}

std::filesystem::path partial_results_path(const std::filesystem::path& run_dir, const std::string& model) {
    return run_dir / kResultsDir / (model + ".partial.jsonl");
}

std::vector<json> read_jsonl(const std::filesystem::path& path, bool tolerate_torn_tail) {
    std::vector<json> out;
    std::istringstream in(util::read_text_file(path));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!util::is_blank(line)) lines.push_back(line);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(json::parse(lines[i]));
        } catch (const json::exception& e) {
            if (tolerate_torn_tail && i + 1 == lines.size()) break;
            throw ParseError(path.string() + ": line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

std::string to_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

}  // namespace artifact

RunArtifact RunArtifact::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    RunArtifact a;
    a.dir = dir;
    auto config_path = dir / artifact::kConfigFile;
    if (!fs::exists(config_path)) throw NotFoundError("not a run directory (no config.json): " + dir.string());
    try {
        a.config = json::parse(util::read_text_file(config_path));
        if (fs::exists(dir / artifact::kStatusFile)) a.status = json::parse(util::read_text_file(dir / artifact::kStatusFile));
    } catch (const json::exception& e) {
        throw ParseError(dir.string() + ": " + e.what());
    }
    a.complete = a.status.is_object() && a.status.value("state", "") == "complete";
    for (const auto& m : a.config.at("models_under_test")) a.models.push_back(m.at("name").get<std::string>());
    if (fs::exists(dir / artifact::kGroupsFile)) {
        for (const auto& row : artifact::read_jsonl(dir / artifact::kGroupsFile)) a.groups.push_back(row.get<TestGroup>());
    }
    std::sort(a.groups.begin(), a.groups.end(), [](const auto& x, const auto& y) { return x.group_id < y.group_id; });
    for (const auto& m : a.models) {
        auto& rs = a.results[m];
        auto final_path = artifact::results_path(dir, m);
        auto partial_path = artifact::partial_results_path(dir, m);
        std::vector<json> rows;
        if (fs::exists(final_path)) {
            rows = artifact::read_jsonl(final_path);
        } else if (fs::exists(partial_path)) {
            rows = artifact::read_jsonl(partial_path, true);
        }
        std::map<std::string, GroupResult> by_id;
        for (const auto& row : rows) {
            auto r = row.get<GroupResult>();
            by_id[r.group_id] = std::move(r);
        }
        for (auto& [id, r] : by_id) rs.push_back(std::move(r));
    }
    return a;
}

const TestGroup* RunArtifact::find_group(const std::string& group_id) const {
    auto it = std::lower_bound(groups.begin(), groups.end(), group_id,
                               [](const TestGroup& g, const std::string& id) { return g.group_id < id; });
    return it != groups.end() && it->group_id == group_id ? &*it : nullptr;
}

const GroupResult* RunArtifact::find_result(const std::string& model, const std::string& group_id) const {
    auto it = results.find(model);
    if (it == results.end()) return nullptr;
    const auto& rs = it->second;
    auto r = std::lower_bound(rs.begin(), rs.end(), group_id,
                              [](const GroupResult& x, const std::string& id) { return x.group_id < id; });
    return r != rs.end() && r->group_id == group_id ? &*r : nullptr;
}

}  // namespace morph
