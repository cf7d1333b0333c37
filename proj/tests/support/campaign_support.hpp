#pragma once

// Builders for small on-disk campaigns driven by mock backends.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "morph/core.hpp"
#include "morph/util.hpp"

namespace morph::testing {

inline json instance(std::string id, TaskKind task, std::map<std::string, std::string> components, std::string gold) {
    return {{"instance_id", std::move(id)},
            {"task", std::string(to_string(task))},
            {"components", std::move(components)},
            {"gold_label", std::move(gold)},
            {"metadata", json::object()}};
}

inline void write_dataset(const std::filesystem::path& file, TaskKind task, const std::vector<json>& rows) {
    std::string text = json{{"schema_version", 1}, {"task", std::string(to_string(task))}}.dump() + "\n";
    for (const auto& r : rows) text += r.dump() + "\n";
    util::write_text_file_atomic(file, text);
}

// Writes the mock scripts next to the config and returns the config document.
// `mut` scripts every model under test; the embedder falls back to hashed
// bag-of-words vectors.
inline json mock_campaign(const std::filesystem::path& dir, const json& mut, const json& transformer,
                          const std::map<TaskKind, std::vector<json>>& data, const std::vector<int>& mr_filter,
                          const std::vector<std::string>& models = {"mut"}) {
    util::write_text_file_atomic(dir / "mut.json", mut.dump(1));
    util::write_text_file_atomic(dir / "transformer.json", transformer.dump(1));
    util::write_text_file_atomic(dir / "embedder.json", json{{"default", ""}, {"embedding_dim", 4096}}.dump());
    json cfg{{"schema_version", 1},
             {"transformation_model", {{"name", "transformer"}, {"backend", "mock"}, {"mock_script", "transformer.json"}}},
             {"embedder", {{"name", "embedder"}, {"backend", "mock"}, {"mock_script", "embedder.json"}}},
             {"mr_filter", mr_filter},
             {"sample_size", 10},
             {"seed", 7},
             {"concurrency_limit", 2},
             {"cache_mode", "on"}};
    cfg["models_under_test"] = json::array();
    for (const auto& m : models) cfg["models_under_test"].push_back({{"name", m}, {"backend", "mock"}, {"mock_script", "mut.json"}});
    cfg["datasets"] = json::object();
    for (const auto& [task, rows] : data) {
        auto file = util::to_lower(std::string(to_string(task))) + ".jsonl";
        write_dataset(dir / file, task, rows);
        cfg["datasets"][std::string(to_string(task))] = {{"path", file}, {"format", "canonical-jsonl"}};
    }
    util::write_text_file_atomic(dir / "config.json", cfg.dump(1));
    return cfg;
}

}  // namespace morph::testing
