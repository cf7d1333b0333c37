#include "morph/runner.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "morph/error.hpp"
#include "morph/report.hpp"
#include "morph/util.hpp"

namespace morph::runner {

namespace fs = std::filesystem;

// ---- config ----

void CampaignConfig::validate() const {
    if (models_under_test.empty()) throw ConfigError("models_under_test must not be empty");
    std::set<std::string> names;
    for (const auto& m : models_under_test) {
        m.validate();
        if (!names.insert(m.name).second) throw ConfigError("duplicate model name '" + m.name + "'");
    }
    transformation_model.validate();
    embedder.validate();
    if (sample_size < 1) throw ConfigError("sample_size must be >= 1");
    if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
    if (perturb_rate < 0.0 || perturb_rate > 1.0) throw ConfigError("perturb_rate must be within [0, 1]");
    if (transform_retries < 0) throw ConfigError("transform_retries must be >= 0");
    if (tasks.empty()) throw ConfigError("no tasks selected");
    for (auto t : tasks) {
        if (!datasets.count(t)) throw ConfigError("no dataset configured for task " + std::string(to_string(t)));
    }
    comparator.validate();
}

fs::path CampaignConfig::resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
}

CampaignConfig CampaignConfig::load(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(util::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc, fs::absolute(path).parent_path());
}

CampaignConfig CampaignConfig::from_json(const json& j, const fs::path& base_dir) {
    CampaignConfig c;
    try {
        if (j.value("schema_version", 1) != 1) throw ConfigError("campaign config: unsupported schema_version");
        c.base_dir = j.contains("base_dir") ? fs::path(j["base_dir"].get<std::string>()) : base_dir;
        c.models_under_test = j.at("models_under_test").get<std::vector<llm::ModelEndpoint>>();
        c.transformation_model = j.at("transformation_model").get<llm::ModelEndpoint>();
        c.embedder = j.at("embedder").get<llm::ModelEndpoint>();
        for (auto& [task, src] : j.at("datasets").items()) {
            c.datasets[parse_task_kind(task)] = {src.at("path").get<std::string>(),
                                                 datasets::parse_format(src.at("format").get<std::string>())};
        }
        if (j.contains("tasks")) {
            for (const auto& t : j["tasks"]) c.tasks.insert(parse_task_kind(t.get<std::string>()));
        } else {
            for (const auto& [t, src] : c.datasets) c.tasks.insert(t);
        }
        if (j.contains("mr_filter") && !j["mr_filter"].is_null()) c.mr_filter = j["mr_filter"].get<std::set<int>>();
        c.sample_size = j.value("sample_size", c.sample_size);
        c.seed = j.value("seed", c.seed);
        if (j.contains("comparator")) c.comparator = j["comparator"].get<oracle::ComparatorConfig>();
        c.concurrency_limit = j.value("concurrency_limit", c.concurrency_limit);
        auto mode = j.value("cache_mode", std::string("on"));
        if (mode != "on" && mode != "off") throw ConfigError("cache_mode must be on or off");
        c.cache = mode == "on";
        if (j.contains("cache_dir") && !j["cache_dir"].is_null()) c.cache_dir = j["cache_dir"].get<std::string>();
        if (j.contains("data_dir") && !j["data_dir"].is_null()) c.data_dir = j["data_dir"].get<std::string>();
        c.perturb_rate = j.value("perturb_rate", c.perturb_rate);
        c.prompt_set = j.value("prompt_set", c.prompt_set);
        c.pivot_language = j.value("pivot_language", c.pivot_language);
        c.transform_retries = j.value("transform_retries", c.transform_retries);
        c.record_latency = j.value("record_latency", c.record_latency);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("campaign config: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("campaign config: ") + e.what());
    }
    c.validate();
    return c;
}

json CampaignConfig::to_json() const {
    json ds = json::object();
    for (const auto& [t, src] : datasets) {
        ds[std::string(to_string(t))] = {{"path", src.path}, {"format", datasets::to_string(src.format)}};
    }
    json task_list = json::array();
    for (auto t : tasks) task_list.push_back(to_string(t));
    return json{{"schema_version", 1},
                {"base_dir", base_dir.string()},
                {"models_under_test", models_under_test},
                {"transformation_model", transformation_model},
                {"embedder", embedder},
                {"datasets", ds},
                {"tasks", task_list},
                {"mr_filter", mr_filter ? json(*mr_filter) : json(nullptr)},
                {"sample_size", sample_size},
                {"seed", seed},
                {"comparator", comparator},
                {"concurrency_limit", concurrency_limit},
                {"cache_mode", cache ? "on" : "off"},
                {"cache_dir", cache_dir ? json(*cache_dir) : json(nullptr)},
                {"data_dir", data_dir ? json(*data_dir) : json(nullptr)},
                {"perturb_rate", perturb_rate},
                {"prompt_set", prompt_set},
                {"pivot_language", pivot_language},
                {"transform_retries", transform_retries},
                {"record_latency", record_latency}};
}

// ---- runtime ----

std::unique_ptr<Runtime> Runtime::create(const CampaignConfig& cfg, const fs::path& run_dir) {
    cfg.validate();
    auto rt = std::make_unique<Runtime>();
    rt->cfg = cfg;
    rt->data_dir = cfg.data_dir ? cfg.resolve(*cfg.data_dir) : catalog::default_data_dir();
    rt->catalog = catalog::Catalog::load(rt->data_dir / "catalog.json");
    rt->tables = std::make_shared<const transforms::ResourceTables>(
        transforms::ResourceTables::load(rt->data_dir / "resources"));
    rt->transform_prompts = llmx::PromptLibrary::load(rt->data_dir / "prompts" / "transforms.json");
    rt->task_prompts = tasks::PromptSet::load_named(rt->data_dir / "prompts", cfg.prompt_set);
    rt->oracle_tables = oracle::OracleTables::load(rt->data_dir / "resources");
    llmx::pivot_language_name(cfg.pivot_language);

    std::optional<fs::path> cache_dir;
    if (cfg.cache) cache_dir = cfg.cache_dir ? cfg.resolve(*cfg.cache_dir) : run_dir / "cache";

    auto t = llm::make_backend(cfg.transformation_model, cfg.base_dir);
    if (t.mock) rt->mocks["@transformer"] = t.mock;
    rt->transformer = std::make_shared<llm::CachedModel>(t.chat, cache_dir);

    auto e = llm::make_backend(cfg.embedder, cfg.base_dir);
    if (e.mock) rt->mocks["@embedder"] = e.mock;
    rt->embedder = std::make_shared<llm::CachedEmbedder>(e.embedder, cache_dir);

    for (const auto& m : cfg.models_under_test) {
        auto b = llm::make_backend(m, cfg.base_dir);
        if (b.mock) rt->mocks[m.name] = b.mock;
        ModelHandles h;
        h.shared = std::make_shared<llm::CachedModel>(b.chat, cache_dir);
        h.direct = cfg.cache ? std::static_pointer_cast<llm::ChatModel>(h.shared) : b.chat;
        rt->models[m.name] = std::move(h);
    }
    return rt;
}

void Runtime::bypass_model_caches(bool on) {
    for (auto& [name, h] : models) h.shared->set_bypass(on);
}

std::vector<datasets::DatasetInstance> load_task_instances(const Runtime& rt, TaskKind task) {
    const auto& src = rt.cfg.datasets.at(task);
    datasets::LoadOptions opts;
    opts.seed = rt.cfg.seed;
    if (src.format == datasets::Format::RedocredJson) {
        opts.relation_names = datasets::load_relation_names(rt.data_dir / "resources" / "redocred_relations.json");
    }
    auto report = datasets::load_dataset(task, rt.cfg.resolve(src.path), src.format, opts);
    auto n = std::min(rt.cfg.sample_size, report.instances.size());
    return datasets::sample_instances(report.instances, n,
                                      util::mix_seed(rt.cfg.seed, "sample/" + std::string(to_string(task))));
}

// ---- group construction ----

namespace {

struct FollowUp {
    TaskInput input;
    std::optional<DiscardReason> discard;
    std::string detail;
    json trace = json::object();
};

json outcome_trace(const std::string& template_id, const llmx::TransformOutcome& o) {
    json j{{"template", template_id}, {"attempts", o.attempts}, {"calls", o.calls}};
    if (o.ok()) j["output"] = o.output_text;
    return j;
}

void fail(FollowUp& f, const llmx::TransformOutcome& o, const std::string& what) {
    f.discard = DiscardReason::TransformFailed;
    f.detail = what + ": " + std::string(to_string(*o.failure)) + (o.failure_detail.empty() ? "" : ": " + o.failure_detail);
}

llmx::TransformOutcome run_prompt(Runtime& rt, const std::string& template_id, const std::string& text) {
    const auto& prompt = rt.transform_prompts.get(template_id);
    llmx::TransformOptions opts;
    opts.retries = rt.cfg.transform_retries;
    for (const auto& slot : prompt.slots()) {
        if (slot == "LANG") opts.slots["LANG"] = llmx::pivot_language_name(rt.cfg.pivot_language);
    }
    return llmx::transform_with_prompt(prompt, text, *rt.transformer, opts);
}

FollowUp rule_follow_up(const catalog::MRDefinition& def, transforms::PerturbKind kind, const TaskInput& source,
                        const std::vector<std::string>& comps, std::uint64_t seed, Runtime& rt) {
    FollowUp f{source, {}, {}, json::object()};
    for (const auto& c : comps) {
        transforms::PerturbConfig pc{rt.cfg.perturb_rate, util::mix_seed(seed, c), rt.tables};
        auto res = transforms::perturb_traced(kind, source.at(c), pc);
        f.input.components[c] = res.text;
        f.trace[c] = res.detail;
    }
    if (kind != transforms::PerturbKind::Identity && f.input == source) {
        f.discard = DiscardReason::InputRelationUnmet;
        f.detail = def.id == 19 ? "fewer than two distinct sentences to shuffle" : "transformation left the input unchanged";
    }
    return f;
}

FollowUp prompt_follow_up(const std::string& template_id, const TaskInput& source, const std::vector<std::string>& comps,
                          Runtime& rt) {
    FollowUp f{source, {}, {}, json::object()};
    for (const auto& c : comps) {
        auto o = run_prompt(rt, template_id, source.at(c));
        f.trace[c] = outcome_trace(template_id, o);
        if (!o.ok()) {
            fail(f, o, template_id + " on " + c);
            return f;
        }
        f.input.components[c] = o.output_text;
    }
    return f;
}

FollowUp composite_follow_up(const catalog::MRDefinition& def, TaskKind task, const datasets::DatasetInstance& inst,
                             const TaskInput& source, const std::vector<std::string>& comps, Runtime& rt) {
    using catalog::CompositeKind;
    FollowUp f{source, {}, {}, json::object()};
    switch (*def.binding->composite) {
        case CompositeKind::BackTranslate:
            for (const auto& c : comps) {
                auto o = llmx::back_translate(source.at(c), rt.cfg.pivot_language, *rt.transformer, rt.transform_prompts,
                                              rt.cfg.transform_retries);
                f.trace[c] = outcome_trace("back_translate", o);
                if (!o.ok()) {
                    fail(f, o, "back translation of " + c);
                    return f;
                }
                f.input.components[c] = o.output_text;
            }
            return f;

        case CompositeKind::EntitySubstitution: {
            if (task != TaskKind::RE) return prompt_follow_up("category_substitution", source, comps, rt);
            const auto& text = source.at("text");
            const auto& head = source.at("head_entity");
            if (!llmx::contains_entity(text, head)) {
                f.discard = DiscardReason::PreconditionUnmet;
                f.detail = "head entity does not occur in the text";
                return f;
            }
            auto o = run_prompt(rt, "entity_alternative", head);
            f.trace["head_entity"] = outcome_trace("entity_alternative", o);
            if (!o.ok()) {
                fail(f, o, "entity_alternative on head_entity");
                return f;
            }
            f.input.components["head_entity"] = o.output_text;
            f.input.components["text"] = llmx::replace_entity(text, head, o.output_text);
            return f;
        }

        case CompositeKind::EntitySwap: {
            const auto& text = source.at("text");
            const auto& head = source.at("head_entity");
            const auto& tail = source.at("tail_entity");
            const bool symmetric_mr = def.id == 141;
            if (!inst.gold_label) {
                f.discard = DiscardReason::PreconditionUnmet;
                f.detail = "no gold relation to check symmetry";
                return f;
            }
            bool symmetric = rt.oracle_tables.is_symmetric(*inst.gold_label);
            if (symmetric != symmetric_mr) {
                f.discard = DiscardReason::PreconditionUnmet;
                f.detail = "relation '" + *inst.gold_label + "' is " + (symmetric ? "symmetric" : "not symmetric");
                return f;
            }
            if (!llmx::contains_entity(text, head) || !llmx::contains_entity(text, tail)) {
                f.discard = DiscardReason::PreconditionUnmet;
                f.detail = "an entity does not occur in the text";
                return f;
            }
            if (oracle::OracleTables::canonical(head) == oracle::OracleTables::canonical(tail)) {
                f.discard = DiscardReason::InputRelationUnmet;
                f.detail = "head and tail entities are the same";
                return f;
            }
            f.input.components["text"] = llmx::swap_entities(text, head, tail);
            f.trace["text"] = {{"swapped", {head, tail}}};
            return f;
        }

        case CompositeKind::FinalExclamation:
            for (const auto& c : comps) {
                auto out = llmx::final_exclamation(source.at(c));
                if (!out) {
                    f.discard = DiscardReason::InputRelationUnmet;
                    f.detail = c + " has no final full stop or word to mark";
                    return f;
                }
                f.input.components[c] = *out;
            }
            return f;
    }
    throw PreconditionError("unhandled composite binding");
}

TestGroup make_group(int mr_id, TaskKind task, const TransformTarget& variant, std::vector<std::string> ids,
                     std::uint64_t seed, OutputRelationKind relation) {
    TestGroup g;
    g.mr_id = mr_id;
    g.task = task;
    g.variant = variant;
    g.source_instance_ids = std::move(ids);
    g.seed = seed;
    g.relation = relation;
    g.group_id = compute_group_id(mr_id, task, variant, g.source_instance_ids, seed);
    return g;
}

std::uint64_t group_seed(std::uint64_t base, int mr_id, TaskKind task, const std::string& ids, const TransformTarget& v) {
    return util::mix_seed(base, std::to_string(mr_id) + "/" + std::string(to_string(task)) + "/" + ids + "/" + v.tag());
}

}  // namespace

std::vector<TestGroup> build_test_groups(int mr_id, TaskKind task, const std::vector<datasets::DatasetInstance>& instances,
                                         Runtime& rt) {
    const auto& def = rt.catalog.lookup(mr_id);
    if (!def.executable || !def.binding) throw PreconditionError("MR-" + std::to_string(mr_id) + " is not executable");
    const auto relation = def.relation_for(task);
    const auto& prompt_id = rt.task_prompts.for_task(task).id;
    std::vector<TestGroup> out;

    for (const auto& variant : rt.catalog.expand_variants(mr_id, task)) {
        if (variant.kind == TransformTarget::Kind::CrossInstance) {
            auto built = llmx::build_cross_instance_inputs(variant.construction, instances, prompt_id, rt.transformer.get(),
                                                           &rt.transform_prompts, rt.cfg.transform_retries);
            for (auto& b : built) {
                auto seed = group_seed(rt.cfg.seed, mr_id, task, util::join(b.source_instance_ids, "+"), variant);
                auto g = make_group(mr_id, task, variant, b.source_instance_ids, seed, relation);
                g.inputs = std::move(b.inputs);
                g.gold_label = b.gold_label;
                g.pre_discard = b.pre_discard;
                g.discard_detail = b.discard_detail;
                g.trace = std::move(b.trace);
                out.push_back(std::move(g));
            }
            continue;
        }
        const auto comps = variant.resolve(task);
        for (const auto& inst : instances) {
            if (inst.task != task) throw PreconditionError("instance " + inst.instance_id + " belongs to another task");
            auto seed = group_seed(rt.cfg.seed, mr_id, task, inst.instance_id, variant);
            auto g = make_group(mr_id, task, variant, {inst.instance_id}, seed, relation);
            g.gold_label = inst.gold_label;
            auto source = inst.to_input(prompt_id);

            FollowUp f;
            switch (def.binding->kind) {
                case catalog::BindingKind::Rule:
                    f = rule_follow_up(def, *def.binding->perturb, source, comps, seed, rt);
                    break;
                case catalog::BindingKind::Prompt:
                    f = prompt_follow_up(def.binding->template_id, source, comps, rt);
                    break;
                case catalog::BindingKind::Composite:
                    f = composite_follow_up(def, task, inst, source, comps, rt);
                    break;
                case catalog::BindingKind::None:
                    throw PreconditionError("MR-" + std::to_string(mr_id) + " has no per-instance binding");
            }
            g.trace = {{"transform", std::move(f.trace)}};
            if (f.discard) {
                g.inputs = {source, source};
                g.pre_discard = f.discard;
                g.discard_detail = f.detail;
            } else {
                g.inputs = {source, std::move(f.input)};
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

// ---- execution ----

GroupResult execute_group(const TestGroup& group, const std::string& model, Runtime& rt, int run_index) {
    GroupResult r;
    r.group_id = group.group_id;
    r.model = model;
    r.run_index = run_index;
    if (group.pre_discard) {
        r.verdict = Verdict::discarded(*group.pre_discard);
        r.trace = {{"discard_detail", group.discard_detail}};
        return r;
    }
    auto it = rt.models.find(model);
    if (it == rt.models.end()) throw NotFoundError("unknown model under test '" + model + "'");
    const auto& handles = it->second;

    json calls = json::array();
    try {
        for (std::size_t i = 0; i < group.inputs.size(); ++i) {
            const auto& input = group.inputs[i];
            const auto& prompt = rt.task_prompts.by_id(input.prompt_id);
            auto req = llm::ChatRequest::user(tasks::render_task_prompt(prompt, input), run_index);
            auto resp = i == 0 ? handles.shared->chat(req) : handles.direct->chat(req);
            r.outputs.push_back(tasks::parse_task_output(group.task, resp.text));
            if (rt.cfg.record_latency) {
                calls.push_back({{"input", i}, {"latency_ms", resp.latency_ms}, {"from_cache", resp.from_cache}});
            }
        }
        if (rt.cfg.record_latency) r.trace["calls"] = calls;

        auto bad = std::find_if(r.outputs.begin(), r.outputs.end(), [](const auto& o) { return !o.ok; });
        if (bad != r.outputs.end()) {
            r.verdict = Verdict::discarded(DiscardReason::EmptyModelOutput);
            r.trace["discard_detail"] = "output " + std::to_string(bad - r.outputs.begin()) + ": " + bad->error;
            return r;
        }
        r.verdict = oracle::judge(group.relation, group.task, r.outputs, rt.cfg.comparator, *rt.embedder, rt.oracle_tables);
        if (r.verdict->judged() && group.gold_label) {
            r.gt_match = oracle::ground_truth_match(group.task, r.outputs[0], *group.gold_label, rt.cfg.comparator,
                                                    *rt.embedder, rt.oracle_tables);
            r.quadrant = classify_quadrant(*r.verdict, *r.gt_match);
        }
    } catch (const TransportError& e) {
        r.verdict.reset();
        r.quadrant.reset();
        r.gt_match.reset();
        r.infra_error = e.what();
    } catch (const ProtocolError& e) {
        r.verdict.reset();
        r.quadrant.reset();
        r.gt_match.reset();
        r.infra_error = e.what();
    }
    return r;
}

// ---- persistence ----

namespace {

void log(const RunOptions& opts, const std::string& msg) {
    if (opts.log) opts.log(msg);
}

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception stops
// the remaining work and is rethrown after all threads finish.
void parallel_for(std::size_t n, int workers, const std::function<bool(std::size_t)>& fn) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mu;
    auto body = [&] {
        while (!stop.load()) {
            auto i = next.fetch_add(1);
            if (i >= n) return;
            try {
                if (!fn(i)) stop.store(true);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                stop.store(true);
            }
        }
    };
    auto count = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1))));
    {
        std::vector<std::jthread> pool;
        for (int i = 0; i < count; ++i) pool.emplace_back(body);
    }
    if (error) std::rethrow_exception(error);
}

std::vector<TestGroup> build_all_groups(Runtime& rt, const RunOptions& opts) {
    std::vector<std::pair<int, TaskKind>> pairs;
    for (const auto& [mr, task] : rt.catalog.applicable_pairs()) {
        if (!rt.cfg.tasks.count(task)) continue;
        if (rt.cfg.mr_filter && !rt.cfg.mr_filter->count(mr)) continue;
        pairs.emplace_back(mr, task);
    }
    if (pairs.empty()) throw ConfigError("no work: no applicable (MR, task) pair matches the configured tasks and mr_filter");

    std::map<TaskKind, std::vector<datasets::DatasetInstance>> instances;
    for (auto t : rt.cfg.tasks) {
        instances[t] = load_task_instances(rt, t);
        log(opts, std::string(to_string(t)) + ": " + std::to_string(instances[t].size()) + " instances sampled");
    }

    std::vector<std::vector<TestGroup>> per_pair(pairs.size());
    parallel_for(pairs.size(), rt.cfg.concurrency_limit, [&](std::size_t i) {
        per_pair[i] = build_test_groups(pairs[i].first, pairs[i].second, instances.at(pairs[i].second), rt);
        return true;
    });
    std::vector<TestGroup> groups;
    for (auto& v : per_pair) {
        for (auto& g : v) groups.push_back(std::move(g));
    }
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.group_id < b.group_id; });
    auto dup = std::adjacent_find(groups.begin(), groups.end(),
                                  [](const auto& a, const auto& b) { return a.group_id == b.group_id; });
    if (dup != groups.end()) throw PreconditionError("duplicate group id " + dup->group_id);
    return groups;
}

void write_status(const fs::path& run_dir, const std::string& state, const std::vector<TestGroup>& groups,
                  const std::map<std::string, std::size_t>& done) {
    json d = json::object();
    for (const auto& [m, n] : done) d[m] = n;
    util::write_text_file_atomic(run_dir / artifact::kStatusFile,
                                 json{{"state", state}, {"groups", groups.size()}, {"results", d}}.dump(2) + "\n");
}

// Valid rows of a partial results file; rewrites the file when its tail was torn.
std::map<std::string, json> recover_partial(const fs::path& path) {
    std::map<std::string, json> rows;
    if (!fs::exists(path)) return rows;
    auto parsed = artifact::read_jsonl(path, true);
    for (auto& row : parsed) {
        auto id = row.at("group_id").get<std::string>();
        rows[id] = std::move(row);
    }
    std::vector<json> clean;
    for (const auto& [id, row] : rows) clean.push_back(row);
    util::write_text_file_atomic(path, artifact::to_jsonl(clean));
    return rows;
}

RunArtifact execute_campaign(Runtime& rt, const fs::path& run_dir, const std::vector<TestGroup>& groups,
                             const RunOptions& opts) {
    fs::create_directories(run_dir / artifact::kResultsDir);
    const auto& models = rt.cfg.models_under_test;

    struct Work {
        std::string model;
        std::size_t group;
    };
    std::vector<Work> work;
    std::map<std::string, std::size_t> done;
    std::map<std::string, std::unique_ptr<std::ofstream>> sinks;
    for (const auto& m : models) {
        if (fs::exists(artifact::results_path(run_dir, m.name))) {
            done[m.name] = groups.size();
            continue;
        }
        auto partial = artifact::partial_results_path(run_dir, m.name);
        auto finished = recover_partial(partial);
        done[m.name] = finished.size();
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (!finished.count(groups[i].group_id)) work.push_back({m.name, i});
        }
        sinks[m.name] = std::make_unique<std::ofstream>(partial, std::ios::app | std::ios::binary);
        if (!*sinks[m.name]) throw ConfigError("cannot write " + partial.string());
    }
    write_status(run_dir, "running", groups, done);
    log(opts, std::to_string(work.size()) + " group executions pending");

    std::mutex sink_mu;
    std::size_t persisted = 0;
    bool stopped = false;
    parallel_for(work.size(), rt.cfg.concurrency_limit, [&](std::size_t i) {
        auto r = execute_group(groups[work[i].group], work[i].model, rt, 0);
        std::lock_guard lock(sink_mu);
        if (stopped) return false;
        auto& out = *sinks[work[i].model];
        out << json(r).dump() << "\n";
        out.flush();
        if (!out) throw ConfigError("write failed for results of " + work[i].model);
        ++done[work[i].model];
        ++persisted;
        if (opts.stop_after_results && persisted >= *opts.stop_after_results) {
            stopped = true;
            return false;
        }
        return true;
    });
    sinks.clear();
    if (stopped) {
        write_status(run_dir, "running", groups, done);
        log(opts, "stopped after " + std::to_string(persisted) + " results");
        return RunArtifact::load(run_dir);
    }

    for (const auto& m : models) {
        auto partial = artifact::partial_results_path(run_dir, m.name);
        if (!fs::exists(partial)) continue;
        std::vector<json> rows;
        for (auto& [id, row] : recover_partial(partial)) rows.push_back(std::move(row));
        if (rows.size() != groups.size()) {
            throw PreconditionError("results for " + m.name + " are incomplete: " + std::to_string(rows.size()) + " of " +
                                    std::to_string(groups.size()));
        }
        util::write_text_file_atomic(artifact::results_path(run_dir, m.name), artifact::to_jsonl(rows));
        fs::remove(partial);
    }
    if (!fs::exists(run_dir / artifact::kLabelsFile)) util::write_text_file_atomic(run_dir / artifact::kLabelsFile, "");
    write_status(run_dir, "complete", groups, done);
    auto a = RunArtifact::load(run_dir);
    util::write_text_file_atomic(run_dir / artifact::kMetricsFile,
                                 report::metrics_to_json(report::compute_metrics(a)).dump(2) + "\n");
    log(opts, "campaign complete: " + std::to_string(groups.size()) + " groups x " + std::to_string(models.size()) +
                  " models");
    return a;
}

}  // namespace

RunArtifact run_campaign(const CampaignConfig& cfg, const fs::path& run_dir, const RunOptions& opts) {
    if (fs::exists(run_dir / artifact::kConfigFile)) {
        throw ConfigError(run_dir.string() + " already holds a run; use resume");
    }
    auto rt = Runtime::create(cfg, run_dir);
    fs::create_directories(run_dir);
    util::write_text_file_atomic(run_dir / artifact::kConfigFile, cfg.to_json().dump(2) + "\n");
    auto groups = build_all_groups(*rt, opts);
    std::vector<json> rows(groups.begin(), groups.end());
    util::write_text_file_atomic(run_dir / artifact::kGroupsFile, artifact::to_jsonl(rows));
    log(opts, std::to_string(groups.size()) + " test groups built");
    return execute_campaign(*rt, run_dir, groups, opts);
}

RunArtifact resume_campaign(const fs::path& run_dir, const RunOptions& opts) {
    auto existing = RunArtifact::load(run_dir);
    if (existing.complete) return existing;
    auto cfg = CampaignConfig::from_json(existing.config, run_dir);
    auto rt = Runtime::create(cfg, run_dir);
    std::vector<TestGroup> groups;
    if (fs::exists(run_dir / artifact::kGroupsFile)) {
        groups = std::move(existing.groups);
    } else {
        groups = build_all_groups(*rt, opts);
        std::vector<json> rows(groups.begin(), groups.end());
        util::write_text_file_atomic(run_dir / artifact::kGroupsFile, artifact::to_jsonl(rows));
    }
    return execute_campaign(*rt, run_dir, groups, opts);
}

// ---- flakiness ----

long FlakinessReport::counted() const {
    long n = 0;
    for (auto c : histogram) n += c;
    return n;
}

std::vector<double> FlakinessReport::fractions() const {
    std::vector<double> out(histogram.size(), 0.0);
    auto total = counted();
    if (total == 0) return out;
    for (std::size_t i = 0; i < histogram.size(); ++i) out[i] = double(histogram[i]) / double(total);
    return out;
}

namespace {

json histogram_json(const std::vector<long>& h, int runs) {
    long total = 0;
    for (auto c : h) total += c;
    json out = json::array();
    for (std::size_t i = 0; i < h.size(); ++i) {
        out.push_back({{"failures", i + 1},
                       {"bucket", std::to_string(i + 1) + "/" + std::to_string(runs)},
                       {"count", h[i]},
                       {"fraction", total ? double(h[i]) / double(total) : 0.0}});
    }
    return out;
}

}  // namespace

json FlakinessReport::to_json() const {
    json gs = json::array();
    for (const auto& g : groups) {
        gs.push_back({{"violation_id", g.violation_id},
                      {"model", g.model},
                      {"group_id", g.group_id},
                      {"mr_id", g.mr_id},
                      {"task", morph::to_string(g.task)},
                      {"outcomes", g.outcomes},
                      {"failures", g.failures},
                      {"infra_failed", g.infra_failed},
                      {"label", g.label ? json(morph::to_string(*g.label)) : json(nullptr)}});
    }
    json labels = json::object();
    for (const auto& [k, h] : by_label) labels[std::string(morph::to_string(k))] = histogram_json(h, runs());
    return json{{"schema_version", 1}, {"k", k},           {"runs", runs()},
                {"counted", counted()}, {"histogram", histogram_json(histogram, runs())},
                {"by_label", labels},  {"groups", gs}};
}

FlakinessReport rerun_failures(const fs::path& run_dir, int k, const RunOptions& opts) {
    if (k < 1) throw PreconditionError("k must be at least 1");
    auto artifact = RunArtifact::load(run_dir);
    if (!artifact.complete) throw PreconditionError("run is not complete; resume it first");
    auto violations = report::all_violations(artifact);
    if (violations.empty()) throw PreconditionError("the run has no violated groups to re-run");

    auto cfg = CampaignConfig::from_json(artifact.config, run_dir);
    auto rt = Runtime::create(cfg, run_dir);
    rt->bypass_model_caches(true);
    report::LabelStore labels(run_dir / artifact::kLabelsFile);

    FlakinessReport rep;
    rep.k = k;
    rep.groups.resize(violations.size());
    log(opts, "re-running " + std::to_string(violations.size()) + " violated groups " + std::to_string(k) + " times");
    parallel_for(violations.size(), cfg.concurrency_limit, [&](std::size_t i) {
        const auto& v = violations[i];
        const auto* g = artifact.find_group(v.group_id);
        FlakinessEntry e{v.id, v.model, v.group_id, v.mr_id, v.task, {std::string(to_string(VerdictStatus::Violated))}, 1, false, {}};
        for (int run = 1; run <= k; ++run) {
            auto r = execute_group(*g, v.model, *rt, run);
            if (r.infra_failed()) {
                e.infra_failed = true;
                e.outcomes.push_back("infra_failed");
                continue;
            }
            e.outcomes.push_back(std::string(to_string(r.verdict->status())));
            if (r.violated()) ++e.failures;
        }
        rep.groups[i] = std::move(e);
        return true;
    });

    rep.histogram.assign(static_cast<std::size_t>(k) + 1, 0);
    for (auto& e : rep.groups) {
        if (auto l = labels.latest(e.violation_id)) e.label = l->kind;
        if (e.infra_failed) continue;
        ++rep.histogram[static_cast<std::size_t>(e.failures) - 1];
        if (e.label) {
            auto& h = rep.by_label[*e.label];
            h.resize(static_cast<std::size_t>(k) + 1, 0);
            ++h[static_cast<std::size_t>(e.failures) - 1];
        }
    }
    util::write_text_file_atomic(run_dir / artifact::kFlakinessFile, rep.to_json().dump(2) + "\n");
    return rep;
}

}  // namespace morph::runner
