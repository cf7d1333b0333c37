#include "morph/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "morph/catalog.hpp"
#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::report {

// ---- counts ----

std::optional<double> Counts::quadrant_rate(std::size_t i) const {
    if (labeled == 0) return std::nullopt;
    return double(quadrants.at(i)) / double(labeled);
}

std::optional<double> Counts::lambda_labeled() const {
    if (labeled == 0) return std::nullopt;
    return double(quadrants[2] + quadrants[3]) / double(labeled);
}

Counts& Counts::operator+=(const Counts& o) {
    groups += o.groups;
    violations += o.violations;
    satisfied += o.satisfied;
    labeled += o.labeled;
    for (std::size_t i = 0; i < 4; ++i) quadrants[i] += o.quadrants[i];
    discarded += o.discarded;
    infra_failed += o.infra_failed;
    for (const auto& [r, n] : o.discards) discards[r] += n;
    return *this;
}

namespace {

std::size_t quadrant_index(Quadrant q) {
    switch (q) {
        case Quadrant::Q1_BothPass: return 0;
        case Quadrant::Q2_MTPassGTFail: return 1;
        case Quadrant::Q3_MTFailGTPass: return 2;
        case Quadrant::Q4_BothFail: return 3;
    }
    return 0;
}

void tally(Counts& c, const GroupResult& r) {
    if (r.infra_failed()) {
        ++c.infra_failed;
        return;
    }
    switch (r.verdict->status()) {
        case VerdictStatus::Discarded:
            ++c.discarded;
            ++c.discards[*r.verdict->discard_reason()];
            return;
        case VerdictStatus::Satisfied:
            ++c.groups;
            ++c.satisfied;
            break;
        case VerdictStatus::Violated:
            ++c.groups;
            ++c.violations;
            break;
    }
    if (r.quadrant) {
        ++c.labeled;
        ++c.quadrants[quadrant_index(*r.quadrant)];
    }
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::vector<SummaryRow> summarize(const std::string& scope, const std::vector<const Counts*>& rows) {
    std::vector<double> groups, lambdas;
    std::array<std::vector<double>, 4> qs;
    for (const auto* c : rows) {
        if (c->groups == 0) continue;
        groups.push_back(double(c->groups));
        lambdas.push_back(c->lambda());
        for (std::size_t i = 0; i < 4; ++i) {
            if (auto q = c->quadrant_rate(i)) qs[i].push_back(*q);
        }
    }
    if (groups.empty()) return {};
    SummaryRow avg{"AVG", scope, mean(groups), mean(lambdas), {}};
    SummaryRow med{"MED", scope, median(groups), median(lambdas), {}};
    for (std::size_t i = 0; i < 4; ++i) {
        if (qs[i].empty()) continue;
        avg.quadrants[i] = mean(qs[i]);
        med.quadrants[i] = median(qs[i]);
    }
    return {avg, med};
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json counts_json(const Counts& c) {
    json discards = json::object();
    for (auto r : all_discard_reasons()) {
        auto it = c.discards.find(r);
        discards[std::string(to_string(r))] = it == c.discards.end() ? 0 : it->second;
    }
    return json{{"groups", c.groups},
                {"violations", c.violations},
                {"satisfied", c.satisfied},
                {"lambda", c.lambda()},
                {"labeled", c.labeled},
                {"quadrant_counts", c.quadrants},
                {"q1", opt(c.quadrant_rate(0))},
                {"q2", opt(c.quadrant_rate(1))},
                {"q3", opt(c.quadrant_rate(2))},
                {"q4", opt(c.quadrant_rate(3))},
                {"lambda_labeled", opt(c.lambda_labeled())},
                {"discarded", c.discarded},
                {"discards", discards},
                {"infra_failed", c.infra_failed}};
}

Counts counts_from_json(const json& j) {
    Counts c;
    c.groups = j.at("groups").get<long>();
    c.violations = j.at("violations").get<long>();
    c.satisfied = j.at("satisfied").get<long>();
    c.labeled = j.at("labeled").get<long>();
    c.quadrants = j.at("quadrant_counts").get<std::array<long, 4>>();
    c.discarded = j.at("discarded").get<long>();
    c.infra_failed = j.at("infra_failed").get<long>();
    for (auto& [r, n] : j.at("discards").items()) {
        if (n.get<long>() != 0) c.discards[parse_discard_reason(r)] = n.get<long>();
    }
    return c;
}

}  // namespace

std::vector<SummaryRow> MetricsReport::summary_rows() const {
    std::vector<const Counts*> rows;
    for (const auto& [mr, c] : by_mr) rows.push_back(&c);
    auto out = summarize("by_mr", rows);
    for (const auto& [model, total] : by_model) {
        std::vector<const Counts*> per_model;
        for (const auto& [key, c] : by_model_mr) {
            if (key.first == model) per_model.push_back(&c);
        }
        for (auto& r : summarize(model, per_model)) out.push_back(std::move(r));
    }
    return out;
}

MetricsReport compute_metrics(const std::vector<TestGroup>& groups,
                              const std::map<std::string, std::vector<GroupResult>>& results, bool partial) {
    std::map<std::string, const TestGroup*> by_id;
    for (const auto& g : groups) by_id[g.group_id] = &g;
    MetricsReport m;
    m.partial = partial;
    for (const auto& [model, rs] : results) {
        m.by_model[model];
        for (const auto& r : rs) {
            auto it = by_id.find(r.group_id);
            if (it == by_id.end()) throw ParseError("result for unknown group " + r.group_id);
            tally(m.cells[CellKey{it->second->mr_id, it->second->task, model}], r);
        }
    }
    for (const auto& [key, c] : m.cells) {
        m.by_mr[key.mr_id] += c;
        m.by_task[key.task] += c;
        m.by_model[key.model] += c;
        m.by_model_mr[{key.model, key.mr_id}] += c;
        m.overall += c;
    }
    return m;
}

MetricsReport compute_metrics(const RunArtifact& artifact) {
    return compute_metrics(artifact.groups, artifact.results, !artifact.complete);
}

json metrics_to_json(const MetricsReport& m) {
    json cells = json::array(), by_mr = json::array(), by_task = json::array(), by_model = json::array(),
         by_model_mr = json::array(), summary = json::array();
    for (const auto& [k, c] : m.cells) {
        auto j = counts_json(c);
        j["mr_id"] = k.mr_id;
        j["task"] = to_string(k.task);
        j["model"] = k.model;
        cells.push_back(std::move(j));
    }
    for (const auto& [mr, c] : m.by_mr) {
        auto j = counts_json(c);
        j["mr_id"] = mr;
        by_mr.push_back(std::move(j));
    }
    for (const auto& [t, c] : m.by_task) {
        auto j = counts_json(c);
        j["task"] = to_string(t);
        by_task.push_back(std::move(j));
    }
    for (const auto& [model, c] : m.by_model) {
        auto j = counts_json(c);
        j["model"] = model;
        by_model.push_back(std::move(j));
    }
    for (const auto& [key, c] : m.by_model_mr) {
        auto j = counts_json(c);
        j["model"] = key.first;
        j["mr_id"] = key.second;
        by_model_mr.push_back(std::move(j));
    }
    for (const auto& r : m.summary_rows()) {
        summary.push_back({{"row", r.row},
                           {"scope", r.scope},
                           {"groups", r.groups},
                           {"lambda", r.lambda},
                           {"q1", opt(r.quadrants[0])},
                           {"q2", opt(r.quadrants[1])},
                           {"q3", opt(r.quadrants[2])},
                           {"q4", opt(r.quadrants[3])}});
    }
    return json{{"schema_version", 1},   {"partial", m.partial}, {"overall", counts_json(m.overall)},
                {"cells", cells},        {"by_mr", by_mr},       {"by_task", by_task},
                {"by_model", by_model},  {"by_model_mr", by_model_mr}, {"summary", summary}};
}

MetricsReport metrics_from_json(const json& j) {
    if (j.value("schema_version", 0) != 1) throw ParseError("metrics: unsupported schema_version");
    MetricsReport m;
    m.partial = j.at("partial").get<bool>();
    m.overall = counts_from_json(j.at("overall"));
    for (const auto& c : j.at("cells")) {
        m.cells[CellKey{c.at("mr_id").get<int>(), parse_task_kind(c.at("task").get<std::string>()),
                        c.at("model").get<std::string>()}] = counts_from_json(c);
    }
    for (const auto& c : j.at("by_mr")) m.by_mr[c.at("mr_id").get<int>()] = counts_from_json(c);
    for (const auto& c : j.at("by_task")) m.by_task[parse_task_kind(c.at("task").get<std::string>())] = counts_from_json(c);
    for (const auto& c : j.at("by_model")) m.by_model[c.at("model").get<std::string>()] = counts_from_json(c);
    for (const auto& c : j.at("by_model_mr")) {
        m.by_model_mr[{c.at("model").get<std::string>(), c.at("mr_id").get<int>()}] = counts_from_json(c);
    }
    return m;
}

// ---- triage sampling ----

std::string violation_id(const std::string& model, const std::string& group_id) { return model + ":" + group_id; }

std::vector<ViolationRef> all_violations(const RunArtifact& artifact) {
    std::vector<ViolationRef> out;
    for (const auto& model : artifact.models) {
        auto it = artifact.results.find(model);
        if (it == artifact.results.end()) continue;
        for (const auto& r : it->second) {
            if (!r.violated()) continue;
            const auto* g = artifact.find_group(r.group_id);
            if (!g) continue;
            out.push_back({violation_id(model, r.group_id), model, r.group_id, g->mr_id, g->task});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.model, a.mr_id, a.task, a.group_id) < std::tie(b.model, b.mr_id, b.task, b.group_id);
    });
    return out;
}

std::vector<ViolationRef> sample_for_triage(const RunArtifact& artifact, std::size_t per_cell, std::uint64_t seed) {
    if (per_cell == 0) throw PreconditionError("per_cell must be at least 1");
    std::map<CellKey, std::vector<ViolationRef>> cells;
    for (auto& v : all_violations(artifact)) cells[CellKey{v.mr_id, v.task, v.model}].push_back(std::move(v));
    std::vector<ViolationRef> out;
    for (auto& [key, refs] : cells) {
        auto salt = key.model + "/" + std::to_string(key.mr_id) + "/" + std::string(to_string(key.task));
        util::Rng rng(util::mix_seed(seed, salt));
        auto idx = rng.choose(refs.size(), std::min(per_cell, refs.size()));
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) out.push_back(refs[i]);
    }
    return out;
}

// ---- labels ----

LabelStore::LabelStore(std::filesystem::path file) : file_(std::move(file)) { replay(); }

void LabelStore::replay() {
    log_.clear();
    if (!std::filesystem::exists(file_)) return;
    std::vector<json> rows = artifact::read_jsonl(file_, true);
    for (const auto& row : rows) log_.push_back(row.get<TriageLabel>());
    // A torn last line would otherwise swallow the next append.
    auto text = util::read_text_file(file_);
    if (!text.empty() && text.back() != '\n') util::write_text_file_atomic(file_, artifact::to_jsonl(rows));
}

void LabelStore::append(const TriageLabel& label) {
    std::lock_guard lock(mu_);
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    if (!out) throw ConfigError("cannot append to " + file_.string());
    out << json(label).dump() << "\n";
    out.flush();
    if (!out) throw ConfigError("write failed: " + file_.string());
    log_.push_back(label);
}

std::map<std::string, std::map<std::string, TriageLabel>> LabelStore::current() const {
    std::lock_guard lock(mu_);
    std::map<std::string, std::map<std::string, TriageLabel>> out;
    for (const auto& l : log_) out[l.violation_id][l.annotator] = l;
    return out;
}

std::optional<TriageLabel> LabelStore::latest(const std::string& violation_id) const {
    std::lock_guard lock(mu_);
    for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
        if (it->violation_id == violation_id) return *it;
    }
    return std::nullopt;
}

std::size_t LabelStore::log_size() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

// ---- diff ----

std::string_view to_string(DiffSpan::Op op) {
    switch (op) {
        case DiffSpan::Op::Equal: return "equal";
        case DiffSpan::Op::Delete: return "delete";
        case DiffSpan::Op::Insert: return "insert";
    }
    return "?";
}

std::vector<DiffSpan> word_diff(std::string_view before, std::string_view after) {
    auto a = util::split_whitespace(before);
    auto b = util::split_whitespace(after);
    const auto n = a.size(), m = b.size();
    // lcs[i][j] = LCS length of a[i..] and b[j..]
    std::vector<std::uint32_t> lcs((n + 1) * (m + 1), 0);
    auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return lcs[i * (m + 1) + j]; };
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            at(i, j) = a[i] == b[j] ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));
        }
    }
    std::vector<DiffSpan> out;
    auto push = [&](DiffSpan::Op op, const std::string& tok) {
        if (!out.empty() && out.back().op == op) {
            out.back().text += " " + tok;
        } else {
            out.push_back({op, tok});
        }
    };
    std::size_t i = 0, j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && a[i] == b[j]) {
            push(DiffSpan::Op::Equal, a[i]);
            ++i;
            ++j;
        } else if (j == m || (i < n && at(i + 1, j) >= at(i, j + 1))) {
            push(DiffSpan::Op::Delete, a[i++]);
        } else {
            push(DiffSpan::Op::Insert, b[j++]);
        }
    }
    return out;
}

json diff_to_json(const std::vector<DiffSpan>& spans) {
    json out = json::array();
    for (const auto& s : spans) out.push_back({{"op", to_string(s.op)}, {"text", s.text}});
    return out;
}

// ---- export ----

ExportFormat parse_export_format(std::string_view s) {
    if (s == "csv") return ExportFormat::Csv;
    if (s == "json") return ExportFormat::Json;
    throw ConfigError("unknown export format '" + std::string(s) + "' (csv or json)");
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    return "\"" + util::replace_all(std::string(field), "\"", "\"\"") + "\"";
}

namespace {

std::string num(const std::optional<double>& v) { return v ? util::format_double(*v) : std::string(); }

std::string rate_columns(const Counts& c) {
    return std::to_string(c.groups) + "," + util::format_double(c.lambda()) + "," + num(c.quadrant_rate(0)) + "," +
           num(c.quadrant_rate(1)) + "," + num(c.quadrant_rate(2)) + "," + num(c.quadrant_rate(3));
}

const char* kRateHeader = "# groups,\xCE\xBB,\xE2\x91\xA0,\xE2\x91\xA1,\xE2\x91\xA2,\xE2\x91\xA3";

std::string summary_csv_row(const SummaryRow& r, std::size_t leading_blank) {
    std::string s = r.row;
    for (std::size_t i = 0; i < leading_blank; ++i) s += ",";
    s += "," + util::format_double(r.groups) + "," + util::format_double(r.lambda);
    for (const auto& q : r.quadrants) s += "," + num(q);
    return s + "\n";
}

}  // namespace

std::vector<std::filesystem::path> export_report(const RunArtifact& artifact, ExportFormat format,
                                                 const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());
    auto m = compute_metrics(artifact);
    LabelStore store(artifact.dir / artifact::kLabelsFile);
    std::vector<TriageLabel> labels;
    for (const auto& [vid, per] : store.current()) {
        for (const auto& [annotator, l] : per) labels.push_back(l);
    }
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::string& name, const std::string& content) {
        auto p = out_dir / name;
        util::write_text_file_atomic(p, content);
        written.push_back(p);
    };

    if (format == ExportFormat::Json) {
        write("metrics.json", metrics_to_json(m).dump(2) + "\n");
        write("labels.json", json(labels).dump(2) + "\n");
        return written;
    }

    std::string cells = std::string("MR,Task,Model,") + kRateHeader + ",# violations,# labeled,# discarded,# infra failed\n";
    for (const auto& [k, c] : m.cells) {
        cells += std::to_string(k.mr_id) + "," + std::string(to_string(k.task)) + "," + csv_escape(k.model) + "," +
                 rate_columns(c) + "," + std::to_string(c.violations) + "," + std::to_string(c.labeled) + "," +
                 std::to_string(c.discarded) + "," + std::to_string(c.infra_failed) + "\n";
    }
    write("cells.csv", cells);

    std::string by_mr = std::string("MR,QA,NLI,SA,RE,") + kRateHeader + "\n";
    for (const auto& [mr, c] : m.by_mr) {
        by_mr += std::to_string(mr);
        for (auto t : all_tasks()) {
            bool present = std::any_of(m.cells.begin(), m.cells.end(),
                                       [&](const auto& kv) { return kv.first.mr_id == mr && kv.first.task == t; });
            by_mr += present ? ",\xE2\x80\xA2" : ",";
        }
        by_mr += "," + rate_columns(c) + "\n";
    }
    if (!m.by_mr.empty()) {
        for (const auto& r : m.summary_rows()) {
            if (r.scope == "by_mr") by_mr += summary_csv_row(r, 4);
        }
        by_mr += "TOT,,,,," + std::to_string(m.overall.groups) + "," + util::format_double(m.overall.lambda()) + ",,,,\n";
    }
    write("by_mr.csv", by_mr);

    std::string by_task = std::string("Task,") + kRateHeader + "\n";
    for (const auto& [t, c] : m.by_task) by_task += std::string(to_string(t)) + "," + rate_columns(c) + "\n";
    write("by_task.csv", by_task);

    std::string by_model = std::string("Model,") + kRateHeader + "\n";
    for (const auto& [model, c] : m.by_model) by_model += csv_escape(model) + "," + rate_columns(c) + "\n";
    write("by_model.csv", by_model);

    std::string label_csv = "violation_id,variant,annotator,timestamp\n";
    for (const auto& l : labels) {
        label_csv += csv_escape(l.violation_id) + "," + std::string(to_string(l.kind)) + "," + csv_escape(l.annotator) +
                     "," + csv_escape(l.timestamp) + "\n";
    }
    write("labels.csv", label_csv);
    return written;
}

// ---- triage service ----

TriageService::TriageService(RunArtifact artifact, std::vector<ViolationRef> queue)
    : artifact_(std::move(artifact)),
      queue_(queue.empty() ? all_violations(artifact_) : std::move(queue)),
      labels_(artifact_.dir / artifact::kLabelsFile),
      metrics_(metrics_to_json(compute_metrics(artifact_))) {
    for (std::size_t i = 0; i < queue_.size(); ++i) index_[queue_[i].id] = i;
}

const ViolationRef* TriageService::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &queue_[it->second];
}

json TriageService::summary_item(const ViolationRef& ref) const {
    const auto* g = artifact_.find_group(ref.group_id);
    const auto* r = artifact_.find_result(ref.model, ref.group_id);
    json item{{"id", ref.id}, {"model", ref.model}, {"group_id", ref.group_id}, {"mr_id", ref.mr_id},
              {"task", to_string(ref.task)}};
    if (g) {
        item["variant"] = g->variant.tag();
        item["relation"] = to_string(g->relation);
    }
    item["relation_score"] = r && r->verdict && r->verdict->relation_score() ? json(*r->verdict->relation_score()) : json(nullptr);
    item["quadrant"] = r && r->quadrant ? json(to_string(*r->quadrant)) : json(nullptr);
    auto l = labels_.latest(ref.id);
    item["label"] = l ? json(to_string(l->kind)) : json(nullptr);
    return item;
}

namespace {

// Whole-string non-negative integer; rejects signs, spaces and trailing text.
std::size_t parse_count(const std::string& s) {
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) throw ParseError("'" + s + "' is not a non-negative integer");
    return v;
}

}  // namespace

ApiResponse TriageService::list_violations(const std::map<std::string, std::string>& query) const {
    auto get = [&](const char* k) -> std::optional<std::string> {
        auto it = query.find(k);
        return it == query.end() || it->second.empty() ? std::nullopt : std::optional(it->second);
    };
    std::size_t offset = 0, limit = 50;
    std::optional<int> mr;
    std::optional<TaskKind> task;
    std::optional<LabelKind> label;
    try {
        if (auto v = get("offset")) offset = parse_count(*v);
        if (auto v = get("limit")) limit = std::min<std::size_t>(parse_count(*v), 1000);
        if (auto v = get("mr")) mr = static_cast<int>(parse_count(*v));
        if (auto v = get("task")) task = parse_task_kind(*v);
        if (auto v = get("label")) label = parse_label_kind(*v);
    } catch (const std::exception& e) {
        return {400, {{"error", std::string("bad query: ") + e.what()}}};
    }
    auto model = get("model");
    bool unlabeled = get("unlabeled").value_or("") == "true" || get("unlabeled").value_or("") == "1";

    json items = json::array();
    std::size_t total = 0;
    for (const auto& ref : queue_) {
        if (model && ref.model != *model) continue;
        if (mr && ref.mr_id != *mr) continue;
        if (task && ref.task != *task) continue;
        auto l = labels_.latest(ref.id);
        if (unlabeled && l) continue;
        if (label && (!l || l->kind != *label)) continue;
        if (total >= offset && items.size() < limit) items.push_back(summary_item(ref));
        ++total;
    }
    return {200, {{"total", total}, {"offset", offset}, {"limit", limit}, {"items", items}}};
}

ApiResponse TriageService::violation(const std::string& id) const {
    const auto* ref = find(id);
    if (!ref) return {404, {{"error", "unknown violation " + id}}};
    const auto* g = artifact_.find_group(ref->group_id);
    const auto* r = artifact_.find_result(ref->model, ref->group_id);
    if (!g || !r) return {404, {{"error", "violation " + id + " has no stored group"}}};

    auto body = summary_item(*ref);
    try {
        const auto& def = catalog::Catalog::builtin().lookup(g->mr_id);
        body["mr"] = {{"id", def.id}, {"input_relation", def.input_relation}, {"output_relation", def.output_relation}};
    } catch (const Error&) {
        body["mr"] = {{"id", g->mr_id}};
    }
    body["inputs"] = g->inputs;
    body["outputs"] = r->outputs;
    body["verdict"] = *r->verdict;
    body["gold_label"] = g->gold_label ? json(*g->gold_label) : json(nullptr);
    body["gt_match"] = r->gt_match ? json(*r->gt_match) : json(nullptr);
    body["group_trace"] = g->trace;

    json input_diffs = json::array();
    for (std::size_t i = 1; i < g->inputs.size(); ++i) {
        for (const auto& name : component_names(g->task)) {
            input_diffs.push_back({{"input", i},
                                   {"component", name},
                                   {"spans", diff_to_json(word_diff(g->inputs[0].at(name), g->inputs[i].at(name)))}});
        }
    }
    json output_diffs = json::array();
    for (std::size_t i = 1; i < r->outputs.size(); ++i) {
        output_diffs.push_back({{"output", i}, {"spans", diff_to_json(word_diff(r->outputs[0].raw, r->outputs[i].raw))}});
    }
    body["diffs"] = {{"inputs", input_diffs}, {"outputs", output_diffs}};

    json labels = json::array();
    auto current = labels_.current();
    if (auto it = current.find(id); it != current.end()) {
        for (const auto& [annotator, l] : it->second) labels.push_back(l);
    }
    body["labels"] = labels;
    return {200, body};
}

ApiResponse TriageService::post_label(const std::string& id, const std::string& body) {
    if (!find(id)) return {404, {{"error", "unknown violation " + id}}};
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception&) {
        return {400, {{"error", "body is not JSON"}}};
    }
    if (!doc.is_object() || !doc.contains("variant") || !doc["variant"].is_string()) {
        return {400, {{"error", "missing label variant"}}};
    }
    TriageLabel label;
    label.violation_id = id;
    try {
        label.kind = parse_label_kind(doc["variant"].get<std::string>());
    } catch (const ParseError& e) {
        return {400, {{"error", e.what()}}};
    }
    label.annotator = doc.contains("annotator") && doc["annotator"].is_string() ? util::trim(doc["annotator"].get<std::string>()) : "";
    if (label.annotator.empty()) return {400, {{"error", "missing annotator"}}};
    label.timestamp = doc.contains("timestamp") && doc["timestamp"].is_string() ? doc["timestamp"].get<std::string>()
                                                                                 : util::utc_timestamp_now();
    labels_.append(label);
    return {200, {{"label", label}}};
}

ApiResponse TriageService::progress() const {
    std::map<CellKey, std::pair<long, long>> cells;
    long labeled = 0;
    for (const auto& ref : queue_) {
        auto& c = cells[CellKey{ref.mr_id, ref.task, ref.model}];
        ++c.first;
        if (labels_.latest(ref.id)) {
            ++c.second;
            ++labeled;
        }
    }
    json rows = json::array();
    for (const auto& [k, c] : cells) {
        rows.push_back({{"mr_id", k.mr_id}, {"task", to_string(k.task)}, {"model", k.model}, {"total", c.first},
                        {"labeled", c.second}});
    }
    return {200, {{"total", queue_.size()}, {"labeled", labeled}, {"cells", rows}}};
}

ApiResponse TriageService::metrics() const { return {200, metrics_}; }

ApiResponse TriageService::label_summary() const {
    auto blank = [] {
        json j = json::object();
        for (auto k : all_label_kinds()) j[std::string(to_string(k))] = 0;
        return j;
    };
    json by_mr = json::object(), by_task = json::object(), by_model = json::object(), overall = blank();
    for (const auto& ref : queue_) {
        auto l = labels_.latest(ref.id);
        if (!l) continue;
        auto kind = std::string(to_string(l->kind));
        for (auto [obj, key] : {std::pair{&by_mr, std::to_string(ref.mr_id)},
                                std::pair{&by_task, std::string(to_string(ref.task))}, std::pair{&by_model, ref.model}}) {
            if (!obj->contains(key)) (*obj)[key] = blank();
            (*obj)[key][kind] = (*obj)[key][kind].get<long>() + 1;
        }
        overall[kind] = overall[kind].get<long>() + 1;
    }
    return {200, {{"by_mr", by_mr}, {"by_task", by_task}, {"by_model", by_model}, {"overall", overall}}};
}

}  // namespace morph::report
