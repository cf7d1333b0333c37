#include "morph/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::oracle {

void ComparatorConfig::validate() const {
    if (!(difference_threshold >= 0.0 && difference_threshold < equivalence_threshold && equivalence_threshold <= 1.0)) {
        throw ConfigError("comparator thresholds must satisfy 0 <= difference < equivalence <= 1");
    }
    if (sentiment_epsilon < 0.0) throw ConfigError("sentiment_epsilon must be >= 0");
}

void to_json(json& j, const ComparatorConfig& c) {
    j = json{{"equivalence_threshold", c.equivalence_threshold},
             {"difference_threshold", c.difference_threshold},
             {"sentiment_epsilon", c.sentiment_epsilon}};
}

void from_json(const json& j, ComparatorConfig& c) {
    ComparatorConfig d;
    c.equivalence_threshold = j.value("equivalence_threshold", d.equivalence_threshold);
    c.difference_threshold = j.value("difference_threshold", d.difference_threshold);
    c.sentiment_epsilon = j.value("sentiment_epsilon", d.sentiment_epsilon);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw PreconditionError("cosine similarity needs vectors of equal, nonzero dimension");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw PreconditionError("cosine similarity of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---- tables ----

std::string OracleTables::canonical(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '\'' || c == '/' || c >= 0x80) {
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            out.push_back(' ');
        }
    }
    return util::trim(util::collapse_whitespace(out));
}

std::string OracleTables::canonical_answer(std::string_view s) const {
    auto c = canonical(s);
    for (const auto& phrase : unknown_phrases) {
        if (c == phrase || (c.size() > phrase.size() && c.compare(0, phrase.size(), phrase) == 0 && c[phrase.size()] == ' ')) {
            return "unknown";
        }
    }
    return c;
}

bool OracleTables::is_symmetric(std::string_view relation) const {
    return symmetric_relations.count(canonical(relation)) != 0;
}

const std::set<std::string>* OracleTables::inverses_of(std::string_view relation) const {
    auto it = inverses.find(canonical(relation));
    return it == inverses.end() ? nullptr : &it->second;
}

OracleTables OracleTables::load(const std::filesystem::path& dir) {
    OracleTables t;
    for (const auto& p : util::read_list_file(dir / "unknown_phrases.txt")) t.unknown_phrases.push_back(canonical(p));
    // Longest first so the most specific phrase decides.
    std::stable_sort(t.unknown_phrases.begin(), t.unknown_phrases.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    for (const auto& r : util::read_list_file(dir / "symmetric_relations.txt")) t.symmetric_relations.insert(canonical(r));
    auto path = dir / "relation_inverses.json";
    try {
        auto doc = json::parse(util::read_text_file(path));
        if (doc.value("schema_version", 0) != 1) throw ConfigError(path.string() + ": unsupported schema_version");
        for (const auto& e : doc.at("inverses")) {
            auto rel = canonical(e.at("relation").get<std::string>());
            for (const auto& inv : e.at("inverse")) {
                auto i = canonical(inv.get<std::string>());
                t.inverses[rel].insert(i);
                t.inverses[i].insert(rel);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return t;
}

// ---- judging ----

namespace {

std::string syntactic_form(const tasks::NormalizedOutput& o) {
    auto s = util::trim(util::collapse_whitespace(util::to_lower(o.value)));
    while (!s.empty() && std::string_view(".!?;:,").find(s.back()) != std::string_view::npos) s.pop_back();
    return s;
}

std::string semantic_form(TaskKind task, const tasks::NormalizedOutput& o, const OracleTables& tables) {
    return task == TaskKind::QAc ? tables.canonical_answer(o.value) : OracleTables::canonical(o.value);
}

// Cosine of texts[0] against each of texts[1..].
std::vector<double> similarities_to_first(const std::vector<std::string>& texts, llm::Embedder& embedder) {
    auto vecs = embedder.embed(texts);
    if (vecs.size() != texts.size()) throw ProtocolError("embedder returned the wrong number of vectors");
    std::vector<double> out;
    for (std::size_t i = 1; i < vecs.size(); ++i) out.push_back(cosine_similarity(vecs[0], vecs[i]));
    return out;
}

Verdict judge_opposite(std::span<const tasks::NormalizedOutput> outputs, const ComparatorConfig& cfg,
                       llm::Embedder& embedder, const OracleTables& tables) {
    auto source = OracleTables::canonical(outputs[0].value);
    const std::set<std::string>* inverse = tables.inverses_of(source);
    if (!inverse) {
        // No exact entry: take the closest catalogued relation if it is close enough.
        std::vector<std::string> texts{source};
        for (const auto& [rel, inv] : tables.inverses) texts.push_back(rel);
        if (texts.size() > 1) {
            auto sims = similarities_to_first(texts, embedder);
            auto best = std::max_element(sims.begin(), sims.end());
            if (*best + kBoundarySlack >= cfg.equivalence_threshold) {
                inverse = tables.inverses_of(texts[static_cast<std::size_t>(best - sims.begin()) + 1]);
            }
        }
    }
    if (!inverse) return Verdict::discarded(DiscardReason::PreconditionUnmet);
    std::optional<double> worst;
    for (std::size_t f = 1; f < outputs.size(); ++f) {
        std::vector<std::string> texts{OracleTables::canonical(outputs[f].value)};
        texts.insert(texts.end(), inverse->begin(), inverse->end());
        auto sims = similarities_to_first(texts, embedder);
        double best = *std::max_element(sims.begin(), sims.end());
        worst = worst ? std::min(*worst, best) : best;
    }
    return *worst + kBoundarySlack >= cfg.equivalence_threshold ? Verdict::satisfied(worst) : Verdict::violated(worst);
}

}  // namespace

Verdict judge(OutputRelationKind relation, TaskKind task, std::span<const tasks::NormalizedOutput> outputs,
              const ComparatorConfig& cfg, llm::Embedder& embedder, const OracleTables& tables) {
    for (const auto& o : outputs) {
        if (!o.ok) throw PreconditionError("an unparsed output reached the oracle");
    }
    std::size_t needed = relation == OutputRelationKind::NotContradiction ? 1 : 2;
    if (outputs.size() < needed) throw PreconditionError("too few outputs for the output relation");

    switch (relation) {
        case OutputRelationKind::EquivalenceSyntactic:
        case OutputRelationKind::DifferenceSyntactic: {
            bool want_equal = relation == OutputRelationKind::EquivalenceSyntactic;
            auto src = syntactic_form(outputs[0]);
            bool holds = std::all_of(outputs.begin() + 1, outputs.end(),
                                     [&](const auto& o) { return (syntactic_form(o) == src) == want_equal; });
            return holds ? Verdict::satisfied() : Verdict::violated();
        }
        case OutputRelationKind::EquivalenceSemantic:
        case OutputRelationKind::DifferenceSemantic: {
            std::vector<std::string> texts;
            for (const auto& o : outputs) texts.push_back(semantic_form(task, o, tables));
            auto sims = similarities_to_first(texts, embedder);
            if (relation == OutputRelationKind::EquivalenceSemantic) {
                double score = *std::min_element(sims.begin(), sims.end());
                return score + kBoundarySlack >= cfg.equivalence_threshold ? Verdict::satisfied(score)
                                                                           : Verdict::violated(score);
            }
            double score = *std::max_element(sims.begin(), sims.end());
            return score - kBoundarySlack <= cfg.difference_threshold ? Verdict::satisfied(score)
                                                                      : Verdict::violated(score);
        }
        case OutputRelationKind::StrongerSentiment: {
            const auto& src = outputs[0];
            for (std::size_t f = 1; f < outputs.size(); ++f) {
                if (!src.intensity || !outputs[f].intensity) return Verdict::discarded(DiscardReason::PreconditionUnmet);
            }
            for (std::size_t f = 1; f < outputs.size(); ++f) {
                const auto& fol = outputs[f];
                if (syntactic_form(fol) != syntactic_form(src)) return Verdict::violated();
                if (*fol.intensity - *src.intensity + kBoundarySlack < cfg.sentiment_epsilon) return Verdict::violated();
            }
            return Verdict::satisfied();
        }
        case OutputRelationKind::OppositeRelation: return judge_opposite(outputs, cfg, embedder, tables);
        case OutputRelationKind::NotContradiction:
            return syntactic_form(outputs.back()) != "contradiction" ? Verdict::satisfied() : Verdict::violated();
    }
    throw PreconditionError("unhandled output relation");
}

bool ground_truth_match(TaskKind task, const tasks::NormalizedOutput& source_output, const std::string& label,
                        const ComparatorConfig& cfg, llm::Embedder& embedder, const OracleTables& tables) {
    if (!source_output.ok) return false;
    switch (task) {
        case TaskKind::NLI:
        case TaskKind::SA: {
            tasks::NormalizedOutput gold;
            gold.value = label;
            return syntactic_form(source_output) == syntactic_form(gold);
        }
        case TaskKind::QAc:
        case TaskKind::RE: {
            tasks::NormalizedOutput gold;
            gold.value = label;
            std::vector<std::string> texts{semantic_form(task, source_output, tables), semantic_form(task, gold, tables)};
            if (texts[0].empty() || texts[1].empty()) return texts[0] == texts[1];
            return similarities_to_first(texts, embedder)[0] + kBoundarySlack >= cfg.equivalence_threshold;
        }
    }
    return false;
}

}  // namespace morph::oracle
