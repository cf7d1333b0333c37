#include "morph/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::transforms {

namespace {

using util::Rng;

constexpr std::array kKinds{PerturbKind::ReplaceRandomChar, PerturbKind::DeleteChar,
                            PerturbKind::LeetConvert,       PerturbKind::AddRandomChar,
                            PerturbKind::AddSpaces,         PerturbKind::SwapAdjacentChars,
                            PerturbKind::ShuffleCharsInWord, PerturbKind::InsertWord,
                            PerturbKind::SpecialSymbolSub,  PerturbKind::ShuffleSentences,
                            PerturbKind::Identity,          PerturbKind::AppendIrrelevantSentence,
                            PerturbKind::CapitalizeAll,     PerturbKind::KeyboardTypo,
                            PerturbKind::OcrError};

char32_t random_letter(Rng& rng) { return U'a' + static_cast<char32_t>(rng.below(26)); }

char32_t match_case(char32_t like, char32_t c) {
    return util::is_ascii_upper(like) ? util::ascii_upper(c) : util::ascii_lower(c);
}

std::size_t count_letters(const std::u32string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), util::is_ascii_alpha));
}

json positions_json(const std::vector<std::size_t>& positions) { return json(positions); }

const ResourceTables& require_tables(const PerturbConfig& cfg, PerturbKind kind) {
    if (!cfg.tables) {
        throw ConfigError("perturbation " + std::string(to_string(kind)) + " needs resource tables");
    }
    return *cfg.tables;
}

template <typename Table>
const Table& require_nonempty(const Table& t, std::string_view name) {
    if (t.empty()) throw ConfigError("resource table '" + std::string(name) + "' is empty");
    return t;
}

// Positions chosen by the rng, returned in ascending order.
std::vector<std::size_t> pick_sorted(Rng& rng, const std::vector<std::size_t>& eligible, std::size_t k) {
    std::vector<std::size_t> out;
    for (auto idx : rng.choose(eligible.size(), k)) out.push_back(eligible[idx]);
    std::sort(out.begin(), out.end());
    return out;
}

PerturbResult replace_random_char(std::u32string s, const PerturbConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (util::is_ascii_alpha(s[i])) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, eligible.size(), eligible.size());
    auto picked = pick_sorted(rng, eligible, k);
    for (auto p : picked) {
        char32_t orig = util::ascii_lower(s[p]);
        char32_t repl = U'a' + static_cast<char32_t>((orig - U'a' + 1 + rng.below(25)) % 26);
        s[p] = match_case(s[p], repl);
    }
    return {util::utf8_encode(s), json{{"positions", positions_json(picked)}}};
}

PerturbResult delete_char(std::u32string s, const PerturbConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!util::is_space(s[i])) eligible.push_back(i);
    }
    if (eligible.empty()) {
        for (std::size_t i = 0; i < s.size(); ++i) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, s.size(), eligible.size());
    auto picked = pick_sorted(rng, eligible, k);
    for (auto it = picked.rbegin(); it != picked.rend(); ++it) s.erase(*it, 1);
    return {util::utf8_encode(s), json{{"positions", positions_json(picked)}}};
}

PerturbResult add_random_char(std::u32string s, const PerturbConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::size_t> slots(s.size() + 1);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    auto k = s.empty() ? 0 : units_for_rate(cfg.rate, s.size(), slots.size());
    auto picked = pick_sorted(rng, slots, k);
    std::u32string inserted;
    for (std::size_t i = 0; i < picked.size(); ++i) inserted.push_back(random_letter(rng));
    for (std::size_t i = picked.size(); i-- > 0;) s.insert(s.begin() + static_cast<std::ptrdiff_t>(picked[i]), inserted[i]);
    return {util::utf8_encode(s), json{{"positions", positions_json(picked)}, {"inserted", util::utf8_encode(inserted)}}};
}

PerturbResult add_spaces(std::u32string s, const PerturbConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;  // insert before index i, inside a word
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (!util::is_space(s[i - 1]) && !util::is_space(s[i])) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, eligible.size(), eligible.size());
    auto picked = pick_sorted(rng, eligible, k);
    for (auto it = picked.rbegin(); it != picked.rend(); ++it) s.insert(s.begin() + static_cast<std::ptrdiff_t>(*it), U' ');
    return {util::utf8_encode(s), json{{"positions", positions_json(picked)}}};
}

PerturbResult swap_adjacent(std::u32string s, const PerturbConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;  // pair (i, i+1)
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (!util::is_space(s[i]) && !util::is_space(s[i + 1]) && s[i] != s[i + 1]) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, eligible.size(), eligible.size());
    std::vector<std::size_t> order(eligible.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<bool> used(s.size(), false);
    std::vector<std::size_t> picked;
    for (auto idx : order) {
        if (picked.size() >= k) break;
        auto p = eligible[idx];
        if (used[p] || used[p + 1]) continue;
        used[p] = used[p + 1] = true;
        picked.push_back(p);
    }
    std::sort(picked.begin(), picked.end());
    for (auto p : picked) std::swap(s[p], s[p + 1]);
    return {util::utf8_encode(s), json{{"pairs", positions_json(picked)}}};
}

struct WordSpan {
    std::size_t begin;
    std::size_t end;
};

std::vector<WordSpan> word_spans(const std::u32string& s) {
    std::vector<WordSpan> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && util::is_space(s[i])) ++i;
        std::size_t b = i;
        while (i < s.size() && !util::is_space(s[i])) ++i;
        if (i > b) out.push_back({b, i});
    }
    return out;
}

PerturbResult shuffle_chars_in_word(std::u32string s, const PerturbConfig& cfg) {
    Rng rng(cfg.seed);
    auto words = word_spans(s);
    std::vector<std::size_t> eligible;  // word index; interior must hold 2+ distinct chars
    for (std::size_t w = 0; w < words.size(); ++w) {
        auto [b, e] = words[w];
        if (e - b < 4) continue;
        auto first = s.begin() + static_cast<std::ptrdiff_t>(b + 1);
        auto last = s.begin() + static_cast<std::ptrdiff_t>(e - 1);
        if (std::adjacent_find(first, last, std::not_equal_to<>()) != last) eligible.push_back(w);
    }
    auto k = units_for_rate(cfg.rate, eligible.size(), eligible.size());
    auto picked = pick_sorted(rng, eligible, k);
    for (auto w : picked) {
        auto [b, e] = words[w];
        std::vector<char32_t> interior(s.begin() + static_cast<std::ptrdiff_t>(b + 1),
                                       s.begin() + static_cast<std::ptrdiff_t>(e - 1));
        auto original = interior;
        rng.shuffle(interior);
        if (interior == original) std::rotate(interior.begin(), interior.begin() + 1, interior.end());
        std::copy(interior.begin(), interior.end(), s.begin() + static_cast<std::ptrdiff_t>(b + 1));
    }
    return {util::utf8_encode(s), json{{"words", positions_json(picked)}}};
}

PerturbResult insert_word(std::string_view text, const PerturbConfig& cfg) {
    const auto& tables = require_tables(cfg, PerturbKind::InsertWord);
    const auto& fillers = require_nonempty(tables.fillers, "fillers");
    if (util::is_blank(text)) return {std::string(text), json::object()};
    Rng rng(cfg.seed);
    auto s = util::utf8_decode(text);
    auto words = word_spans(s);
    const auto& filler = fillers[rng.below(fillers.size())];
    std::u32string f = util::utf8_decode(filler);
    std::size_t boundary;
    if (words.size() >= 2) {
        boundary = 1 + static_cast<std::size_t>(rng.below(words.size() - 1));
        s.insert(words[boundary].begin, f + U" ");
    } else {
        boundary = words.size();
        s.insert(words.back().end, U" " + f);
    }
    return {util::utf8_encode(s), json{{"word", filler}, {"boundary", boundary}}};
}

PerturbResult special_symbols(std::u32string s, const PerturbConfig& cfg) {
    const auto& table = require_nonempty(require_tables(cfg, PerturbKind::SpecialSymbolSub).special_symbols, "symbols");
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (table.count(util::ascii_lower(s[i]))) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, eligible.size(), eligible.size());
    auto picked = pick_sorted(rng, eligible, k);
    for (auto p : picked) s[p] = table.at(util::ascii_lower(s[p]));
    return {util::utf8_encode(s), json{{"positions", positions_json(picked)}}};
}

}  // namespace

std::span<const PerturbKind> all_perturb_kinds() { return kKinds; }

std::string_view to_string(PerturbKind k) {
    switch (k) {
        case PerturbKind::ReplaceRandomChar: return "ReplaceRandomChar";
        case PerturbKind::DeleteChar: return "DeleteChar";
        case PerturbKind::LeetConvert: return "LeetConvert";
        case PerturbKind::AddRandomChar: return "AddRandomChar";
        case PerturbKind::AddSpaces: return "AddSpaces";
        case PerturbKind::SwapAdjacentChars: return "SwapAdjacentChars";
        case PerturbKind::ShuffleCharsInWord: return "ShuffleCharsInWord";
        case PerturbKind::InsertWord: return "InsertWord";
        case PerturbKind::SpecialSymbolSub: return "SpecialSymbolSub";
        case PerturbKind::ShuffleSentences: return "ShuffleSentences";
        case PerturbKind::Identity: return "Identity";
        case PerturbKind::AppendIrrelevantSentence: return "AppendIrrelevantSentence";
        case PerturbKind::CapitalizeAll: return "CapitalizeAll";
        case PerturbKind::KeyboardTypo: return "KeyboardTypo";
        case PerturbKind::OcrError: return "OcrError";
    }
    return "?";
}

PerturbKind parse_perturb_kind(std::string_view s) {
    for (auto k : kKinds) {
        if (to_string(k) == s) return k;
    }
    throw ParseError("unknown perturbation kind: '" + std::string(s) + "'");
}

int mr_of(PerturbKind k) {
    switch (k) {
        case PerturbKind::ReplaceRandomChar: return 1;
        case PerturbKind::DeleteChar: return 2;
        case PerturbKind::LeetConvert: return 3;
        case PerturbKind::AddRandomChar: return 4;
        case PerturbKind::AddSpaces: return 5;
        case PerturbKind::SwapAdjacentChars: return 6;
        case PerturbKind::ShuffleCharsInWord: return 7;
        case PerturbKind::InsertWord: return 9;
        case PerturbKind::SpecialSymbolSub: return 25;
        case PerturbKind::ShuffleSentences: return 19;
        case PerturbKind::Identity: return 49;
        case PerturbKind::AppendIrrelevantSentence: return 84;
        case PerturbKind::CapitalizeAll: return 102;
        case PerturbKind::KeyboardTypo: return 126;
        case PerturbKind::OcrError: return 128;
    }
    return 0;
}

bool is_rate_driven(PerturbKind k) {
    switch (k) {
        case PerturbKind::ReplaceRandomChar:
        case PerturbKind::DeleteChar:
        case PerturbKind::AddRandomChar:
        case PerturbKind::AddSpaces:
        case PerturbKind::SwapAdjacentChars:
        case PerturbKind::ShuffleCharsInWord:
        case PerturbKind::SpecialSymbolSub:
        case PerturbKind::KeyboardTypo:
        case PerturbKind::OcrError: return true;
        default: return false;
    }
}

namespace {

char32_t single_codepoint(const std::string& key, const std::filesystem::path& file) {
    auto cps = util::utf8_decode(key);
    if (cps.size() != 1) throw ConfigError(file.string() + ": key '" + key + "' must be a single character");
    return cps[0];
}

json load_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(util::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace

ResourceTables ResourceTables::load(const std::filesystem::path& dir, const Overrides& overrides) {
    auto path_for = [&](const std::string& name, const char* file) {
        auto it = overrides.find(name);
        return it != overrides.end() ? it->second : dir / file;
    };
    ResourceTables t;
    {
        auto p = path_for("leet", "leet.json");
        auto doc = load_json_file(p);
        for (auto& [k, v] : doc.items()) {
            t.leet[util::ascii_lower(single_codepoint(k, p))] = single_codepoint(v.get<std::string>(), p);
        }
    }
    {
        auto p = path_for("keyboard", "qwerty_adjacency.json");
        auto doc = load_json_file(p);
        for (auto& [k, v] : doc.items()) {
            t.keyboard_adjacency[util::ascii_lower(single_codepoint(k, p))] = util::utf8_decode(v.get<std::string>());
        }
    }
    {
        auto p = path_for("ocr", "ocr_confusion.json");
        auto doc = load_json_file(p);
        for (auto& [k, v] : doc.items()) {
            auto& alts = t.ocr_confusion[single_codepoint(k, p)];
            for (const auto& alt : v) alts.push_back(util::utf8_decode(alt.get<std::string>()));
            if (alts.empty()) throw ConfigError(p.string() + ": empty confusion list for '" + k + "'");
        }
    }
    {
        auto p = path_for("symbols", "special_symbols.json");
        auto doc = load_json_file(p);
        for (auto& [k, v] : doc.items()) {
            t.special_symbols[util::ascii_lower(single_codepoint(k, p))] = single_codepoint(v.get<std::string>(), p);
        }
    }
    t.fillers = util::read_list_file(path_for("fillers", "filler_words.txt"));
    t.irrelevant_sentences = util::read_list_file(path_for("sentences", "irrelevant_sentences.txt"));
    return t;
}

std::size_t units_for_rate(double rate, std::size_t base, std::size_t eligible) {
    if (rate <= 0.0 || eligible == 0 || base == 0) return 0;
    auto n = static_cast<std::size_t>(std::llround(rate * static_cast<double>(base)));
    return std::min(std::max<std::size_t>(n, 1), eligible);
}

const std::map<char32_t, char32_t>& default_leet_map() {
    static const std::map<char32_t, char32_t> m{{U'a', U'4'}, {U'e', U'3'}, {U'i', U'1'},
                                                {U'o', U'0'}, {U's', U'5'}, {U't', U'7'}};
    return m;
}

std::string leet_convert(std::string_view text, const std::map<char32_t, char32_t>& map) {
    auto s = util::utf8_decode(text);
    for (auto& c : s) {
        auto it = map.find(util::ascii_lower(c));
        if (it != map.end()) c = it->second;
    }
    return util::utf8_encode(s);
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        bool boundary = i + 1 == text.size() || util::is_space(static_cast<unsigned char>(text[i + 1]));
        if (!boundary) continue;
        auto piece = util::trim(text.substr(start, i + 1 - start));
        if (!piece.empty()) out.push_back(std::move(piece));
        start = i + 1;
    }
    auto tail = util::trim(text.substr(std::min(start, text.size())));
    if (!tail.empty()) out.push_back(std::move(tail));
    return out;
}

std::string shuffle_sentences(std::string_view text, std::uint64_t seed) {
    auto sentences = split_sentences(text);
    if (sentences.size() < 2) return std::string(text);
    auto original = sentences;
    Rng rng(seed);
    rng.shuffle(sentences);
    if (sentences == original) std::rotate(sentences.begin(), sentences.begin() + 1, sentences.end());
    if (sentences == original) return std::string(text);  // every sentence identical
    return util::join(sentences, " ");
}

PerturbResult append_irrelevant_sentence(std::string_view text, std::span<const std::string> pool,
                                         std::uint64_t seed) {
    if (pool.empty()) throw ConfigError("irrelevant-sentence pool is empty");
    Rng rng(seed);
    auto idx = static_cast<std::size_t>(rng.below(pool.size()));
    const auto& chosen = pool[idx];
    auto base = util::trim(text);
    std::string out = base.empty() ? chosen : base + " " + chosen;
    return {std::move(out), json{{"appended", chosen}, {"pool_index", idx}}};
}

std::string keyboard_typo(std::string_view text, const std::map<char32_t, std::u32string>& adjacency,
                          const PerturbConfig& cfg) {
    if (adjacency.empty()) throw ConfigError("keyboard adjacency table is empty");
    auto s = util::utf8_decode(text);
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto it = adjacency.find(util::ascii_lower(s[i]));
        if (it != adjacency.end() && !it->second.empty()) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, count_letters(s), eligible.size());
    for (auto p : pick_sorted(rng, eligible, k)) {
        const auto& near = adjacency.at(util::ascii_lower(s[p]));
        s[p] = match_case(s[p], near[rng.below(near.size())]);
    }
    return util::utf8_encode(s);
}

std::string ocr_error(std::string_view text, const std::map<char32_t, std::vector<std::u32string>>& confusion,
                      const PerturbConfig& cfg) {
    if (confusion.empty()) throw ConfigError("OCR confusion table is empty");
    auto s = util::utf8_decode(text);
    Rng rng(cfg.seed);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (confusion.count(s[i])) eligible.push_back(i);
    }
    auto k = units_for_rate(cfg.rate, count_letters(s), eligible.size());
    auto picked = pick_sorted(rng, eligible, k);
    std::vector<std::u32string> replacement;
    for (auto p : picked) {
        const auto& alts = confusion.at(s[p]);
        replacement.push_back(alts[rng.below(alts.size())]);
    }
    for (std::size_t i = picked.size(); i-- > 0;) s.replace(picked[i], 1, replacement[i]);
    return util::utf8_encode(s);
}

std::string capitalize_all(std::string_view text) { return util::to_upper(text); }

PerturbResult perturb_traced(PerturbKind kind, std::string_view text, const PerturbConfig& cfg) {
    switch (kind) {
        case PerturbKind::Identity: return {std::string(text), json::object()};
        case PerturbKind::CapitalizeAll: return {capitalize_all(text), json::object()};
        case PerturbKind::LeetConvert: {
            const auto& map = cfg.tables && !cfg.tables->leet.empty() ? cfg.tables->leet : default_leet_map();
            return {leet_convert(text, map), json::object()};
        }
        case PerturbKind::ShuffleSentences: return {shuffle_sentences(text, cfg.seed), json::object()};
        case PerturbKind::AppendIrrelevantSentence: {
            const auto& pool = require_tables(cfg, kind).irrelevant_sentences;
            return append_irrelevant_sentence(text, pool, cfg.seed);
        }
        case PerturbKind::InsertWord: return insert_word(text, cfg);
        case PerturbKind::KeyboardTypo:
            return {keyboard_typo(text, require_tables(cfg, kind).keyboard_adjacency, cfg), json::object()};
        case PerturbKind::OcrError:
            return {ocr_error(text, require_tables(cfg, kind).ocr_confusion, cfg), json::object()};
        case PerturbKind::SpecialSymbolSub: return special_symbols(util::utf8_decode(text), cfg);
        case PerturbKind::ReplaceRandomChar: return replace_random_char(util::utf8_decode(text), cfg);
        case PerturbKind::DeleteChar: return delete_char(util::utf8_decode(text), cfg);
        case PerturbKind::AddRandomChar: return add_random_char(util::utf8_decode(text), cfg);
        case PerturbKind::AddSpaces: return add_spaces(util::utf8_decode(text), cfg);
        case PerturbKind::SwapAdjacentChars: return swap_adjacent(util::utf8_decode(text), cfg);
        case PerturbKind::ShuffleCharsInWord: return shuffle_chars_in_word(util::utf8_decode(text), cfg);
    }
    throw PreconditionError("unhandled perturbation kind");
}

std::string perturb(PerturbKind kind, std::string_view text, const PerturbConfig& cfg) {
    return perturb_traced(kind, text, cfg).text;
}

}  // namespace morph::transforms
