#pragma once

// Deterministic, rule-based input transformations. Every function here is
// pure: the same (text, config) always produces the same output.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morph/core.hpp"

namespace morph::transforms {

enum class PerturbKind {
    ReplaceRandomChar,         // MR-1
    DeleteChar,                // MR-2
    LeetConvert,               // MR-3
    AddRandomChar,             // MR-4
    AddSpaces,                 // MR-5
    SwapAdjacentChars,         // MR-6
    ShuffleCharsInWord,        // MR-7
    InsertWord,                // MR-9
    SpecialSymbolSub,          // MR-25
    ShuffleSentences,          // MR-19
    Identity,                  // MR-49
    AppendIrrelevantSentence,  // MR-84
    CapitalizeAll,             // MR-102
    KeyboardTypo,              // MR-126
    OcrError,                  // MR-128
};

std::span<const PerturbKind> all_perturb_kinds();
std::string_view to_string(PerturbKind k);
PerturbKind parse_perturb_kind(std::string_view s);
int mr_of(PerturbKind k);
// Kinds whose amount of change scales with PerturbConfig::rate.
bool is_rate_driven(PerturbKind k);

struct ResourceTables {
    std::map<char32_t, char32_t> leet;
    std::map<char32_t, std::u32string> keyboard_adjacency;  // lowercase keys
    std::map<char32_t, std::vector<std::u32string>> ocr_confusion;
    std::map<char32_t, char32_t> special_symbols;  // lowercase keys
    std::vector<std::string> fillers;
    std::vector<std::string> irrelevant_sentences;

    // Per-table file overrides, keyed by table name: leet, keyboard, ocr,
    // symbols, fillers, sentences.
    using Overrides = std::map<std::string, std::filesystem::path>;

    // Loads leet.json, qwerty_adjacency.json, ocr_confusion.json,
    // special_symbols.json, filler_words.txt and irrelevant_sentences.txt
    // from `dir`. Throws ConfigError on missing or malformed files.
    static ResourceTables load(const std::filesystem::path& dir, const Overrides& overrides = {});
};

struct PerturbConfig {
    double rate = 0.1;  // fraction of eligible units, at least one unit
    std::uint64_t seed = 0;
    std::shared_ptr<const ResourceTables> tables;
};

struct PerturbResult {
    std::string text;
    json detail = json::object();  // what was changed, for the group trace
};

// Number of units to perturb: 0 when rate == 0 or nothing is eligible,
// otherwise max(1, round(rate * base)) capped at `eligible`.
std::size_t units_for_rate(double rate, std::size_t base, std::size_t eligible);

std::string perturb(PerturbKind kind, std::string_view text, const PerturbConfig& cfg);
PerturbResult perturb_traced(PerturbKind kind, std::string_view text, const PerturbConfig& cfg);

// Replaces every mapped character (case-insensitively) by its glyph.
std::string leet_convert(std::string_view text, const std::map<char32_t, char32_t>& map);
const std::map<char32_t, char32_t>& default_leet_map();

// Splits after '.', '!' or '?' when followed by whitespace or end of text.
// Delimiters stay with their sentence; pieces are trimmed.
std::vector<std::string> split_sentences(std::string_view text);
// A non-identity permutation of the sentences when at least two distinct
// ones exist; otherwise the text is returned verbatim.
std::string shuffle_sentences(std::string_view text, std::uint64_t seed);
PerturbResult append_irrelevant_sentence(std::string_view text, std::span<const std::string> pool,
                                         std::uint64_t seed);
std::string keyboard_typo(std::string_view text, const std::map<char32_t, std::u32string>& adjacency,
                          const PerturbConfig& cfg);
std::string ocr_error(std::string_view text, const std::map<char32_t, std::vector<std::u32string>>& confusion,
                      const PerturbConfig& cfg);
std::string capitalize_all(std::string_view text);

}  // namespace morph::transforms
