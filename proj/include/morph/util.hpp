#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace morph::util {

// ---- strings (ASCII case rules; non-ASCII bytes pass through untouched) ----

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string collapse_whitespace(std::string_view s);
bool is_blank(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(std::span<const std::string> parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

inline bool is_ascii_alpha(char32_t c) { return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'); }
inline bool is_ascii_upper(char32_t c) { return c >= U'A' && c <= U'Z'; }
inline bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v'; }
inline char32_t ascii_lower(char32_t c) { return is_ascii_upper(c) ? c + 32 : c; }
inline char32_t ascii_upper(char32_t c) { return (c >= U'a' && c <= U'z') ? c - 32 : c; }

// ---- UTF-8 ----

// Invalid sequences decode to U+FFFD.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);

// ---- deterministic randomness ----

// mt19937_64's output sequence is fixed by the standard; the distributions in
// <random> are not, so bounded draws and shuffles are done here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    double unit();  // [0, 1)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // k distinct indices out of [0, n), in draw order.
    std::vector<std::size_t> choose(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

// ---- hashing ----

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Field-wise hasher; fields are length-prefixed so ("ab","c") != ("a","bc").
class Hasher {
public:
    Hasher& add(std::string_view field);
    Hasher& add(std::int64_t value);
    std::uint64_t value() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t mix_seed(std::uint64_t base, std::string_view salt);
std::string hex64(std::uint64_t v);

// ---- numbers ----

// Shortest representation that round-trips.
std::string format_double(double v);

// ---- files ----

std::string read_text_file(const std::filesystem::path& path);
// Writes to a sibling temp file then renames over the target.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);
// Trimmed non-blank lines; lines starting with # are comments.
std::vector<std::string> read_list_file(const std::filesystem::path& path);

std::string utc_timestamp_now();

}  // namespace morph::util
