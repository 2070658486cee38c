#pragma once

// Shared plumbing: error taxonomy with process exit codes, stable hashing,
// deterministic RNG helpers, small string/file utilities.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace perceptlens {

namespace fs = std::filesystem;

// Exit codes used by the CLI: 0 success, 1 validation error,
// 2 missing upstream artifact, 3 backend failure.
enum class ExitCode : int { Ok = 0, Validation = 1, UpstreamMissing = 2, BackendFailure = 3 };

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const { return code_; }

private:
    ExitCode code_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

struct MissingUpstreamError : Error {
    explicit MissingUpstreamError(const std::string& artifact)
        : Error(ExitCode::UpstreamMissing, "missing upstream artifact: " + artifact),
          artifact_(artifact) {}
    const std::string& artifact() const { return artifact_; }

private:
    std::string artifact_;
};

// 64-bit FNV-1a. Stable across platforms and runs; used for prompt hashes,
// cache keys and manifest content hashes.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// mt19937_64 is fully specified by the standard, so raw draws are portable.
// std::uniform_* distributions are not; these helpers are.
inline double rng_unit(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;  // [0,1)
}

inline bool rng_bernoulli(std::mt19937_64& gen, double p) { return rng_unit(gen) < p; }

inline std::size_t rng_below(std::mt19937_64& gen, std::size_t n) {
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = gen();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
}

template <typename T>
void rng_shuffle(std::mt19937_64& gen, std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng_below(gen, i)]);
    }
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            parts.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '\n') {
            std::string_view line = text.substr(start, i - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (i < text.size() || !line.empty()) lines.emplace_back(line);
            start = i + 1;
        }
    }
    return lines;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

// Fixed-precision formatting for reports; avoids locale surprises.
inline std::string format_double(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::string(buf);
}

}  // namespace perceptlens
