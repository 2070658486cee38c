#pragma once

// Binary feature registry (prompt catalog), prompt rendering, annotation
// matrix storage with per-cell provenance, and sparsity pruning.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perceptlens/common.hpp"
#include "perceptlens/corpus.hpp"

namespace perceptlens {

struct UnknownFeatureError : Error {
    explicit UnknownFeatureError(const std::string& id)
        : Error(ExitCode::Validation, "unknown feature: " + id) {}
};
struct MissingDataError : Error {
    explicit MissingDataError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct AllFeaturesRemovedError : Error {
    explicit AllFeaturesRemovedError(double threshold)
        : Error(ExitCode::Validation,
                "sparsity pruning at threshold " + format_double(threshold, 4) +
                    " removed every feature") {}
};

enum class FeatureCategory {
    Linguistic,
    ObjectiveInterpretation,
    SubjectiveInterpretation,
    HumanExperience,
    InterviewContext,
};

inline const std::vector<std::pair<std::string, FeatureCategory>>& feature_category_table() {
    static const std::vector<std::pair<std::string, FeatureCategory>> table = {
        {"linguistic", FeatureCategory::Linguistic},
        {"objective_interpretation", FeatureCategory::ObjectiveInterpretation},
        {"subjective_interpretation", FeatureCategory::SubjectiveInterpretation},
        {"human_experience", FeatureCategory::HumanExperience},
        {"interview_context", FeatureCategory::InterviewContext},
    };
    return table;
}

inline FeatureCategory parse_feature_category(const std::string& name) {
    for (const auto& [key, value] : feature_category_table()) {
        if (key == name) return value;
    }
    throw ValidationError("unknown feature category: '" + name + "'");
}

inline std::string feature_category_name(FeatureCategory category) {
    for (const auto& [key, value] : feature_category_table()) {
        if (value == category) return key;
    }
    return "?";
}

struct FeatureSpec {
    std::string feature_id;  // snake_case, unique
    std::string display_name;
    FeatureCategory category = FeatureCategory::Linguistic;
    std::string prompt_text;
    std::string sources_note;
    std::string note;  // registry maintenance remarks
};

namespace detail {

// Every prompt must close by demanding a bare yes/no answer.
inline bool has_yes_no_closing(const std::string& prompt) {
    const std::string tail =
        to_lower(prompt.size() > 240 ? prompt.substr(prompt.size() - 240) : prompt);
    auto contains_word = [&](const std::string& w) {
        std::size_t pos = 0;
        while ((pos = tail.find(w, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !std::isalpha(static_cast<unsigned char>(tail[pos - 1]));
            const std::size_t end = pos + w.size();
            const bool right_ok =
                end >= tail.size() || !std::isalpha(static_cast<unsigned char>(tail[end]));
            if (left_ok && right_ok) return true;
            ++pos;
        }
        return false;
    };
    return contains_word("yes") && contains_word("no") && contains_word("only");
}

}  // namespace detail

class FeatureRegistry {
public:
    FeatureRegistry() = default;

    explicit FeatureRegistry(std::vector<FeatureSpec> specs) : specs_(std::move(specs)) {
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const FeatureSpec& spec = specs_[i];
            if (spec.feature_id.empty()) throw ValidationError("feature with empty id");
            if (!index_.emplace(spec.feature_id, i).second) {
                throw ValidationError("duplicate feature_id in registry: " + spec.feature_id);
            }
            if (spec.prompt_text.empty()) {
                throw ValidationError("feature '" + spec.feature_id + "' has empty prompt");
            }
            if (!detail::has_yes_no_closing(spec.prompt_text)) {
                throw ValidationError("feature '" + spec.feature_id +
                                      "' prompt does not end with a yes/no-only instruction");
            }
        }
        if (specs_.empty()) throw ValidationError("feature registry is empty");
    }

    static FeatureRegistry from_json(const json& array) {
        if (!array.is_array()) throw ValidationError("feature registry must be a JSON array");
        std::vector<FeatureSpec> specs;
        specs.reserve(array.size());
        for (const json& item : array) {
            FeatureSpec spec;
            spec.feature_id = item.at("feature_id").get<std::string>();
            spec.display_name = item.at("display_name").get<std::string>();
            spec.category = parse_feature_category(item.at("category").get<std::string>());
            spec.prompt_text = item.at("prompt_text").get<std::string>();
            spec.sources_note = item.value("sources_note", std::string{});
            spec.note = item.value("note", std::string{});
            specs.push_back(std::move(spec));
        }
        return FeatureRegistry(std::move(specs));
    }

    static FeatureRegistry load(const fs::path& path) {
        return from_json(json::parse(read_file(path)));
    }

    const FeatureSpec& get(const std::string& feature_id) const {
        auto it = index_.find(feature_id);
        if (it == index_.end()) throw UnknownFeatureError(feature_id);
        return specs_[it->second];
    }

    bool contains(const std::string& feature_id) const { return index_.count(feature_id) > 0; }
    std::size_t size() const { return specs_.size(); }
    const std::vector<FeatureSpec>& specs() const { return specs_; }

    std::size_t category_count(FeatureCategory category) const {
        return static_cast<std::size_t>(
            std::count_if(specs_.begin(), specs_.end(),
                          [&](const FeatureSpec& s) { return s.category == category; }));
    }

    FeatureRegistry subset(const std::vector<std::string>& feature_ids) const {
        std::vector<FeatureSpec> specs;
        for (const std::string& id : feature_ids) specs.push_back(get(id));
        return FeatureRegistry(std::move(specs));
    }

private:
    std::vector<FeatureSpec> specs_;
    std::map<std::string, std::size_t> index_;
};

// Delimiter between prompt and transcript body; occurrences inside the
// transcript are escaped with a leading backslash.
inline constexpr const char* kTranscriptDelimiter = "---TRANSCRIPT---";

inline std::string escape_delimiter(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    const std::string marker = kTranscriptDelimiter;
    while (true) {
        const std::size_t hit = text.find(marker, pos);
        if (hit == std::string::npos) {
            out += text.substr(pos);
            return out;
        }
        out += text.substr(pos, hit - pos);
        out.push_back('\\');
        out += marker;
        pos = hit + marker.size();
    }
}

// Byte-deterministic prompt assembly.
inline std::string render_prompt(const FeatureSpec& feature, const Transcript& transcript) {
    if (transcript.cleaned_text.empty()) {
        throw EmptyTranscriptError("render_prompt: transcript '" + transcript.transcript_id +
                                   "' has empty cleaned_text");
    }
    std::string out = feature.prompt_text;
    out.push_back('\n');
    out += kTranscriptDelimiter;
    out.push_back('\n');
    out += escape_delimiter(transcript.cleaned_text);
    out.push_back('\n');
    return out;
}

inline std::string render_prompt(const std::string& instruction_text, const Transcript& transcript) {
    FeatureSpec pseudo;
    pseudo.feature_id = "__instruction__";
    pseudo.prompt_text = instruction_text;
    return render_prompt(pseudo, transcript);
}

struct CellProvenance {
    std::string annotator_id;
    std::string model_name;
    std::optional<double> temperature;  // decoding setting, when one was sent
    std::uint64_t prompt_hash = 0;
    std::string raw_response;
    std::int64_t timestamp = 0;
};

constexpr std::int8_t kMissingCell = -1;

// Dense transcripts x features table of {0,1} with optional per-cell
// provenance. Cells start missing and are filled by annotation.
class AnnotationMatrix {
public:
    AnnotationMatrix() = default;

    AnnotationMatrix(std::vector<std::string> transcript_ids, std::vector<std::string> feature_ids)
        : transcript_ids_(std::move(transcript_ids)),
          feature_ids_(std::move(feature_ids)),
          values_(transcript_ids_.size() * feature_ids_.size(), kMissingCell),
          provenance_(transcript_ids_.size() * feature_ids_.size()) {
        for (std::size_t i = 0; i < transcript_ids_.size(); ++i) {
            if (!row_index_.emplace(transcript_ids_[i], i).second) {
                throw DuplicateIdError(transcript_ids_[i]);
            }
        }
        for (std::size_t j = 0; j < feature_ids_.size(); ++j) {
            if (!col_index_.emplace(feature_ids_[j], j).second) {
                throw ValidationError("duplicate feature_id in matrix: " + feature_ids_[j]);
            }
        }
    }

    const std::vector<std::string>& transcript_ids() const { return transcript_ids_; }
    const std::vector<std::string>& feature_ids() const { return feature_ids_; }
    std::size_t rows() const { return transcript_ids_.size(); }
    std::size_t cols() const { return feature_ids_.size(); }

    std::size_t row_of(const std::string& transcript_id) const {
        auto it = row_index_.find(transcript_id);
        if (it == row_index_.end()) throw ValidationError("unknown transcript: " + transcript_id);
        return it->second;
    }
    std::size_t col_of(const std::string& feature_id) const {
        auto it = col_index_.find(feature_id);
        if (it == col_index_.end()) throw UnknownFeatureError(feature_id);
        return it->second;
    }

    std::int8_t at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
    bool is_missing(std::size_t row, std::size_t col) const { return at(row, col) == kMissingCell; }

    void set(const std::string& transcript_id, const std::string& feature_id, int value,
             CellProvenance provenance = {}) {
        if (value != 0 && value != 1) {
            throw ValidationError("annotation value must be 0 or 1, got " + std::to_string(value));
        }
        const std::size_t idx = row_of(transcript_id) * cols() + col_of(feature_id);
        values_[idx] = static_cast<std::int8_t>(value);
        provenance_[idx] = std::move(provenance);
    }

    void mark_missing(const std::string& transcript_id, const std::string& feature_id) {
        const std::size_t idx = row_of(transcript_id) * cols() + col_of(feature_id);
        values_[idx] = kMissingCell;
        provenance_[idx] = CellProvenance{};
    }

    const CellProvenance& provenance_at(std::size_t row, std::size_t col) const {
        return provenance_[row * cols() + col];
    }

    std::size_t filled_cells() const {
        return static_cast<std::size_t>(
            std::count_if(values_.begin(), values_.end(),
                          [](std::int8_t v) { return v != kMissingCell; }));
    }

    bool complete() const { return filled_cells() == values_.size(); }

    std::vector<std::pair<std::string, std::string>> missing_cells() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (std::size_t i = 0; i < rows(); ++i) {
            for (std::size_t j = 0; j < cols(); ++j) {
                if (is_missing(i, j)) out.emplace_back(transcript_ids_[i], feature_ids_[j]);
            }
        }
        return out;
    }

    // {0,1} column with missing cells dropped; aligned_rows gets row indices.
    std::vector<int> column_values(const std::string& feature_id,
                                   std::vector<std::size_t>* aligned_rows = nullptr) const {
        const std::size_t col = col_of(feature_id);
        std::vector<int> out;
        for (std::size_t i = 0; i < rows(); ++i) {
            const std::int8_t v = at(i, col);
            if (v == kMissingCell) continue;
            out.push_back(v);
            if (aligned_rows) aligned_rows->push_back(i);
        }
        return out;
    }

    // CSV with header "transcript_id,<feature ids...>"; cells 0/1/empty.
    std::string to_csv() const {
        std::string out = "transcript_id";
        for (const std::string& f : feature_ids_) {
            out.push_back(',');
            out += f;
        }
        out.push_back('\n');
        for (std::size_t i = 0; i < rows(); ++i) {
            out += transcript_ids_[i];
            for (std::size_t j = 0; j < cols(); ++j) {
                out.push_back(',');
                const std::int8_t v = at(i, j);
                if (v != kMissingCell) out.push_back(v ? '1' : '0');
            }
            out.push_back('\n');
        }
        return out;
    }

    static AnnotationMatrix from_csv(const std::string& csv) {
        const std::vector<std::string> lines = split_lines(csv);
        if (lines.empty()) throw ValidationError("annotation CSV is empty");
        std::vector<std::string> header = split(lines[0], ',');
        if (header.empty() || header[0] != "transcript_id") {
            throw ValidationError("annotation CSV header must start with 'transcript_id'");
        }
        std::vector<std::string> feature_ids(header.begin() + 1, header.end());
        std::vector<std::string> transcript_ids;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            transcript_ids.push_back(split(lines[i], ',')[0]);
        }
        AnnotationMatrix matrix(std::move(transcript_ids), std::move(feature_ids));
        std::size_t row = 0;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            const std::vector<std::string> cells = split(lines[i], ',');
            if (cells.size() != matrix.cols() + 1) {
                throw ValidationError("annotation CSV row " + std::to_string(i + 1) +
                                      " has wrong cell count");
            }
            for (std::size_t j = 0; j < matrix.cols(); ++j) {
                const std::string& cell = cells[j + 1];
                if (cell.empty()) continue;
                if (cell != "0" && cell != "1") {
                    throw ValidationError("annotation CSV cell must be 0/1/empty, got '" + cell + "'");
                }
                matrix.values_[row * matrix.cols() + j] = cell == "1" ? 1 : 0;
            }
            ++row;
        }
        return matrix;
    }

    // Provenance sidecar: one JSON line per filled cell, row-major order.
    std::string provenance_jsonl() const {
        std::string out;
        for (std::size_t i = 0; i < rows(); ++i) {
            for (std::size_t j = 0; j < cols(); ++j) {
                if (is_missing(i, j)) continue;
                const CellProvenance& p = provenance_at(i, j);
                json line{{"transcript_id", transcript_ids_[i]},
                          {"feature_id", feature_ids_[j]},
                          {"value", static_cast<int>(at(i, j))},
                          {"annotator_id", p.annotator_id},
                          {"model", p.model_name},
                          {"temperature", p.temperature ? json(*p.temperature) : json(nullptr)},
                          {"prompt_hash", hash_hex(p.prompt_hash)},
                          {"raw_response", p.raw_response},
                          {"timestamp", p.timestamp}};
                out += line.dump();
                out.push_back('\n');
            }
        }
        return out;
    }

private:
    std::vector<std::string> transcript_ids_;
    std::vector<std::string> feature_ids_;
    std::vector<std::int8_t> values_;
    std::vector<CellProvenance> provenance_;
    std::map<std::string, std::size_t> row_index_;
    std::map<std::string, std::size_t> col_index_;
};

// Share of 1s among non-missing cells of one feature column.
inline double positive_rate(const AnnotationMatrix& matrix, const std::string& feature_id) {
    const std::size_t col = matrix.col_of(feature_id);
    std::size_t ones = 0, filled = 0;
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        const std::int8_t v = matrix.at(i, col);
        if (v == kMissingCell) continue;
        ++filled;
        ones += v;
    }
    if (filled == 0) {
        throw MissingDataError("positive_rate: feature '" + feature_id + "' has no filled cells");
    }
    return static_cast<double>(ones) / static_cast<double>(filled);
}

struct PruneResult {
    AnnotationMatrix matrix;
    std::vector<std::string> removed;  // sorted by feature_id
};

// Drops features whose positive rate falls below the threshold.
inline PruneResult prune_sparse(const AnnotationMatrix& matrix, double threshold = 0.05) {
    if (threshold < 0.0 || threshold >= 1.0) {
        throw ValidationError("sparsity threshold must lie in [0,1), got " +
                              format_double(threshold, 4));
    }
    std::vector<std::string> kept, removed;
    for (const std::string& f : matrix.feature_ids()) {
        if (positive_rate(matrix, f) < threshold) {
            removed.push_back(f);
        } else {
            kept.push_back(f);
        }
    }
    if (kept.empty()) throw AllFeaturesRemovedError(threshold);
    std::sort(removed.begin(), removed.end());

    AnnotationMatrix pruned(matrix.transcript_ids(), kept);
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        for (const std::string& f : kept) {
            const std::size_t col = matrix.col_of(f);
            if (matrix.is_missing(i, col)) continue;
            pruned.set(matrix.transcript_ids()[i], f, matrix.at(i, col),
                       matrix.provenance_at(i, col));
        }
    }
    return PruneResult{std::move(pruned), std::move(removed)};
}

}  // namespace perceptlens
