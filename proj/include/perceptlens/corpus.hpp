#pragma once

// Transcript ingestion: CHAT-style and JSON-lines corpora, participant-speech
// isolation, annotation cleanup, and diagnosis binarization.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perceptlens/common.hpp"

namespace perceptlens {

using json = nlohmann::json;

enum class DiagnosisLabel { HealthyControl, MCI, PossibleAD, ProbableAD, AD, Other };
enum class BinaryDiagnosis : int { Healthy = 0, Dementia = 1 };

struct EmptyTranscriptError : Error {
    explicit EmptyTranscriptError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct MalformedLineError : Error {
    explicit MalformedLineError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct DuplicateIdError : Error {
    explicit DuplicateIdError(const std::string& id)
        : Error(ExitCode::Validation, "duplicate transcript_id: " + id) {}
};
struct EmptyCorpusError : Error {
    explicit EmptyCorpusError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

inline const std::vector<std::pair<std::string, DiagnosisLabel>>& diagnosis_label_table() {
    static const std::vector<std::pair<std::string, DiagnosisLabel>> table = {
        {"Healthy Control", DiagnosisLabel::HealthyControl},
        {"MCI", DiagnosisLabel::MCI},
        {"Possible AD", DiagnosisLabel::PossibleAD},
        {"Probable AD", DiagnosisLabel::ProbableAD},
        {"AD", DiagnosisLabel::AD},
        {"Other", DiagnosisLabel::Other},
    };
    return table;
}

// Exactly six accepted label strings; anything else is a parse error.
inline DiagnosisLabel parse_diagnosis_label(const std::string& text) {
    for (const auto& [name, label] : diagnosis_label_table()) {
        if (text == name) return label;
    }
    throw ValidationError("unknown diagnosis label: '" + text + "'");
}

inline std::string diagnosis_label_name(DiagnosisLabel label) {
    for (const auto& [name, value] : diagnosis_label_table()) {
        if (value == label) return name;
    }
    return "?";
}

// Healthy iff HealthyControl; every other label collapses to Dementia.
inline BinaryDiagnosis binarize_diagnosis(DiagnosisLabel label) {
    return label == DiagnosisLabel::HealthyControl ? BinaryDiagnosis::Healthy
                                                   : BinaryDiagnosis::Dementia;
}

struct Transcript {
    std::string transcript_id;
    std::string participant_id;
    std::string raw_text;
    std::string cleaned_text;
    std::optional<BinaryDiagnosis> diagnosis;
};

struct SourceRecord {
    std::string path;
    std::string format;
    std::size_t records = 0;
};

struct Corpus {
    std::vector<Transcript> transcripts;
    std::vector<SourceRecord> source_manifest;

    const Transcript* find(const std::string& transcript_id) const {
        for (const auto& t : transcripts) {
            if (t.transcript_id == transcript_id) return &t;
        }
        return nullptr;
    }
};

namespace detail {

// Payload cleaning for one participant utterance line. Rules:
//  - drop NAK-delimited timing bullets and all control characters
//  - drop [...] code groups entirely
//  - drop '<', '>', '(', ')' but keep the words they wrap
//  - strip token-leading '&', '&-', '&+', '&=' (the fragment text stays)
//  - drop tokens starting with '+' (utterance terminator codes)
//  - collapse whitespace
inline std::string clean_utterance(std::string_view payload) {
    std::string stage;
    stage.reserve(payload.size());
    bool in_timing = false;
    int bracket_depth = 0;
    for (char ch : payload) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (c == 0x15) {  // CHAT timing bullet delimiter
            in_timing = !in_timing;
            continue;
        }
        if (in_timing) continue;
        if (c < 0x20 || c == 0x7F) {
            stage.push_back(' ');
            continue;
        }
        if (ch == '[') {
            ++bracket_depth;
            continue;
        }
        if (ch == ']') {
            if (bracket_depth > 0) --bracket_depth;
            continue;
        }
        if (bracket_depth > 0) continue;
        if (ch == '<' || ch == '>' || ch == '(' || ch == ')') continue;
        stage.push_back(ch);
    }

    std::string out;
    out.reserve(stage.size());
    for (std::string& token : split(stage, ' ')) {
        if (token.empty()) continue;
        if (token[0] == '+') continue;
        if (token[0] == '&') {
            std::size_t skip = 1;
            if (token.size() > 1 && (token[1] == '-' || token[1] == '+' || token[1] == '='))
                skip = 2;
            token.erase(0, skip);
            if (token.empty()) continue;
        }
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

}  // namespace detail

struct ChatParseOptions {
    bool strict = false;
    std::string participant_marker = "*PAR:";
    std::vector<std::string>* warnings = nullptr;  // lenient-mode skip notices
};

// Parses one CHAT-style document. Keeps participant tiers (and their
// continuation lines), ignores headers, dependent tiers and other speakers.
inline Transcript parse_chat(const std::string& raw, const ChatParseOptions& options = {}) {
    enum class Tier { None, Participant, Ignored };
    Tier current = Tier::None;
    std::vector<std::string> utterances;

    for (const std::string& line : split_lines(raw)) {
        if (line.empty()) {
            current = Tier::None;
            continue;
        }
        if (line[0] == '\t' || line[0] == ' ') {  // continuation of the previous tier
            if (current == Tier::Participant) utterances.push_back(detail::clean_utterance(line));
            continue;
        }
        if (line[0] == '@' || line[0] == '%') {
            current = Tier::Ignored;
            continue;
        }
        if (line[0] == '*') {
            const std::size_t colon = line.find(':');
            if (colon != std::string::npos) {
                const std::string marker = line.substr(0, colon + 1);
                if (marker == options.participant_marker) {
                    current = Tier::Participant;
                    utterances.push_back(detail::clean_utterance(line.substr(colon + 1)));
                } else {
                    current = Tier::Ignored;
                }
                continue;
            }
        }
        if (options.strict) {
            throw MalformedLineError("line has no recognizable speaker marker: '" + line + "'");
        }
        if (options.warnings) options.warnings->push_back("skipped unrecognized line: '" + line + "'");
        current = Tier::None;
    }

    std::string cleaned;
    for (const std::string& u : utterances) {
        if (u.empty()) continue;
        if (!cleaned.empty()) cleaned.push_back(' ');
        cleaned += u;
    }
    if (cleaned.empty()) {
        throw EmptyTranscriptError("no participant speech survives cleaning");
    }

    Transcript t;
    t.raw_text = raw;
    t.cleaned_text = cleaned;
    return t;
}

enum class CorpusFormat { Chat, Plain };

struct RecordIssue {
    std::string source;
    std::string reason;
};

struct LoadResult {
    Corpus corpus;
    std::vector<RecordIssue> rejected;
    std::vector<std::string> warnings;
};

namespace detail {

// Pitt-style file stems look like "018-2"; the participant is the prefix.
inline std::string participant_from_stem(const std::string& stem) {
    const std::size_t dash = stem.find('-');
    return dash == std::string::npos ? stem : stem.substr(0, dash);
}

inline Transcript transcript_from_json_record(const json& record, const std::string& source) {
    for (const char* key : {"transcript_id", "participant_id", "text"}) {
        if (!record.contains(key)) {
            throw ValidationError(source + ": record missing key '" + std::string(key) + "'");
        }
    }
    Transcript t;
    t.transcript_id = record.at("transcript_id").get<std::string>();
    t.participant_id = record.at("participant_id").get<std::string>();
    t.raw_text = record.at("text").get<std::string>();
    t.cleaned_text = clean_utterance(t.raw_text);
    if (t.cleaned_text.empty()) throw EmptyTranscriptError(source + ": text empty after cleaning");
    if (record.contains("diagnosis") && !record.at("diagnosis").is_null()) {
        t.diagnosis = binarize_diagnosis(parse_diagnosis_label(record.at("diagnosis").get<std::string>()));
    }
    return t;
}

}  // namespace detail

// One Transcript per input record; rejected records are reported with
// reasons, never silently dropped. Iteration order follows the inputs.
inline LoadResult load_corpus(const std::vector<fs::path>& paths, CorpusFormat mode,
                              bool strict = false) {
    LoadResult result;
    std::set<std::string> seen_ids;

    auto add = [&](Transcript t, const std::string& source) {
        if (seen_ids.count(t.transcript_id)) throw DuplicateIdError(t.transcript_id);
        seen_ids.insert(t.transcript_id);
        result.corpus.transcripts.push_back(std::move(t));
    };

    for (const fs::path& path : paths) {
        const std::string content = read_file(path);
        SourceRecord source{path.string(), mode == CorpusFormat::Chat ? "chat" : "plain", 0};

        if (mode == CorpusFormat::Chat) {
            try {
                ChatParseOptions options;
                options.strict = strict;
                options.warnings = &result.warnings;
                Transcript t = parse_chat(content, options);
                const std::string stem = path.stem().string();
                t.transcript_id = stem;
                t.participant_id = detail::participant_from_stem(stem);
                add(std::move(t), path.string());
                source.records = 1;
            } catch (const EmptyTranscriptError& e) {
                result.rejected.push_back({path.string(), e.what()});
            }
        } else {
            std::size_t line_no = 0;
            for (const std::string& line : split_lines(content)) {
                ++line_no;
                if (trim(line).empty()) continue;
                const std::string where = path.string() + ":" + std::to_string(line_no);
                try {
                    json record = json::parse(line, nullptr, true);
                    add(detail::transcript_from_json_record(record, where), where);
                    ++source.records;
                } catch (const DuplicateIdError&) {
                    throw;
                } catch (const json::exception& e) {
                    if (strict) throw ValidationError(where + ": " + e.what());
                    result.rejected.push_back({where, e.what()});
                } catch (const Error& e) {
                    if (strict && dynamic_cast<const EmptyTranscriptError*>(&e) == nullptr) throw;
                    result.rejected.push_back({where, e.what()});
                }
            }
        }
        result.corpus.source_manifest.push_back(std::move(source));
    }

    if (result.corpus.transcripts.empty()) {
        throw EmptyCorpusError("no transcripts loaded from " + std::to_string(paths.size()) +
                               " input path(s)");
    }
    return result;
}

inline json transcript_to_json(const Transcript& t) {
    json j{{"transcript_id", t.transcript_id},
           {"participant_id", t.participant_id},
           {"raw_text", t.raw_text},
           {"cleaned_text", t.cleaned_text}};
    if (t.diagnosis) {
        j["diagnosis"] = *t.diagnosis == BinaryDiagnosis::Dementia ? "Dementia" : "Healthy";
    } else {
        j["diagnosis"] = nullptr;
    }
    return j;
}

inline Transcript transcript_from_json(const json& j) {
    Transcript t;
    t.transcript_id = j.at("transcript_id").get<std::string>();
    t.participant_id = j.at("participant_id").get<std::string>();
    t.raw_text = j.at("raw_text").get<std::string>();
    t.cleaned_text = j.at("cleaned_text").get<std::string>();
    if (j.contains("diagnosis") && !j.at("diagnosis").is_null()) {
        const std::string d = j.at("diagnosis").get<std::string>();
        if (d == "Dementia") {
            t.diagnosis = BinaryDiagnosis::Dementia;
        } else if (d == "Healthy") {
            t.diagnosis = BinaryDiagnosis::Healthy;
        } else {
            throw ValidationError("unknown binary diagnosis: '" + d + "'");
        }
    }
    return t;
}

// JSON-lines, keys sorted; byte-deterministic for identical corpora.
inline std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const Transcript& t : corpus.transcripts) {
        out += transcript_to_json(t).dump();
        out.push_back('\n');
    }
    return out;
}

inline Corpus deserialize_corpus(const std::string& jsonl, const std::string& source = "corpus") {
    Corpus corpus;
    std::set<std::string> seen;
    for (const std::string& line : split_lines(jsonl)) {
        if (trim(line).empty()) continue;
        Transcript t = transcript_from_json(json::parse(line));
        if (seen.count(t.transcript_id)) throw DuplicateIdError(t.transcript_id);
        seen.insert(t.transcript_id);
        corpus.transcripts.push_back(std::move(t));
    }
    if (corpus.transcripts.empty()) throw EmptyCorpusError(source + " is empty");
    return corpus;
}

}  // namespace perceptlens
