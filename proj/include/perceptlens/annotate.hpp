#pragma once

// Annotator backends (remote chat endpoints and a scripted mock), strict
// yes/no and dementia/healthy response parsing, bounded retries with
// exponential backoff, an append-only response cache, and majority voting.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "perceptlens/agreement.hpp"
#include "perceptlens/common.hpp"
#include "perceptlens/corpus.hpp"
#include "perceptlens/features.hpp"

namespace perceptlens {

struct BackendError : Error {
    explicit BackendError(const std::string& what) : Error(ExitCode::BackendFailure, what) {}
};
struct UnparseableResponseError : Error {
    explicit UnparseableResponseError(const std::string& raw)
        : Error(ExitCode::BackendFailure, "unparseable annotator response: '" + raw + "'") {}
};
struct CacheCorruptError : Error {
    explicit CacheCorruptError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

struct BackendConfig {
    std::string backend_id;
    std::string endpoint_url;
    std::string model_name;
    int max_in_flight = 4;
    int max_retries = 3;
    double timeout_seconds = 60.0;
    std::optional<double> temperature;       // recorded in provenance when set
    double backoff_base_seconds = 0.5;       // 0 disables sleeping (tests)
    std::string mock_script;                 // non-empty selects the mock backend

    // Credentials come from the environment only, never from config files.
    std::string api_key_env() const {
        std::string name = "PERCEPTLENS_API_KEY_";
        for (char c : backend_id) {
            name.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
        return name;
    }
};

namespace detail {

inline bool is_strippable(char c) {
    static const std::string punct = "\"'`.,;:!?()[]{}<>*_~";
    return punct.find(c) != std::string::npos;
}

// trim -> strip surrounding punctuation/quotes -> lowercase
inline std::string normalize_response(const std::string& raw) {
    std::string s = trim(raw);
    std::size_t b = 0, e = s.size();
    while (b < e && is_strippable(s[b])) ++b;
    while (e > b && is_strippable(s[e - 1])) --e;
    return to_lower(trim(s.substr(b, e - b)));
}

}  // namespace detail

// "Yes." -> 1, " no " -> 0; anything else (including "I think yes") fails.
inline int parse_yes_no(const std::string& raw) {
    const std::string s = detail::normalize_response(raw);
    if (s == "yes") return 1;
    if (s == "no") return 0;
    throw UnparseableResponseError(raw);
}

// "Dementia" -> 1, "healthy" -> 0, same strictness.
inline int parse_perception(const std::string& raw) {
    const std::string s = detail::normalize_response(raw);
    if (s == "dementia") return 1;
    if (s == "healthy") return 0;
    throw UnparseableResponseError(raw);
}

struct BinaryAnnotation {
    std::string transcript_id;
    std::string feature_id;
    std::string annotator_id;
    int value = 0;
    std::string raw_response;
    std::int64_t timestamp = 0;
};

struct PerceptionVote {
    std::string transcript_id;
    std::string annotator_id;
    int label = 0;  // 0 healthy, 1 dementia
    std::string raw_response;
};

struct JudgmentSet {
    std::string transcript_id;
    std::vector<PerceptionVote> human_votes;
    std::vector<PerceptionVote> llm_votes;
    int human_majority = 0;
    int llm_majority = 0;
    std::optional<BinaryDiagnosis> clinical;
};

// Pseudo feature id used in cache keys and mock scripts for perception calls.
inline constexpr const char* kPerceptionFeatureId = "__perception__";

struct AnnotationRequest {
    std::string prompt;
    std::string transcript_id;
    std::string feature_id;  // kPerceptionFeatureId for perception
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual const BackendConfig& config() const = 0;
    virtual std::string complete(const AnnotationRequest& request) = 0;
};

// Scripted offline backend. Script file layout:
//   {
//     "default": {"mode": "fixed", "response": "yes"}
//            or  {"mode": "hash", "positive_rate": 0.3, "seed": 7,
//                 "labels": ["no", "yes"]},
//     "responses": {"<transcript_id>|<feature_id>": ["first", "second", ...]}
//   }
// Keyed sequences are consumed in order (last entry repeats); an empty
// sequence simulates a transport failure. Requests are counted.
class MockBackend : public Backend {
public:
    MockBackend(BackendConfig config, const json& script) : config_(std::move(config)) {
        if (script.contains("default")) {
            const json& d = script.at("default");
            const std::string mode = d.at("mode").get<std::string>();
            if (mode == "fixed") {
                default_fixed_ = d.at("response").get<std::string>();
            } else if (mode == "hash") {
                hash_mode_ = true;
                hash_rate_ = d.at("positive_rate").get<double>();
                hash_seed_ = d.value("seed", 0ull);
                if (d.contains("labels")) {
                    hash_labels_[0] = d.at("labels").at(0).get<std::string>();
                    hash_labels_[1] = d.at("labels").at(1).get<std::string>();
                }
            } else {
                throw ValidationError("mock script: unknown default mode '" + mode + "'");
            }
        }
        if (script.contains("responses")) {
            for (const auto& [key, value] : script.at("responses").items()) {
                std::vector<std::string> sequence;
                for (const json& r : value) sequence.push_back(r.get<std::string>());
                scripts_[key] = std::move(sequence);
            }
        }
    }

    static std::shared_ptr<MockBackend> from_file(BackendConfig config, const fs::path& script_path) {
        return std::make_shared<MockBackend>(std::move(config), json::parse(read_file(script_path)));
    }

    const BackendConfig& config() const override { return config_; }

    std::string complete(const AnnotationRequest& request) override {
        requests_.fetch_add(1, std::memory_order_relaxed);
        const std::string key = request.transcript_id + "|" + request.feature_id;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = scripts_.find(key);
            if (it != scripts_.end()) {
                const std::vector<std::string>& sequence = it->second;
                if (sequence.empty()) {
                    throw BackendError("mock transport failure for " + key);
                }
                std::size_t& cursor = cursors_[key];
                const std::string response = sequence[std::min(cursor, sequence.size() - 1)];
                ++cursor;
                return response;
            }
        }
        if (hash_mode_) {
            const std::uint64_t h = fnv1a64(key + "#" + std::to_string(hash_seed_));
            const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;
            return unit < hash_rate_ ? hash_labels_[1] : hash_labels_[0];
        }
        if (!default_fixed_.empty()) return default_fixed_;
        throw BackendError("mock script has no entry for " + key);
    }

    std::size_t request_count() const { return requests_.load(std::memory_order_relaxed); }

private:
    BackendConfig config_;
    std::map<std::string, std::vector<std::string>> scripts_;
    std::map<std::string, std::size_t> cursors_;
    std::mutex mutex_;
    std::string default_fixed_;
    bool hash_mode_ = false;
    double hash_rate_ = 0.0;
    std::uint64_t hash_seed_ = 0;
    std::string hash_labels_[2] = {"no", "yes"};
    std::atomic<std::size_t> requests_{0};
};

// Append-only JSON-lines cache keyed by backend, model, feature, transcript
// and a stable 64-bit prompt hash.
class AnnotationCache {
public:
    struct Key {
        std::string backend_id;
        std::string model_name;
        std::string feature_id;
        std::string transcript_id;
        std::uint64_t prompt_hash = 0;

        bool operator<(const Key& o) const {
            return std::tie(backend_id, model_name, feature_id, transcript_id, prompt_hash) <
                   std::tie(o.backend_id, o.model_name, o.feature_id, o.transcript_id, o.prompt_hash);
        }
    };

    struct Entry {
        int value = 0;
        std::string raw_response;
        std::string annotator_id;
        std::int64_t timestamp = 0;
    };

    explicit AnnotationCache(fs::path path) : path_(std::move(path)) {
        if (fs::exists(path_)) {
            std::size_t line_no = 0;
            for (const std::string& line : split_lines(read_file(path_))) {
                ++line_no;
                if (trim(line).empty()) continue;
                try {
                    const json j = json::parse(line);
                    Key key{j.at("backend_id").get<std::string>(), j.at("model").get<std::string>(),
                            j.at("feature_id").get<std::string>(),
                            j.at("transcript_id").get<std::string>(),
                            std::stoull(j.at("prompt_hash").get<std::string>(), nullptr, 16)};
                    Entry entry{j.at("value").get<int>(), j.at("raw_response").get<std::string>(),
                                j.at("annotator_id").get<std::string>(),
                                j.at("timestamp").get<std::int64_t>()};
                    entries_[key] = std::move(entry);
                } catch (const std::exception& e) {
                    throw CacheCorruptError(path_.string() + ":" + std::to_string(line_no) + ": " +
                                            e.what());
                }
            }
        }
    }

    std::optional<Entry> lookup(const Key& key) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void append(const Key& key, const Entry& entry) {
        std::lock_guard<std::mutex> lock(mutex_);
        if (entries_.count(key)) return;
        entries_[key] = entry;
        json line{{"backend_id", key.backend_id},    {"model", key.model_name},
                  {"feature_id", key.feature_id},    {"transcript_id", key.transcript_id},
                  {"prompt_hash", hash_hex(key.prompt_hash)}, {"value", entry.value},
                  {"raw_response", entry.raw_response},       {"annotator_id", entry.annotator_id},
                  {"timestamp", entry.timestamp}};
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot append to cache: " + path_.string());
        out << line.dump() << '\n';
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return entries_.size();
    }

private:
    fs::path path_;
    std::map<Key, Entry> entries_;
    mutable std::mutex mutex_;
};

struct AnnotateOptions {
    bool deterministic = false;  // zero timestamps for byte-stable artifacts
};

namespace detail {

inline std::int64_t now_or_zero(bool deterministic) {
    return deterministic ? 0 : static_cast<std::int64_t>(std::time(nullptr));
}

struct AttemptResult {
    int value = 0;
    std::string raw_response;
};

// Bounded attempts with exponential backoff; retries both transport errors
// and unparseable responses.
template <typename Parser>
AttemptResult attempt_with_retries(Backend& backend, const AnnotationRequest& request,
                                   Parser parse) {
    const BackendConfig& config = backend.config();
    const int attempts = config.max_retries + 1;
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0 && config.backoff_base_seconds > 0.0) {
            const double delay = config.backoff_base_seconds * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        try {
            const std::string raw = backend.complete(request);
            return AttemptResult{parse(raw), raw};
        } catch (const UnparseableResponseError& e) {
            last_error = e.what();
        } catch (const BackendError& e) {
            last_error = e.what();
        }
    }
    throw BackendError("backend '" + config.backend_id + "' failed after " +
                       std::to_string(attempts) + " attempt(s): " + last_error);
}

}  // namespace detail

// One feature, one transcript, one request (plus retries); cache-first.
inline BinaryAnnotation annotate_feature(const Transcript& transcript, const FeatureSpec& feature,
                                         Backend& backend, AnnotationCache* cache = nullptr,
                                         const AnnotateOptions& options = {}) {
    const std::string prompt = render_prompt(feature, transcript);
    const AnnotationCache::Key key{backend.config().backend_id, backend.config().model_name,
                                   feature.feature_id, transcript.transcript_id, fnv1a64(prompt)};
    if (cache) {
        if (auto hit = cache->lookup(key)) {
            return BinaryAnnotation{transcript.transcript_id, feature.feature_id,
                                    hit->annotator_id,        hit->value,
                                    hit->raw_response,        hit->timestamp};
        }
    }
    const AnnotationRequest request{prompt, transcript.transcript_id, feature.feature_id};
    const auto result = detail::attempt_with_retries(backend, request,
                                                     [](const std::string& raw) { return parse_yes_no(raw); });
    BinaryAnnotation annotation{transcript.transcript_id,
                                feature.feature_id,
                                backend.config().backend_id,
                                result.value,
                                result.raw_response,
                                detail::now_or_zero(options.deterministic)};
    if (cache) {
        cache->append(key, AnnotationCache::Entry{annotation.value, annotation.raw_response,
                                                  annotation.annotator_id, annotation.timestamp});
    }
    return annotation;
}

struct CellFailure {
    std::string transcript_id;
    std::string feature_id;
    std::string reason;
};

struct AnnotateCorpusResult {
    AnnotationMatrix matrix;
    std::vector<CellFailure> failures;
    std::size_t cells_attempted = 0;
};

// Fills a complete transcripts x features matrix. Cells that still fail after
// retries are marked missing and listed in the failure report; the run aborts
// only when every request fails. Ordering is canonical (sorted transcript,
// then sorted feature), independent of scheduling; cache lines are appended
// in that same canonical order after the workers drain the task queue.
inline AnnotateCorpusResult annotate_corpus(const Corpus& corpus, const FeatureRegistry& registry,
                                            Backend& backend, AnnotationCache* cache = nullptr,
                                            const AnnotateOptions& options = {}) {
    std::vector<std::string> transcript_ids;
    for (const Transcript& t : corpus.transcripts) transcript_ids.push_back(t.transcript_id);
    std::sort(transcript_ids.begin(), transcript_ids.end());
    std::vector<std::string> feature_ids;
    for (const FeatureSpec& f : registry.specs()) feature_ids.push_back(f.feature_id);
    std::sort(feature_ids.begin(), feature_ids.end());

    struct Task {
        const Transcript* transcript;
        const FeatureSpec* feature;
        AnnotationCache::Key key;
        std::string prompt;
        bool cached = false;
        bool ok = false;
        detail::AttemptResult result;
        AnnotationCache::Entry cached_entry;
        std::string error;
    };

    std::vector<Task> tasks;
    tasks.reserve(transcript_ids.size() * feature_ids.size());
    for (const std::string& tid : transcript_ids) {
        const Transcript* transcript = corpus.find(tid);
        for (const std::string& fid : feature_ids) {
            Task task;
            task.transcript = transcript;
            task.feature = &registry.get(fid);
            task.prompt = render_prompt(*task.feature, *transcript);
            task.key = {backend.config().backend_id, backend.config().model_name, fid, tid,
                        fnv1a64(task.prompt)};
            tasks.push_back(std::move(task));
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            Task& task = tasks[i];
            if (cache) {
                if (auto hit = cache->lookup(task.key)) {
                    task.cached = true;
                    task.ok = true;
                    task.cached_entry = *hit;
                    continue;
                }
            }
            try {
                const AnnotationRequest request{task.prompt, task.transcript->transcript_id,
                                                task.feature->feature_id};
                task.result = detail::attempt_with_retries(
                    backend, request, [](const std::string& raw) { return parse_yes_no(raw); });
                task.ok = true;
            } catch (const std::exception& e) {
                task.error = e.what();
            }
        }
    };

    const int thread_count =
        std::max(1, std::min<int>(backend.config().max_in_flight, static_cast<int>(tasks.size())));
    std::vector<std::thread> threads;
    for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();

    AnnotateCorpusResult out{AnnotationMatrix(transcript_ids, feature_ids), {}, tasks.size()};
    std::size_t fresh_failures = 0, fresh_total = 0;
    for (Task& task : tasks) {
        if (task.ok && task.cached) {
            out.matrix.set(task.transcript->transcript_id, task.feature->feature_id,
                           task.cached_entry.value,
                           CellProvenance{task.cached_entry.annotator_id,
                                          backend.config().model_name,
                                          backend.config().temperature, task.key.prompt_hash,
                                          task.cached_entry.raw_response,
                                          task.cached_entry.timestamp});
            continue;
        }
        ++fresh_total;
        if (!task.ok) {
            ++fresh_failures;
            out.failures.push_back(
                {task.transcript->transcript_id, task.feature->feature_id, task.error});
            continue;
        }
        const std::int64_t stamp = detail::now_or_zero(options.deterministic);
        out.matrix.set(task.transcript->transcript_id, task.feature->feature_id, task.result.value,
                       CellProvenance{backend.config().backend_id, backend.config().model_name,
                                      backend.config().temperature, task.key.prompt_hash,
                                      task.result.raw_response, stamp});
        if (cache) {
            cache->append(task.key,
                          AnnotationCache::Entry{task.result.value, task.result.raw_response,
                                                 backend.config().backend_id, stamp});
        }
    }
    if (fresh_total > 0 && fresh_failures == fresh_total) {
        throw BackendError("backend '" + backend.config().backend_id + "': all " +
                           std::to_string(fresh_total) + " requests failed");
    }
    return out;
}

struct ElicitResult {
    std::vector<PerceptionVote> votes;  // canonical transcript order
    std::vector<CellFailure> failures;
};

// One perception judgment per transcript under the shared perception prompt.
inline ElicitResult elicit_perception(const Corpus& corpus, Backend& backend,
                                      const std::string& perception_prompt,
                                      AnnotationCache* cache = nullptr,
                                      const AnnotateOptions& options = {}) {
    std::vector<std::string> transcript_ids;
    for (const Transcript& t : corpus.transcripts) transcript_ids.push_back(t.transcript_id);
    std::sort(transcript_ids.begin(), transcript_ids.end());

    ElicitResult out;
    for (const std::string& tid : transcript_ids) {
        const Transcript* transcript = corpus.find(tid);
        const std::string prompt = render_prompt(perception_prompt, *transcript);
        const AnnotationCache::Key key{backend.config().backend_id, backend.config().model_name,
                                       kPerceptionFeatureId, tid, fnv1a64(prompt)};
        if (cache) {
            if (auto hit = cache->lookup(key)) {
                out.votes.push_back(PerceptionVote{tid, hit->annotator_id, hit->value, hit->raw_response});
                continue;
            }
        }
        try {
            const AnnotationRequest request{prompt, tid, kPerceptionFeatureId};
            const auto result = detail::attempt_with_retries(
                backend, request, [](const std::string& raw) { return parse_perception(raw); });
            out.votes.push_back(PerceptionVote{tid, backend.config().backend_id, result.value,
                                               result.raw_response});
            if (cache) {
                cache->append(key, AnnotationCache::Entry{result.value, result.raw_response,
                                                          backend.config().backend_id,
                                                          detail::now_or_zero(options.deterministic)});
            }
        } catch (const Error& e) {
            out.failures.push_back({tid, kPerceptionFeatureId, e.what()});
        }
    }
    if (out.votes.empty() && !out.failures.empty()) {
        throw BackendError("backend '" + backend.config().backend_id +
                           "': every perception request failed");
    }
    return out;
}

inline json judgment_to_json(const JudgmentSet& judgment) {
    auto votes_to_json = [](const std::vector<PerceptionVote>& votes) {
        json arr = json::array();
        for (const PerceptionVote& v : votes) {
            arr.push_back({{"annotator_id", v.annotator_id},
                           {"label", v.label},
                           {"raw_response", v.raw_response}});
        }
        return arr;
    };
    json j{{"transcript_id", judgment.transcript_id},
           {"human_votes", votes_to_json(judgment.human_votes)},
           {"llm_votes", votes_to_json(judgment.llm_votes)},
           {"human_majority", judgment.human_majority},
           {"llm_majority", judgment.llm_majority}};
    if (judgment.clinical) {
        j["clinical"] = static_cast<int>(*judgment.clinical);
    } else {
        j["clinical"] = nullptr;
    }
    return j;
}

inline JudgmentSet judgment_from_json(const json& j) {
    auto votes_from_json = [&](const json& arr, const std::string& transcript_id) {
        std::vector<PerceptionVote> votes;
        for (const json& v : arr) {
            votes.push_back(PerceptionVote{transcript_id, v.at("annotator_id").get<std::string>(),
                                           v.at("label").get<int>(),
                                           v.at("raw_response").get<std::string>()});
        }
        return votes;
    };
    JudgmentSet judgment;
    judgment.transcript_id = j.at("transcript_id").get<std::string>();
    judgment.human_votes = votes_from_json(j.at("human_votes"), judgment.transcript_id);
    judgment.llm_votes = votes_from_json(j.at("llm_votes"), judgment.transcript_id);
    judgment.human_majority = j.at("human_majority").get<int>();
    judgment.llm_majority = j.at("llm_majority").get<int>();
    if (!j.at("clinical").is_null()) {
        judgment.clinical = j.at("clinical").get<int>() == 1 ? BinaryDiagnosis::Dementia
                                                             : BinaryDiagnosis::Healthy;
    }
    return judgment;
}

}  // namespace perceptlens
