#pragma once

// Pipeline orchestration: run configuration, stage execution with a manifest
// of input/output hashes, and report assembly. Stage artifacts are plain
// JSON/JSON-lines/CSV files in the output directory.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perceptlens/agreement.hpp"
#include "perceptlens/analysis.hpp"
#include "perceptlens/annotate.hpp"
#include "perceptlens/common.hpp"
#include "perceptlens/corpus.hpp"
#include "perceptlens/features.hpp"
#include "perceptlens/http_backend.hpp"
#include "perceptlens/logit.hpp"
#include "perceptlens/synthetic.hpp"

namespace perceptlens {

struct Thresholds {
    double sparsity = 0.05;
    double alpha = 0.05;
    double epsilon = 0.1;
};

struct RunConfig {
    std::vector<fs::path> corpus_paths;
    CorpusFormat corpus_format = CorpusFormat::Plain;
    fs::path registry_path = "data/feature_registry.json";
    fs::path perception_prompt_path = "data/perception_prompt.txt";
    std::vector<BackendConfig> backends;
    std::string annotation_backend;          // backend_id used for feature labeling
    std::optional<fs::path> human_panel;     // perception panel CSV
    std::optional<fs::path> feature_panel;   // alternative-annotator panel CSV
    Thresholds thresholds;
    TieMode tie = TieMode::Error;
    AlignmentMetric alignment = AlignmentMetric::Accuracy;
    StepwiseOptions::Direction direction = StepwiseOptions::Direction::Backward;
    std::uint64_t seed = 0;
    fs::path out_dir = "out";
    fs::path cache_dir;  // defaults to out_dir / "cache"
    bool strict = false;
    bool deterministic = false;

    fs::path cache_path(const std::string& backend_id) const {
        const fs::path dir = cache_dir.empty() ? out_dir / "cache" : cache_dir;
        return dir / (backend_id + ".jsonl");
    }

    const BackendConfig& backend(const std::string& backend_id) const {
        for (const BackendConfig& b : backends) {
            if (b.backend_id == backend_id) return b;
        }
        throw ValidationError("no backend configured with id '" + backend_id + "'");
    }

    static RunConfig from_json(const json& j, const fs::path& base_dir = ".") {
        RunConfig config;
        auto resolve = [&](const std::string& p) {
            const fs::path path(p);
            return path.is_absolute() ? path : base_dir / path;
        };
        if (j.contains("corpus")) {
            const json& c = j.at("corpus");
            for (const json& p : c.at("paths")) config.corpus_paths.push_back(resolve(p.get<std::string>()));
            const std::string mode = c.value("mode", "plain");
            if (mode == "chat") {
                config.corpus_format = CorpusFormat::Chat;
            } else if (mode == "plain") {
                config.corpus_format = CorpusFormat::Plain;
            } else {
                throw ValidationError("corpus mode must be chat|plain, got '" + mode + "'");
            }
        }
        if (j.contains("registry")) config.registry_path = resolve(j.at("registry").get<std::string>());
        if (j.contains("perception_prompt")) {
            config.perception_prompt_path = resolve(j.at("perception_prompt").get<std::string>());
        }
        if (j.contains("backends")) {
            for (const json& b : j.at("backends")) {
                BackendConfig backend;
                backend.backend_id = b.at("backend_id").get<std::string>();
                backend.endpoint_url = b.value("endpoint_url", std::string{});
                backend.model_name = b.value("model_name", backend.backend_id);
                backend.max_in_flight = b.value("max_in_flight", 4);
                backend.max_retries = b.value("max_retries", 3);
                backend.timeout_seconds = b.value("timeout_seconds", 60.0);
                if (b.contains("temperature") && !b.at("temperature").is_null()) {
                    backend.temperature = b.at("temperature").get<double>();
                }
                backend.backoff_base_seconds = b.value("backoff_base_seconds", 0.5);
                if (b.contains("mock_script")) {
                    backend.mock_script = resolve(b.at("mock_script").get<std::string>()).string();
                }
                config.backends.push_back(std::move(backend));
            }
        }
        config.annotation_backend = j.value("annotation_backend", std::string{});
        if (j.contains("human_panel")) config.human_panel = resolve(j.at("human_panel").get<std::string>());
        if (j.contains("feature_panel")) {
            config.feature_panel = resolve(j.at("feature_panel").get<std::string>());
        }
        if (j.contains("thresholds")) {
            const json& t = j.at("thresholds");
            config.thresholds.sparsity = t.value("sparsity", 0.05);
            config.thresholds.alpha = t.value("alpha", 0.05);
            config.thresholds.epsilon = t.value("epsilon", 0.1);
        }
        if (j.contains("tie")) config.tie = parse_tie_mode(j.at("tie").get<std::string>());
        if (j.contains("alignment")) {
            config.alignment = parse_alignment_metric(j.at("alignment").get<std::string>());
        }
        if (j.contains("direction")) {
            const std::string d = j.at("direction").get<std::string>();
            if (d == "forward") {
                config.direction = StepwiseOptions::Direction::Forward;
            } else if (d == "backward") {
                config.direction = StepwiseOptions::Direction::Backward;
            } else {
                throw ValidationError("direction must be backward|forward, got '" + d + "'");
            }
        }
        config.seed = j.value("seed", 0ull);
        if (j.contains("out")) config.out_dir = resolve(j.at("out").get<std::string>());
        if (j.contains("cache_dir")) config.cache_dir = resolve(j.at("cache_dir").get<std::string>());
        config.strict = j.value("strict", false);
        config.deterministic = j.value("deterministic", false);
        return config;
    }

    static RunConfig load(const fs::path& path) {
        return from_json(json::parse(read_file(path)), path.has_parent_path() ? path.parent_path() : ".");
    }

    void validate_paths() const {
        for (const fs::path& p : corpus_paths) {
            if (!fs::exists(p)) throw ValidationError("corpus path does not exist: " + p.string());
        }
        if (!fs::exists(registry_path)) {
            throw ValidationError("registry path does not exist: " + registry_path.string());
        }
        if (human_panel && !fs::exists(*human_panel)) {
            throw ValidationError("human panel path does not exist: " + human_panel->string());
        }
        if (feature_panel && !fs::exists(*feature_panel)) {
            throw ValidationError("feature panel path does not exist: " + feature_panel->string());
        }
        if (thresholds.sparsity < 0.0 || thresholds.sparsity >= 1.0) {
            throw ValidationError("sparsity threshold out of range [0,1)");
        }
        if (thresholds.alpha <= 0.0 || thresholds.alpha > 1.0) {
            throw ValidationError("alpha out of range (0,1]");
        }
        if (thresholds.epsilon < 0.0 || thresholds.epsilon > 1.0) {
            throw ValidationError("epsilon out of range [0,1]");
        }
    }
};

// Stage artifact filenames.
namespace artifacts {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kIngestSummary = "ingest_summary.json";
inline constexpr const char* kAnnotations = "annotations.csv";
inline constexpr const char* kProvenance = "annotations_provenance.jsonl";
inline constexpr const char* kAnnotateFailures = "annotate_failures.json";
inline constexpr const char* kPerceptionVotes = "perception_votes.jsonl";
inline constexpr const char* kJudgments = "judgments.jsonl";
inline constexpr const char* kVoteSummary = "vote_summary.json";
inline constexpr const char* kKappa = "agreement_kappa.json";
inline constexpr const char* kKappaTable = "agreement_kappa.txt";
inline constexpr const char* kAltTest = "alt_test.json";
inline constexpr const char* kAltTestTable = "alt_test.txt";
inline constexpr const char* kConfusion = "confusion.json";
inline constexpr const char* kVenn = "venn.json";
inline constexpr const char* kCorrelationsJson = "correlations.json";
inline constexpr const char* kCorrelationsCsv = "correlations.csv";
inline constexpr const char* kReportMd = "report.md";
inline constexpr const char* kReportJson = "report.json";
inline std::string fit_json(const std::string& target) { return "fit_" + target + ".json"; }
inline std::string fit_csv(const std::string& target) { return "fit_" + target + ".csv"; }
inline std::string misperception(const std::string& focal) {
    return "misperception_" + focal + ".json";
}
inline std::string cv_json(const std::string& target) { return "cv_" + target + ".json"; }
}  // namespace artifacts

// One manifest line per stage (stage, input hashes, output hashes,
// timestamp), rewritten in stage order so re-runs stay diffable and every
// output file is referenced exactly once.
class Manifest {
public:
    explicit Manifest(fs::path out_dir)
        : out_dir_(std::move(out_dir)), path_(out_dir_ / "manifest.jsonl") {
        if (fs::exists(path_)) {
            for (const std::string& line : split_lines(read_file(path_))) {
                if (trim(line).empty()) continue;
                const json j = json::parse(line);
                entries_[j.at("stage").get<std::string>()] = j;
            }
        }
    }

    void record(const std::string& stage, const std::vector<fs::path>& inputs,
                const std::vector<fs::path>& outputs, bool deterministic) {
        json entry;
        entry["stage"] = stage;
        entry["inputs"] = hash_map(inputs);
        entry["outputs"] = hash_map(outputs);
        entry["timestamp"] = deterministic ? 0 : static_cast<std::int64_t>(std::time(nullptr));
        entries_[stage] = std::move(entry);
        rewrite();
    }

    const std::map<std::string, json>& entries() const { return entries_; }

private:
    json hash_map(const std::vector<fs::path>& paths) const {
        json out = json::object();
        for (const fs::path& p : paths) {
            out[display(p)] = hash_hex(fnv1a64(read_file(p)));
        }
        return out;
    }

    // paths under the output directory are recorded relative to it
    std::string display(const fs::path& p) const {
        const fs::path abs = fs::absolute(p).lexically_normal();
        const fs::path base = fs::absolute(out_dir_).lexically_normal();
        const fs::path rel = abs.lexically_relative(base);
        if (!rel.empty() && rel.native().rfind("..", 0) != 0) return rel.generic_string();
        return p.generic_string();
    }

    void rewrite() {
        std::string out;
        for (const auto& [stage, entry] : entries_) out += entry.dump() + "\n";
        write_file(path_, out);
    }

    fs::path out_dir_;
    fs::path path_;
    std::map<std::string, json> entries_;
};

struct PanelCsv {
    std::vector<std::string> item_ids;
    std::vector<std::string> annotator_ids;
    std::vector<std::vector<int>> labels;  // [item][annotator]
};

// rows = items, columns = annotators, cells 0/1
inline PanelCsv load_panel_csv(const fs::path& path) {
    PanelCsv panel;
    const std::vector<std::string> lines = split_lines(read_file(path));
    if (lines.size() < 2) throw ValidationError("panel CSV has no data rows: " + path.string());
    const std::vector<std::string> header = split(lines[0], ',');
    if (header.size() < 2) throw ValidationError("panel CSV needs an item column and annotators");
    panel.annotator_ids.assign(header.begin() + 1, header.end());
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::vector<std::string> cells = split(lines[i], ',');
        if (cells.size() != header.size()) {
            throw ValidationError("panel CSV row " + std::to_string(i + 1) + " has wrong cell count");
        }
        panel.item_ids.push_back(cells[0]);
        std::vector<int> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c] != "0" && cells[c] != "1") {
                throw ValidationError("panel CSV cells must be 0/1, got '" + cells[c] + "'");
            }
            row.push_back(cells[c] == "1" ? 1 : 0);
        }
        panel.labels.push_back(std::move(row));
    }
    return panel;
}

namespace stages {

inline fs::path require_artifact(const RunConfig& config, const std::string& name) {
    const fs::path path = config.out_dir / name;
    if (!fs::exists(path)) throw MissingUpstreamError(name);
    return path;
}

inline std::shared_ptr<Backend> open_backend(const RunConfig& config, const std::string& backend_id) {
    return make_backend(config.backend(backend_id));
}

// ---- ingest -------------------------------------------------------------

inline Corpus cmd_ingest(const RunConfig& config, Manifest& manifest) {
    config.validate_paths();
    if (config.corpus_paths.empty()) throw ValidationError("no corpus paths configured");
    LoadResult loaded = load_corpus(config.corpus_paths, config.corpus_format, config.strict);

    const fs::path corpus_path = config.out_dir / artifacts::kCorpus;
    write_file(corpus_path, serialize_corpus(loaded.corpus));

    std::size_t healthy = 0, dementia = 0, unlabeled = 0;
    for (const Transcript& t : loaded.corpus.transcripts) {
        if (!t.diagnosis) {
            ++unlabeled;
        } else if (*t.diagnosis == BinaryDiagnosis::Dementia) {
            ++dementia;
        } else {
            ++healthy;
        }
    }
    json rejected = json::array();
    for (const RecordIssue& issue : loaded.rejected) {
        rejected.push_back({{"source", issue.source}, {"reason", issue.reason}});
    }
    json summary{{"transcripts", loaded.corpus.transcripts.size()},
                 {"healthy", healthy},
                 {"dementia", dementia},
                 {"unlabeled", unlabeled},
                 {"rejected", rejected},
                 {"warnings", loaded.warnings}};
    const fs::path summary_path = config.out_dir / artifacts::kIngestSummary;
    write_file(summary_path, summary.dump(2) + "\n");

    manifest.record("ingest", config.corpus_paths, {corpus_path, summary_path}, config.deterministic);
    return std::move(loaded.corpus);
}

// ---- annotate -----------------------------------------------------------

inline AnnotateCorpusResult cmd_annotate(const RunConfig& config, Manifest& manifest) {
    const fs::path corpus_path = require_artifact(config, artifacts::kCorpus);
    const Corpus corpus = deserialize_corpus(read_file(corpus_path));
    const FeatureRegistry registry = FeatureRegistry::load(config.registry_path);
    if (config.annotation_backend.empty()) {
        throw ValidationError("no annotation backend configured");
    }
    auto backend = open_backend(config, config.annotation_backend);
    AnnotationCache cache(config.cache_path(config.annotation_backend));
    AnnotateOptions options;
    options.deterministic = config.deterministic;

    AnnotateCorpusResult result = annotate_corpus(corpus, registry, *backend, &cache, options);

    const fs::path matrix_path = config.out_dir / artifacts::kAnnotations;
    write_file(matrix_path, result.matrix.to_csv());
    const fs::path provenance_path = config.out_dir / artifacts::kProvenance;
    write_file(provenance_path, result.matrix.provenance_jsonl());

    json failures = json::array();
    for (const CellFailure& f : result.failures) {
        failures.push_back(
            {{"transcript_id", f.transcript_id}, {"feature_id", f.feature_id}, {"reason", f.reason}});
    }
    json failure_report{{"cells_attempted", result.cells_attempted},
                        {"cells_filled", result.matrix.filled_cells()},
                        {"failures", failures}};
    const fs::path failures_path = config.out_dir / artifacts::kAnnotateFailures;
    write_file(failures_path, failure_report.dump(2) + "\n");

    std::vector<fs::path> outputs{matrix_path, provenance_path, failures_path};
    if (fs::exists(config.cache_path(config.annotation_backend))) {
        outputs.push_back(config.cache_path(config.annotation_backend));
    }
    manifest.record("annotate", {corpus_path, config.registry_path}, outputs,
                    config.deterministic);
    return result;
}

// ---- perceive -----------------------------------------------------------

inline void cmd_perceive(const RunConfig& config, Manifest& manifest) {
    const fs::path corpus_path = require_artifact(config, artifacts::kCorpus);
    const Corpus corpus = deserialize_corpus(read_file(corpus_path));
    const std::string prompt = read_file(config.perception_prompt_path);

    std::vector<std::string> judges;
    for (const BackendConfig& b : config.backends) {
        if (b.backend_id != config.annotation_backend) judges.push_back(b.backend_id);
    }
    if (judges.empty()) throw ValidationError("no perception backends configured");

    AnnotateOptions options;
    options.deterministic = config.deterministic;
    std::string lines;
    for (const std::string& judge : judges) {
        auto backend = open_backend(config, judge);
        AnnotationCache cache(config.cache_path(judge));
        const ElicitResult result = elicit_perception(corpus, *backend, prompt, &cache, options);
        for (const PerceptionVote& vote : result.votes) {
            json j{{"transcript_id", vote.transcript_id},
                   {"annotator_id", vote.annotator_id},
                   {"label", vote.label},
                   {"raw_response", vote.raw_response}};
            lines += j.dump() + "\n";
        }
        for (const CellFailure& f : result.failures) {
            json j{{"transcript_id", f.transcript_id},
                   {"annotator_id", judge},
                   {"error", f.reason}};
            lines += j.dump() + "\n";
        }
    }
    const fs::path votes_path = config.out_dir / artifacts::kPerceptionVotes;
    write_file(votes_path, lines);
    std::vector<fs::path> outputs{votes_path};
    for (const std::string& judge : judges) {
        if (fs::exists(config.cache_path(judge))) outputs.push_back(config.cache_path(judge));
    }
    manifest.record("perceive", {corpus_path, config.perception_prompt_path}, outputs,
                    config.deterministic);
}

// ---- vote ---------------------------------------------------------------

inline std::vector<JudgmentSet> cmd_vote(const RunConfig& config, Manifest& manifest) {
    const fs::path corpus_path = require_artifact(config, artifacts::kCorpus);
    const fs::path votes_path = require_artifact(config, artifacts::kPerceptionVotes);
    if (!config.human_panel) {
        throw ValidationError("vote stage requires a human perception panel (human_panel)");
    }
    const Corpus corpus = deserialize_corpus(read_file(corpus_path));
    const PanelCsv panel = load_panel_csv(*config.human_panel);

    std::map<std::string, std::vector<PerceptionVote>> llm_votes;
    for (const std::string& line : split_lines(read_file(votes_path))) {
        if (trim(line).empty()) continue;
        const json j = json::parse(line);
        if (j.contains("error")) continue;  // failed elicitations carry no label
        PerceptionVote vote{j.at("transcript_id").get<std::string>(),
                            j.at("annotator_id").get<std::string>(), j.at("label").get<int>(),
                            j.at("raw_response").get<std::string>()};
        llm_votes[vote.transcript_id].push_back(std::move(vote));
    }

    std::map<std::string, std::size_t> panel_row;
    for (std::size_t i = 0; i < panel.item_ids.size(); ++i) panel_row[panel.item_ids[i]] = i;

    std::string lines;
    std::vector<JudgmentSet> judgments;
    for (const Transcript& t : corpus.transcripts) {
        auto panel_it = panel_row.find(t.transcript_id);
        if (panel_it == panel_row.end()) {
            throw ValidationError("human panel lacks transcript '" + t.transcript_id + "'");
        }
        auto votes_it = llm_votes.find(t.transcript_id);
        if (votes_it == llm_votes.end()) {
            throw ValidationError("perception votes lack transcript '" + t.transcript_id + "'");
        }
        JudgmentSet judgment;
        judgment.transcript_id = t.transcript_id;
        judgment.clinical = t.diagnosis;
        const std::vector<int>& human_row = panel.labels[panel_it->second];
        std::vector<int> human_labels;
        for (std::size_t a = 0; a < human_row.size(); ++a) {
            // canonical raw form keeps the parse invariant for panel votes
            judgment.human_votes.push_back(PerceptionVote{
                t.transcript_id, panel.annotator_ids[a], human_row[a],
                human_row[a] ? "dementia" : "healthy"});
            human_labels.push_back(human_row[a]);
        }
        judgment.llm_votes = votes_it->second;
        std::vector<int> llm_labels;
        for (const PerceptionVote& v : judgment.llm_votes) llm_labels.push_back(v.label);
        judgment.human_majority = majority_vote(human_labels, config.tie);
        judgment.llm_majority = majority_vote(llm_labels, config.tie);
        judgments.push_back(judgment);
        lines += judgment_to_json(judgment).dump() + "\n";
    }

    const fs::path judgments_path = config.out_dir / artifacts::kJudgments;
    write_file(judgments_path, lines);

    std::size_t human_positive = 0, llm_positive = 0, clinical_positive = 0;
    for (const JudgmentSet& j : judgments) {
        human_positive += j.human_majority;
        llm_positive += j.llm_majority;
        if (j.clinical && *j.clinical == BinaryDiagnosis::Dementia) ++clinical_positive;
    }
    json summary{{"transcripts", judgments.size()},
                 {"human_majority_dementia", human_positive},
                 {"llm_majority_dementia", llm_positive},
                 {"clinical_dementia", clinical_positive}};
    const fs::path summary_path = config.out_dir / artifacts::kVoteSummary;
    write_file(summary_path, summary.dump(2) + "\n");

    manifest.record("vote", {corpus_path, votes_path, *config.human_panel},
                    {judgments_path, summary_path}, config.deterministic);
    return judgments;
}

inline std::vector<JudgmentSet> load_judgments(const RunConfig& config) {
    const fs::path path = require_artifact(config, artifacts::kJudgments);
    std::vector<JudgmentSet> judgments;
    for (const std::string& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        judgments.push_back(judgment_from_json(json::parse(line)));
    }
    if (judgments.empty()) throw ValidationError("judgments.jsonl is empty");
    return judgments;
}

// ---- agree --------------------------------------------------------------

inline json agreement_to_json(const AgreementReport& report) {
    json j{{"n_items", report.n_items},
           {"n_raters", report.n_raters},
           {"k_categories", report.k_categories},
           {"mean_observed_agreement", report.mean_observed_agreement},
           {"expected_agreement", report.expected_agreement},
           {"degenerate_chance", report.degenerate_chance}};
    if (report.degenerate_chance) {
        j["kappa"] = nullptr;
    } else {
        j["kappa"] = report.kappa;
    }
    return j;
}

inline void cmd_agree_kappa(const RunConfig& config, Manifest& manifest) {
    json out = json::object();
    std::vector<fs::path> inputs;
    std::string table;

    auto add_panel = [&](const std::string& name, const PanelCsv& panel) {
        const AgreementReport report =
            fleiss_kappa(PanelTable::from_labels(panel.item_ids, panel.labels, 2));
        out[name] = agreement_to_json(report);
        table += name + ": kappa=" +
                 (report.degenerate_chance ? std::string("undefined (degenerate chance)")
                                           : format_double(report.kappa, 4)) +
                 "  items=" + std::to_string(report.n_items) +
                 "  raters=" + std::to_string(report.n_raters) + "\n";
    };

    if (config.human_panel) {
        add_panel("human_perception", load_panel_csv(*config.human_panel));
        inputs.push_back(*config.human_panel);
    }
    // LLM perception panel assembled from the perceive stage
    {
        const fs::path votes_path = require_artifact(config, artifacts::kPerceptionVotes);
        inputs.push_back(votes_path);
        std::map<std::string, std::map<std::string, int>> by_transcript;
        std::set<std::string> judge_ids;
        for (const std::string& line : split_lines(read_file(votes_path))) {
            if (trim(line).empty()) continue;
            const json j = json::parse(line);
            if (j.contains("error")) continue;
            by_transcript[j.at("transcript_id").get<std::string>()]
                         [j.at("annotator_id").get<std::string>()] = j.at("label").get<int>();
            judge_ids.insert(j.at("annotator_id").get<std::string>());
        }
        PanelCsv panel;
        panel.annotator_ids.assign(judge_ids.begin(), judge_ids.end());
        for (const auto& [tid, votes] : by_transcript) {
            if (votes.size() != judge_ids.size()) continue;  // incomplete rows drop out
            panel.item_ids.push_back(tid);
            std::vector<int> row;
            for (const std::string& judge : panel.annotator_ids) row.push_back(votes.at(judge));
            panel.labels.push_back(std::move(row));
        }
        if (!panel.item_ids.empty()) add_panel("llm_perception", panel);
    }
    if (config.feature_panel) {
        add_panel("feature_panel", load_panel_csv(*config.feature_panel));
        inputs.push_back(*config.feature_panel);
    }

    const fs::path json_path = config.out_dir / artifacts::kKappa;
    write_file(json_path, out.dump(2) + "\n");
    const fs::path table_path = config.out_dir / artifacts::kKappaTable;
    write_file(table_path, table);
    manifest.record("agree:kappa", inputs, {json_path, table_path}, config.deterministic);
}

inline AltTestResult cmd_agree_alt_test(const RunConfig& config, Manifest& manifest) {
    if (!config.feature_panel) {
        throw ValidationError("alt-test requires a feature panel (feature_panel)");
    }
    const fs::path matrix_path = require_artifact(config, artifacts::kAnnotations);
    const AnnotationMatrix matrix = AnnotationMatrix::from_csv(read_file(matrix_path));
    const PanelCsv panel = load_panel_csv(*config.feature_panel);

    // items are "<transcript_id>|<feature_id>" cells; LLM labels come from
    // the annotation matrix
    std::vector<int> llm_labels;
    for (const std::string& item : panel.item_ids) {
        const std::size_t bar = item.find('|');
        if (bar == std::string::npos) {
            throw ValidationError("feature panel item must be 'transcript|feature', got '" + item +
                                  "'");
        }
        const std::string tid = item.substr(0, bar);
        const std::string fid = item.substr(bar + 1);
        const std::size_t row = matrix.row_of(tid);
        const std::size_t col = matrix.col_of(fid);
        if (matrix.is_missing(row, col)) {
            throw ValidationError("annotation matrix is missing cell " + item);
        }
        llm_labels.push_back(matrix.at(row, col));
    }

    AltTestOptions options;
    options.epsilon = config.thresholds.epsilon;
    options.tie = config.tie;
    options.alignment = config.alignment;
    const AltTestResult result =
        alt_annotator_test(llm_labels, panel.annotator_ids, panel.labels, options);

    json per_annotator = json::array();
    std::string table = "alternative annotator test (epsilon=" +
                        format_double(result.epsilon, 2) + ")\n";
    for (const AnnotatorOutcome& o : result.per_annotator_wins) {
        per_annotator.push_back({{"annotator_id", o.annotator_id},
                                 {"llm_alignment", o.llm_alignment},
                                 {"human_alignment", o.human_alignment},
                                 {"win", o.win}});
        table += "  vs " + o.annotator_id + ": llm=" + format_double(o.llm_alignment, 4) +
                 " human=" + format_double(o.human_alignment, 4) + (o.win ? "  WIN" : "  LOSS") +
                 "\n";
    }
    table += "winning_rate=" + format_double(result.winning_rate, 4) +
             (result.passed ? "  PASSED" : "  FAILED") + "\n";
    json out{{"epsilon", result.epsilon},
             {"per_annotator_wins", per_annotator},
             {"winning_rate", result.winning_rate},
             {"passed", result.passed},
             {"items", panel.item_ids.size()}};

    const fs::path json_path = config.out_dir / artifacts::kAltTest;
    write_file(json_path, out.dump(2) + "\n");
    const fs::path table_path = config.out_dir / artifacts::kAltTestTable;
    write_file(table_path, table);
    manifest.record("agree:alt-test", {matrix_path, *config.feature_panel},
                    {json_path, table_path}, config.deterministic);
    return result;
}

// ---- fit ----------------------------------------------------------------

struct TargetData {
    std::map<std::string, int> outcome;  // transcript -> 0/1
    std::map<std::string, std::string> participant;
};

inline TargetData target_outcomes(const RunConfig& config, const std::string& target) {
    TargetData data;
    const fs::path corpus_path = require_artifact(config, artifacts::kCorpus);
    const Corpus corpus = deserialize_corpus(read_file(corpus_path));
    for (const Transcript& t : corpus.transcripts) {
        data.participant[t.transcript_id] = t.participant_id;
    }
    if (target == "clinical") {
        for (const Transcript& t : corpus.transcripts) {
            if (!t.diagnosis) {
                throw ValidationError("transcript '" + t.transcript_id +
                                      "' has no clinical diagnosis; clinical analyses need one");
            }
            data.outcome[t.transcript_id] = static_cast<int>(*t.diagnosis);
        }
        return data;
    }
    if (target != "human" && target != "llm") {
        throw ValidationError("target must be clinical|human|llm, got '" + target + "'");
    }
    for (const JudgmentSet& j : load_judgments(config)) {
        data.outcome[j.transcript_id] = target == "human" ? j.human_majority : j.llm_majority;
    }
    return data;
}

// pruned matrix + outcome -> design; row order follows the matrix
inline DesignMatrix build_design(const AnnotationMatrix& matrix,
                                 const std::map<std::string, int>& outcome) {
    if (!matrix.complete()) {
        throw MissingDataError("annotation matrix has missing cells; modeling needs it complete");
    }
    DesignMatrix design;
    design.column_names = matrix.feature_ids();
    design.row_ids = matrix.transcript_ids();
    design.X.resize(static_cast<Eigen::Index>(matrix.rows()),
                    static_cast<Eigen::Index>(matrix.cols()));
    design.y.resize(static_cast<Eigen::Index>(matrix.rows()));
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        auto it = outcome.find(matrix.transcript_ids()[i]);
        if (it == outcome.end()) {
            throw ValidationError("no outcome label for transcript '" + matrix.transcript_ids()[i] +
                                  "'");
        }
        design.y(static_cast<Eigen::Index>(i)) = it->second;
        for (std::size_t j = 0; j < matrix.cols(); ++j) {
            design.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                matrix.at(i, j);
        }
    }
    return design;
}

inline json fit_to_json(const LogisticFit& fit) {
    json terms = json::array();
    for (std::size_t t = 0; t < fit.terms.size(); ++t) {
        const auto idx = static_cast<Eigen::Index>(t);
        terms.push_back({{"term", fit.terms[t]},
                         {"beta", fit.beta(idx)},
                         {"se", fit.se(idx)},
                         {"wald_z", fit.wald_z(idx)},
                         {"p", fit.p_values(idx)},
                         {"stars", significance_stars(fit.p_values(idx))},
                         {"odds_ratio", odds_ratio(fit.beta(idx))}});
    }
    return json{{"terms", terms},
                {"log_likelihood", fit.log_likelihood},
                {"null_log_likelihood", fit.null_log_likelihood},
                {"mcfadden_r2", fit.mcfadden_r2},
                {"n", fit.n},
                {"converged", fit.converged},
                {"iterations", fit.iterations}};
}

inline LogisticFit fit_from_json(const json& j) {
    LogisticFit fit;
    const json& terms = j.at("terms");
    fit.beta.resize(static_cast<Eigen::Index>(terms.size()));
    fit.se.resize(static_cast<Eigen::Index>(terms.size()));
    fit.wald_z.resize(static_cast<Eigen::Index>(terms.size()));
    fit.p_values.resize(static_cast<Eigen::Index>(terms.size()));
    Eigen::Index i = 0;
    for (const json& t : terms) {
        fit.terms.push_back(t.at("term").get<std::string>());
        fit.beta(i) = t.at("beta").get<double>();
        fit.se(i) = t.at("se").get<double>();
        fit.wald_z(i) = t.at("wald_z").get<double>();
        fit.p_values(i) = t.at("p").get<double>();
        ++i;
    }
    fit.log_likelihood = j.at("log_likelihood").get<double>();
    fit.null_log_likelihood = j.at("null_log_likelihood").get<double>();
    fit.mcfadden_r2 = j.at("mcfadden_r2").get<double>();
    fit.n = j.at("n").get<std::size_t>();
    fit.converged = j.at("converged").get<bool>();
    fit.iterations = j.at("iterations").get<int>();
    return fit;
}

inline StepwiseTrace cmd_fit(const RunConfig& config, Manifest& manifest,
                             const std::string& target) {
    const fs::path matrix_path = require_artifact(config, artifacts::kAnnotations);
    const AnnotationMatrix full = AnnotationMatrix::from_csv(read_file(matrix_path));
    const PruneResult pruned = prune_sparse(full, config.thresholds.sparsity);
    const TargetData data = target_outcomes(config, target);
    const DesignMatrix design = build_design(pruned.matrix, data.outcome);

    StepwiseOptions options;
    options.alpha = config.thresholds.alpha;
    options.direction = config.direction;
    const StepwiseTrace trace = stepwise_fit(design, options);

    json steps = json::array();
    for (const StepRecord& s : trace.steps) {
        steps.push_back({{"removed_feature", s.removed_feature},
                         {"p_value", s.p_value},
                         {"refit_log_likelihood", s.refit_log_likelihood}});
    }
    json out = fit_to_json(trace.final_fit);
    out["target"] = target;
    out["alpha"] = config.thresholds.alpha;
    out["direction"] =
        config.direction == StepwiseOptions::Direction::Forward ? "forward" : "backward";
    out["steps"] = steps;
    out["excluded_separated"] = trace.excluded_separated;
    out["excluded_collinear"] = trace.excluded_collinear;
    out["warnings"] = trace.warnings;
    out["pruned_features"] = pruned.removed;

    const fs::path json_path = config.out_dir / artifacts::fit_json(target);
    write_file(json_path, out.dump(2) + "\n");
    const fs::path csv_path = config.out_dir / artifacts::fit_csv(target);
    write_file(csv_path, coefficient_table_csv(trace.final_fit));

    std::vector<fs::path> inputs{matrix_path, config.out_dir / artifacts::kCorpus};
    if (target != "clinical") inputs.push_back(config.out_dir / artifacts::kJudgments);
    manifest.record("fit:" + target, inputs, {json_path, csv_path}, config.deterministic);
    return trace;
}

// ---- analyze ------------------------------------------------------------

inline json confusion_to_json(const ConfusionMatrix& m) {
    return json{{"tp", m.tp},
                {"fp", m.fp},
                {"tn", m.tn},
                {"fn", m.fn},
                {"accuracy", m.accuracy()},
                {"false_negative_share_of_errors", m.false_negative_share()},
                {"false_positive_share_of_errors", m.false_positive_share()}};
}

inline void cmd_analyze_confusion(const RunConfig& config, Manifest& manifest) {
    const std::vector<JudgmentSet> judgments = load_judgments(config);
    std::vector<int> human, llm, clinical;
    for (const JudgmentSet& j : judgments) {
        if (!j.clinical) {
            throw ValidationError("confusion analysis needs clinical labels on every transcript");
        }
        human.push_back(j.human_majority);
        llm.push_back(j.llm_majority);
        clinical.push_back(static_cast<int>(*j.clinical));
    }
    json out{{"human_vs_clinical", confusion_to_json(confusion(human, clinical))},
             {"llm_vs_clinical", confusion_to_json(confusion(llm, clinical))},
             {"llm_vs_human", confusion_to_json(confusion(llm, human))}};
    const fs::path path = config.out_dir / artifacts::kConfusion;
    write_file(path, out.dump(2) + "\n");
    manifest.record("analyze:confusion", {config.out_dir / artifacts::kJudgments}, {path},
                    config.deterministic);
}

inline void cmd_analyze_venn(const RunConfig& config, Manifest& manifest) {
    const std::vector<JudgmentSet> judgments = load_judgments(config);
    std::vector<int> human, llm, clinical;
    for (const JudgmentSet& j : judgments) {
        if (!j.clinical) throw ValidationError("venn analysis needs clinical labels");
        human.push_back(j.human_majority);
        llm.push_back(j.llm_majority);
        clinical.push_back(static_cast<int>(*j.clinical));
    }
    const OverlapCounts counts = overlap(clinical, human, llm);
    json regions = json::object();
    for (int mask = 0; mask < 8; ++mask) {
        regions[std::to_string(mask)] = counts.regions[static_cast<std::size_t>(mask)];
    }
    json out{{"regions", regions},
             {"bit_legend", {{"1", "clinical"}, {"2", "human"}, {"4", "llm"}}},
             {"total", counts.total()},
             {"clinical_total", counts.clinical_total()},
             {"human_total", counts.set_total(2)},
             {"llm_total", counts.set_total(4)},
             {"diagnosed_missed_by_perception", counts.diagnosed_missed_by_perception()}};
    const fs::path path = config.out_dir / artifacts::kVenn;
    write_file(path, out.dump(2) + "\n");
    manifest.record("analyze:venn", {config.out_dir / artifacts::kJudgments}, {path},
                    config.deterministic);
}

inline void cmd_analyze_misperception(const RunConfig& config, Manifest& manifest) {
    const fs::path matrix_path = require_artifact(config, artifacts::kAnnotations);
    const std::vector<JudgmentSet> judgments = load_judgments(config);
    const AnnotationMatrix full = AnnotationMatrix::from_csv(read_file(matrix_path));
    const PruneResult pruned = prune_sparse(full, config.thresholds.sparsity);

    std::vector<fs::path> outputs;
    for (const FocalSource focal : {FocalSource::Human, FocalSource::Llm}) {
        const std::string name = focal_source_name(focal);
        json out{{"focal_source", name}};
        try {
            const MisperceptionSubset subset = misperception_subset(judgments, focal);
            std::map<std::string, int> outcome;
            for (std::size_t i = 0; i < subset.transcript_ids.size(); ++i) {
                outcome[subset.transcript_ids[i]] = subset.outcome[i];
            }
            // restrict the pruned matrix to subset rows
            AnnotationMatrix restricted(subset.transcript_ids, pruned.matrix.feature_ids());
            for (const std::string& tid : subset.transcript_ids) {
                const std::size_t row = pruned.matrix.row_of(tid);
                for (const std::string& fid : pruned.matrix.feature_ids()) {
                    const std::size_t col = pruned.matrix.col_of(fid);
                    if (!pruned.matrix.is_missing(row, col)) {
                        restricted.set(tid, fid, pruned.matrix.at(row, col));
                    }
                }
            }
            out["n"] = subset.transcript_ids.size();
            out["transcript_ids"] = subset.transcript_ids;
            StepwiseOptions options;
            options.alpha = config.thresholds.alpha;
            options.direction = config.direction;
            const DesignMatrix design = build_design(restricted, outcome);
            const StepwiseTrace trace = stepwise_fit(design, options);
            out["fit"] = fit_to_json(trace.final_fit);
            out["excluded_separated"] = trace.excluded_separated;
            out["excluded_collinear"] = trace.excluded_collinear;
            out["warnings"] = trace.warnings;
        } catch (const EmptySubsetError& e) {
            out["n"] = 0;
            out["error"] = e.what();
        } catch (const DegenerateOutcomeError& e) {
            out["error"] = e.what();
        } catch (const SingularInformationError& e) {
            out["error"] = e.what();
        }
        const fs::path path = config.out_dir / artifacts::misperception(name);
        write_file(path, out.dump(2) + "\n");
        outputs.push_back(path);
    }
    manifest.record("analyze:misperception",
                    {matrix_path, config.out_dir / artifacts::kJudgments}, outputs,
                    config.deterministic);
}

inline void cmd_analyze_correlate(const RunConfig& config, Manifest& manifest) {
    const fs::path matrix_path = require_artifact(config, artifacts::kAnnotations);
    const std::vector<JudgmentSet> judgments = load_judgments(config);
    const AnnotationMatrix full = AnnotationMatrix::from_csv(read_file(matrix_path));
    const PruneResult pruned = prune_sparse(full, config.thresholds.sparsity);

    std::map<std::string, const JudgmentSet*> by_id;
    for (const JudgmentSet& j : judgments) by_id[j.transcript_id] = &j;

    std::vector<NamedColumn> columns;
    for (const std::string& fid : pruned.matrix.feature_ids()) {
        NamedColumn column{fid, {}};
        for (std::size_t i = 0; i < pruned.matrix.rows(); ++i) {
            column.values.push_back(pruned.matrix.at(i, pruned.matrix.col_of(fid)));
        }
        columns.push_back(std::move(column));
    }
    NamedColumn human{"judgment:human", {}}, llm{"judgment:llm", {}}, clinical{"judgment:clinical", {}};
    bool clinical_complete = true;
    for (const std::string& tid : pruned.matrix.transcript_ids()) {
        auto it = by_id.find(tid);
        if (it == by_id.end()) throw ValidationError("judgments lack transcript '" + tid + "'");
        human.values.push_back(it->second->human_majority);
        llm.values.push_back(it->second->llm_majority);
        if (it->second->clinical) {
            clinical.values.push_back(static_cast<int>(*it->second->clinical));
        } else {
            clinical_complete = false;
        }
    }
    columns.push_back(std::move(human));
    columns.push_back(std::move(llm));
    if (clinical_complete) columns.push_back(std::move(clinical));

    const CorrelationResult result = pearson_matrix(columns);

    std::string csv = "column";
    for (const std::string& name : result.names) csv += "," + name;
    csv += "\n";
    for (std::size_t a = 0; a < result.names.size(); ++a) {
        csv += result.names[a];
        for (std::size_t b = 0; b < result.names.size(); ++b) {
            csv += ",";
            if (!result.constant_flags[a] && !result.constant_flags[b]) {
                csv += format_double(result.r[a][b], 6);
            }
        }
        csv += "\n";
    }

    json pairs = json::array();
    for (std::size_t a = 0; a < result.names.size(); ++a) {
        for (std::size_t b = a + 1; b < result.names.size(); ++b) {
            if (result.constant_flags[a] || result.constant_flags[b]) continue;
            pairs.push_back({{"a", result.names[a]},
                             {"b", result.names[b]},
                             {"r", result.r[a][b]},
                             {"p", result.p[a][b]}});
        }
    }
    json constant = json::array();
    for (std::size_t a = 0; a < result.names.size(); ++a) {
        if (result.constant_flags[a]) constant.push_back(result.names[a]);
    }
    json out{{"n", result.n}, {"pairs", pairs}, {"constant_columns", constant}};

    const fs::path csv_path = config.out_dir / artifacts::kCorrelationsCsv;
    write_file(csv_path, csv);
    const fs::path json_path = config.out_dir / artifacts::kCorrelationsJson;
    write_file(json_path, out.dump(2) + "\n");
    manifest.record("analyze:correlate", {matrix_path, config.out_dir / artifacts::kJudgments},
                    {csv_path, json_path}, config.deterministic);
}

inline void cmd_analyze_cv(const RunConfig& config, Manifest& manifest) {
    const fs::path matrix_path = require_artifact(config, artifacts::kAnnotations);
    const AnnotationMatrix full = AnnotationMatrix::from_csv(read_file(matrix_path));
    const PruneResult pruned = prune_sparse(full, config.thresholds.sparsity);

    std::vector<fs::path> inputs{matrix_path};
    std::vector<fs::path> outputs;
    for (const std::string target : {"clinical", "human", "llm"}) {
        const fs::path fit_path = require_artifact(config, artifacts::fit_json(target));
        inputs.push_back(fit_path);
        const json fit_doc = json::parse(read_file(fit_path));
        std::vector<std::string> significant;
        for (const json& term : fit_doc.at("terms")) {
            const std::string name = term.at("term").get<std::string>();
            if (name != kInterceptTerm && term.at("p").get<double>() <= config.thresholds.alpha) {
                significant.push_back(name);
            }
        }
        json out{{"target", target}};
        if (significant.empty()) {
            out["error"] = "final model for target retains no significant features";
        } else {
            const TargetData data = target_outcomes(config, target);
            std::vector<CvRow> rows;
            for (std::size_t i = 0; i < pruned.matrix.rows(); ++i) {
                const std::string& tid = pruned.matrix.transcript_ids()[i];
                CvRow row;
                row.row_id = tid;
                row.participant_id = data.participant.at(tid);
                row.outcome = data.outcome.at(tid);
                for (const std::string& fid : significant) {
                    row.features.push_back(pruned.matrix.at(i, pruned.matrix.col_of(fid)));
                }
                rows.push_back(std::move(row));
            }
            CvOptions options;
            options.k = 5;
            options.seed = config.seed;
            const EvalReport report = grouped_cv_evaluate(rows, significant, options);
            json folds = json::array();
            for (const FoldMetrics& f : report.folds) {
                folds.push_back({{"test_size", f.test_size},
                                 {"accuracy", f.accuracy},
                                 {"precision", f.precision},
                                 {"recall", f.recall},
                                 {"f1", f.f1},
                                 {"roc_auc", f.auc_defined ? json(f.roc_auc) : json(nullptr)}});
            }
            out["features"] = significant;
            out["accuracy"] = report.accuracy;
            out["precision"] = report.precision;
            out["recall"] = report.recall;
            out["f1"] = report.f1;
            out["roc_auc"] = report.roc_auc;
            out["fold_sizes"] = report.fold_sizes;
            out["folds"] = folds;
            out["seed"] = report.seed;
        }
        const fs::path path = config.out_dir / artifacts::cv_json(target);
        write_file(path, out.dump(2) + "\n");
        outputs.push_back(path);
    }
    inputs.push_back(config.out_dir / artifacts::kCorpus);
    manifest.record("analyze:cv", inputs, outputs, config.deterministic);
}

// ---- report -------------------------------------------------------------

inline void cmd_report(const RunConfig& config, Manifest& manifest) {
    std::vector<fs::path> inputs;
    auto read_json_artifact = [&](const std::string& name) {
        const fs::path path = require_artifact(config, name);
        inputs.push_back(path);
        return json::parse(read_file(path));
    };

    const json ingest = read_json_artifact(artifacts::kIngestSummary);
    const json kappa = read_json_artifact(artifacts::kKappa);
    const json confusion_doc = read_json_artifact(artifacts::kConfusion);
    const json venn = read_json_artifact(artifacts::kVenn);

    std::string md = "# Perception modeling report\n\n";
    md += "## Corpus\n\n";
    md += "- transcripts: " + std::to_string(ingest.at("transcripts").get<std::size_t>()) + "\n";
    md += "- clinical labels: " + std::to_string(ingest.at("dementia").get<std::size_t>()) +
          " dementia / " + std::to_string(ingest.at("healthy").get<std::size_t>()) + " healthy / " +
          std::to_string(ingest.at("unlabeled").get<std::size_t>()) + " unlabeled\n\n";

    md += "## Inter-annotator agreement\n\n";
    for (const auto& [name, report] : kappa.items()) {
        md += "- " + name + ": Fleiss kappa = ";
        md += report.at("kappa").is_null() ? "undefined (single category)"
                                           : format_double(report.at("kappa").get<double>(), 3);
        md += " (" + std::to_string(report.at("n_items").get<std::size_t>()) + " items, " +
              std::to_string(report.at("n_raters").get<std::size_t>()) + " raters)\n";
    }
    md += "\n";

    if (fs::exists(config.out_dir / artifacts::kAltTest)) {
        const json alt = read_json_artifact(artifacts::kAltTest);
        md += "## Alternative annotator test\n\n";
        md += "- winning rate " + format_double(alt.at("winning_rate").get<double>(), 3) +
              " at epsilon " + format_double(alt.at("epsilon").get<double>(), 2) + ": " +
              (alt.at("passed").get<bool>() ? "PASSED" : "FAILED") + "\n\n";
    }

    md += "## Models\n\n";
    std::vector<NamedFit> fits;
    json fits_json = json::object();
    for (const std::string target : {"clinical", "human", "llm"}) {
        const json fit_doc = read_json_artifact(artifacts::fit_json(target));
        fits.push_back(NamedFit{target, fit_from_json(fit_doc)});
        fits_json[target] = fit_doc;
        if (target == "clinical" && fit_doc.contains("pruned_features")) {
            md += "Features pruned below the sparsity threshold: ";
            const json& removed = fit_doc.at("pruned_features");
            if (removed.empty()) {
                md += "(none)";
            } else {
                for (std::size_t i = 0; i < removed.size(); ++i) {
                    if (i) md += ", ";
                    md += removed[i].get<std::string>();
                }
            }
            md += "\n\n";
        }
    }
    md += coefficient_report_markdown(fits, config.thresholds.alpha);
    md += "\n";

    md += "## Judgment alignment\n\n";
    for (const std::string pair : {"human_vs_clinical", "llm_vs_clinical"}) {
        const json& cm = confusion_doc.at(pair);
        md += "- " + pair + ": tp=" + std::to_string(cm.at("tp").get<std::size_t>()) +
              " fp=" + std::to_string(cm.at("fp").get<std::size_t>()) +
              " tn=" + std::to_string(cm.at("tn").get<std::size_t>()) +
              " fn=" + std::to_string(cm.at("fn").get<std::size_t>()) + "; " +
              format_double(100.0 * cm.at("false_negative_share_of_errors").get<double>(), 0) +
              "% of errors were false negatives\n";
    }
    md += "\n";

    md += "## Overlap of dementia-labeled sets\n\n";
    md += "Of " + std::to_string(venn.at("clinical_total").get<std::size_t>()) +
          " clinically diagnosed cases, " +
          std::to_string(venn.at("diagnosed_missed_by_perception").get<std::size_t>()) +
          " were missed by humans, LLM judges, or both.\n\n";
    md += "Region counts (bitmask clinical=1, human=2, llm=4):\n\n";
    for (int mask = 0; mask < 8; ++mask) {
        md += "- region " + std::to_string(mask) + ": " +
              std::to_string(venn.at("regions").at(std::to_string(mask)).get<std::size_t>()) + "\n";
    }
    md += "\n";

    md += "## Misperception models\n\n";
    json misperception_json = json::object();
    for (const std::string focal : {"human", "llm"}) {
        const json doc = read_json_artifact(artifacts::misperception(focal));
        misperception_json[focal] = doc;
        md += "### Focal source: " + focal + "\n\n";
        if (doc.contains("error")) {
            md += doc.at("error").get<std::string>() + std::string("\n\n");
            continue;
        }
        md += "n = " + std::to_string(doc.at("n").get<std::size_t>()) + "\n\n";
        if (doc.contains("excluded_separated") && !doc.at("excluded_separated").empty()) {
            md += "Columns excluded for separation: ";
            const json& excluded = doc.at("excluded_separated");
            for (std::size_t i = 0; i < excluded.size(); ++i) {
                if (i) md += ", ";
                md += excluded[i].get<std::string>();
            }
            md += "\n\n";
        }
        md += coefficient_table_markdown(fit_from_json(doc.at("fit")));
        md += "\n";
    }

    md += "## Predictive evaluation (grouped 5-fold CV)\n\n";
    md += "| metric | clinical | human | llm |\n|---|---|---|---|\n";
    json cv_json_all = json::object();
    std::map<std::string, json> cv_docs;
    for (const std::string target : {"clinical", "human", "llm"}) {
        cv_docs[target] = read_json_artifact(artifacts::cv_json(target));
        cv_json_all[target] = cv_docs[target];
    }
    const std::vector<std::pair<std::string, std::string>> metric_rows = {
        {"Accuracy", "accuracy"}, {"Precision", "precision"}, {"Recall", "recall"},
        {"F1 Score", "f1"},       {"ROC-AUC", "roc_auc"},
    };
    for (const auto& [label, key] : metric_rows) {
        md += "| " + label + " |";
        for (const std::string target : {"clinical", "human", "llm"}) {
            const json& doc = cv_docs[target];
            md += doc.contains(key) ? " " + format_double(doc.at(key).get<double>(), 1) + " |"
                                     : " - |";
        }
        md += "\n";
    }
    md += "\n";

    json report{{"ingest", ingest},
                {"agreement", kappa},
                {"fits", fits_json},
                {"confusion", confusion_doc},
                {"venn", venn},
                {"misperception", misperception_json},
                {"cv", cv_json_all}};
    if (fs::exists(config.out_dir / artifacts::kAltTest)) {
        report["alt_test"] = json::parse(read_file(config.out_dir / artifacts::kAltTest));
    }

    const fs::path md_path = config.out_dir / artifacts::kReportMd;
    write_file(md_path, md);
    const fs::path json_path = config.out_dir / artifacts::kReportJson;
    write_file(json_path, report.dump(2) + "\n");
    manifest.record("report", inputs, {md_path, json_path}, config.deterministic);
}

// ---- demo ---------------------------------------------------------------

// End-to-end run over generated fixtures with the mock backends; the
// canonical smoke test. Fully deterministic for a given seed.
inline RunConfig cmd_demo(const fs::path& out_dir, const fs::path& registry_path,
                          std::uint64_t seed = 7, std::size_t transcripts = 514) {
    RunConfig config;
    config.out_dir = out_dir;
    config.registry_path = registry_path;
    config.seed = seed;
    config.deterministic = true;
    config.tie = TieMode::Healthy;  // leave-one-out references over 3-rater panels tie often
    fs::create_directories(out_dir);

    const FeatureRegistry registry = FeatureRegistry::load(registry_path);
    SyntheticOptions options;
    options.transcripts = transcripts;
    options.seed = seed;
    const SyntheticFixture fixture =
        write_synthetic_fixture(out_dir / "fixtures", registry, options);

    config.corpus_paths = {fixture.corpus_jsonl};
    config.corpus_format = CorpusFormat::Plain;
    config.human_panel = fixture.human_panel_csv;
    config.feature_panel = fixture.feature_panel_csv;

    BackendConfig annotator;
    annotator.backend_id = fixture.annotation_backend;
    annotator.model_name = "mock-annotator";
    annotator.mock_script = fixture.annotation_script.string();
    annotator.backoff_base_seconds = 0.0;
    config.backends.push_back(annotator);
    config.annotation_backend = annotator.backend_id;
    for (std::size_t j = 0; j < fixture.perception_backends.size(); ++j) {
        BackendConfig judge;
        judge.backend_id = fixture.perception_backends[j];
        judge.model_name = "mock-judge";
        judge.mock_script = fixture.perception_scripts[j].string();
        judge.backoff_base_seconds = 0.0;
        config.backends.push_back(judge);
    }

    // default perception prompt ships next to the registry
    std::vector<fs::path> fixture_files{fixture.corpus_jsonl, fixture.human_panel_csv,
                                        fixture.feature_panel_csv, fixture.annotation_script,
                                        fixture.perception_scripts[0], fixture.perception_scripts[1],
                                        fixture.perception_scripts[2]};
    const fs::path prompt = registry_path.parent_path() / "perception_prompt.txt";
    if (fs::exists(prompt)) {
        config.perception_prompt_path = prompt;
    } else {
        const fs::path generated = out_dir / "fixtures" / "perception_prompt.txt";
        write_file(generated,
                   "Does this description sound like it came from a dementia patient or a "
                   "healthy person? Please return \"dementia\" or \"healthy\" only, no "
                   "explanations.\n");
        config.perception_prompt_path = generated;
        fixture_files.push_back(generated);
    }

    Manifest manifest(config.out_dir);
    manifest.record("fixtures", {}, fixture_files, config.deterministic);

    cmd_ingest(config, manifest);
    cmd_annotate(config, manifest);
    cmd_perceive(config, manifest);
    cmd_vote(config, manifest);
    cmd_agree_kappa(config, manifest);
    cmd_agree_alt_test(config, manifest);
    for (const std::string target : {"clinical", "human", "llm"}) {
        cmd_fit(config, manifest, target);
    }
    cmd_analyze_confusion(config, manifest);
    cmd_analyze_venn(config, manifest);
    cmd_analyze_misperception(config, manifest);
    cmd_analyze_correlate(config, manifest);
    cmd_analyze_cv(config, manifest);
    cmd_report(config, manifest);
    return config;
}

}  // namespace stages
}  // namespace perceptlens
