#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "perceptlens/pipeline.hpp"

using namespace perceptlens;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("perceptlens_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path shipped_registry_path() {
    return fs::path(PERCEPTLENS_DATA_DIR) / "feature_registry.json";
}

RunConfig tiny_ingest_config(const fs::path& dir) {
    write_file(dir / "in.jsonl",
               R"({"transcript_id":"t1","participant_id":"p1","text":"the boy is here .","diagnosis":"AD"})"
               "\n"
               R"({"transcript_id":"t2","participant_id":"p2","text":"water spills .","diagnosis":"Healthy Control"})"
               "\n"
               R"({"transcript_id":"t3","participant_id":"p2","text":"a stool .","diagnosis":"MCI"})"
               "\n"
               R"({"transcript_id":"t4","participant_id":"p3","text":"cookies .","diagnosis":"Healthy Control"})"
               "\n"
               R"({"transcript_id":"t5","participant_id":"p4","text":"jar lid .","diagnosis":"Other"})"
               "\n");
    RunConfig config;
    config.corpus_paths = {dir / "in.jsonl"};
    config.corpus_format = CorpusFormat::Plain;
    config.registry_path = shipped_registry_path();
    config.out_dir = dir / "out";
    config.deterministic = true;
    return config;
}

}  // namespace

TEST_CASE("cmd_ingest writes the corpus and a diagnosis summary") {
    const fs::path dir = temp_dir("pipe_ingest");
    RunConfig config = tiny_ingest_config(dir);
    Manifest manifest(config.out_dir);
    const Corpus corpus = stages::cmd_ingest(config, manifest);
    REQUIRE(corpus.transcripts.size() == 5);
    REQUIRE(fs::exists(config.out_dir / artifacts::kCorpus));
    const json summary = json::parse(read_file(config.out_dir / artifacts::kIngestSummary));
    REQUIRE(summary.at("transcripts") == 5);
    REQUIRE(summary.at("dementia") == 3);
    REQUIRE(summary.at("healthy") == 2);
}

TEST_CASE("validation errors name the missing path") {
    const fs::path dir = temp_dir("pipe_missing");
    RunConfig config;
    config.corpus_paths = {dir / "nope.jsonl"};
    config.registry_path = shipped_registry_path();
    config.out_dir = dir / "out";
    Manifest manifest(config.out_dir);
    try {
        stages::cmd_ingest(config, manifest);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(std::string(e.what()).find("nope.jsonl") != std::string::npos);
    }
}

TEST_CASE("cmd_fit without annotations reports the missing artifact") {
    const fs::path dir = temp_dir("pipe_upstream");
    RunConfig config = tiny_ingest_config(dir);
    Manifest manifest(config.out_dir);
    stages::cmd_ingest(config, manifest);
    try {
        stages::cmd_fit(config, manifest, "clinical");
        FAIL("expected MissingUpstreamError");
    } catch (const MissingUpstreamError& e) {
        REQUIRE(e.artifact() == "annotations.csv");
        REQUIRE(e.code() == ExitCode::UpstreamMissing);
    }
}

TEST_CASE("demo pipeline runs end to end on a small fixture") {
    const fs::path dir = temp_dir("pipe_demo_small");
    stages::cmd_demo(dir / "out", shipped_registry_path(), 7, 80);

    for (const char* artifact :
         {artifacts::kCorpus, artifacts::kIngestSummary, artifacts::kAnnotations,
          artifacts::kProvenance, artifacts::kPerceptionVotes, artifacts::kJudgments,
          artifacts::kKappa, artifacts::kAltTest, artifacts::kConfusion, artifacts::kVenn,
          artifacts::kCorrelationsCsv, artifacts::kReportMd, artifacts::kReportJson}) {
        INFO(artifact);
        REQUIRE(fs::exists(dir / "out" / artifact));
    }
    for (const std::string target : {"clinical", "human", "llm"}) {
        REQUIRE(fs::exists(dir / "out" / artifacts::fit_json(target)));
        REQUIRE(fs::exists(dir / "out" / artifacts::cv_json(target)));
    }

    // the annotation matrix is complete: transcripts x features cells
    const AnnotationMatrix matrix =
        AnnotationMatrix::from_csv(read_file(dir / "out" / artifacts::kAnnotations));
    REQUIRE(matrix.rows() == 80);
    REQUIRE(matrix.cols() == 38);
    REQUIRE(matrix.complete());
}

TEST_CASE("re-running a stage with unchanged inputs reproduces output hashes") {
    const fs::path dir = temp_dir("pipe_rerun");
    RunConfig config = tiny_ingest_config(dir);
    Manifest manifest(config.out_dir);
    stages::cmd_ingest(config, manifest);
    const json first = manifest.entries().at("ingest");

    Manifest manifest2(config.out_dir);
    stages::cmd_ingest(config, manifest2);
    const json second = manifest2.entries().at("ingest");

    REQUIRE(first.at("outputs") == second.at("outputs"));
    REQUIRE(first.at("inputs") == second.at("inputs"));
}

TEST_CASE("manifest references every output-directory file exactly once") {
    const fs::path dir = temp_dir("pipe_manifest");
    stages::cmd_demo(dir / "out", shipped_registry_path(), 7, 60);

    std::map<std::string, int> referenced;
    for (const std::string& line : split_lines(read_file(dir / "out" / "manifest.jsonl"))) {
        if (trim(line).empty()) continue;
        const json entry = json::parse(line);
        for (const auto& [path, hash] : entry.at("outputs").items()) ++referenced[path];
    }

    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir / "out")) {
        if (!entry.is_regular_file()) continue;
        const std::string rel =
            entry.path().lexically_relative(dir / "out").generic_string();
        if (rel == "manifest.jsonl") continue;  // the ledger itself
        ++files;
        INFO(rel);
        REQUIRE(referenced[rel] == 1);
    }
    REQUIRE(files >= 20);
}

TEST_CASE("run config round-trips through JSON with overrides") {
    const fs::path dir = temp_dir("pipe_config");
    const json doc{
        {"corpus", {{"paths", {"corpus.jsonl"}}, {"mode", "plain"}}},
        {"registry", "registry.json"},
        {"backends",
         {{{"backend_id", "judge"},
           {"endpoint_url", "http://example.test/v1/chat/completions"},
           {"model_name", "judge-model"},
           {"max_in_flight", 2},
           {"temperature", 0.0}}}},
        {"annotation_backend", "judge"},
        {"thresholds", {{"sparsity", 0.06}, {"alpha", 0.01}, {"epsilon", 0.2}}},
        {"tie", "dementia"},
        {"seed", 42},
        {"out", "results"},
    };
    write_file(dir / "config.json", doc.dump(2));
    const RunConfig config = RunConfig::load(dir / "config.json");
    REQUIRE(config.corpus_paths.size() == 1);
    REQUIRE(config.corpus_format == CorpusFormat::Plain);
    REQUIRE(config.backends.size() == 1);
    REQUIRE(config.backends[0].max_in_flight == 2);
    REQUIRE(config.backends[0].temperature == 0.0);
    REQUIRE(config.backend("judge").model_name == "judge-model");
    REQUIRE_THROWS_AS(config.backend("absent"), ValidationError);
    REQUIRE(config.thresholds.alpha == 0.01);
    REQUIRE(config.tie == TieMode::Dementia);
    REQUIRE(config.seed == 42);
    REQUIRE(config.out_dir.filename() == "results");
    REQUIRE(config.backends[0].api_key_env() == "PERCEPTLENS_API_KEY_JUDGE");
}

#ifdef PERCEPTLENS_BIN_PATH
TEST_CASE("CLI exit codes: 0 success, 1 validation, 2 upstream-missing") {
    const fs::path dir = temp_dir("pipe_cli");
    const std::string bin = PERCEPTLENS_BIN_PATH;
    const std::string registry = shipped_registry_path().string();

    auto run = [&](const std::string& args) {
        const std::string cmd = bin + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    REQUIRE(run("demo --out " + (dir / "demo_out").string() + " --registry " + registry +
                " --transcripts 60") == 0);
    // validation error: corpus path does not exist
    REQUIRE(run("ingest --corpus " + (dir / "missing.jsonl").string() + " --out " +
                (dir / "v_out").string() + " --registry " + registry) == 1);
    // upstream missing: fit before annotate
    write_file(dir / "one.jsonl",
               R"({"transcript_id":"t1","participant_id":"p1","text":"a boy .","diagnosis":"AD"})"
               "\n");
    REQUIRE(run("ingest --corpus " + (dir / "one.jsonl").string() + " --out " +
                (dir / "u_out").string() + " --registry " + registry) == 0);
    REQUIRE(run("fit --target clinical --out " + (dir / "u_out").string() + " --registry " +
                registry) == 2);

    // backend failure: a mock whose every request simulates a transport error
    write_file(dir / "dead_script.json", R"({"responses": {}})");
    const json config{
        {"corpus", {{"paths", {(dir / "one.jsonl").string()}}, {"mode", "plain"}}},
        {"registry", registry},
        {"backends",
         {{{"backend_id", "dead"},
           {"model_name", "dead"},
           {"mock_script", (dir / "dead_script.json").string()},
           {"backoff_base_seconds", 0.0},
           {"max_retries", 0}}}},
        {"annotation_backend", "dead"},
        {"out", (dir / "b_out").string()},
    };
    write_file(dir / "dead_config.json", config.dump());
    REQUIRE(run("ingest --config " + (dir / "dead_config.json").string()) == 0);
    REQUIRE(run("annotate --config " + (dir / "dead_config.json").string()) == 3);
}
#endif
