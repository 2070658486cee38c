// perceptlens CLI: ingest -> annotate -> perceive -> vote -> agree -> fit ->
// analyze -> report, plus a self-contained demo over generated fixtures.
// Exit codes: 0 success, 1 validation error, 2 missing upstream artifact,
// 3 backend failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "perceptlens/pipeline.hpp"

namespace pl = perceptlens;

namespace {

struct CliOverrides {
    std::string config_path;
    std::string out_dir;
    std::string registry;
    std::string cache_dir;
    std::string tie;
    std::string alignment;
    std::string direction;
    std::string backend;
    std::string mock_script;
    std::vector<std::string> corpus_paths;
    std::string corpus_mode;
    std::string human_panel;
    std::string feature_panel;
    double sparsity = -1.0, alpha = -1.0, epsilon = -1.0;
    int max_in_flight = -1, retries = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool strict = false;
    bool deterministic = false;
};

pl::RunConfig build_config(const CliOverrides& o) {
    pl::RunConfig config;
    if (!o.config_path.empty()) config = pl::RunConfig::load(o.config_path);
    if (!o.out_dir.empty()) config.out_dir = o.out_dir;
    if (!o.registry.empty()) config.registry_path = o.registry;
    if (!o.cache_dir.empty()) config.cache_dir = o.cache_dir;
    if (!o.corpus_paths.empty()) {
        config.corpus_paths.clear();
        for (const std::string& p : o.corpus_paths) config.corpus_paths.push_back(p);
    }
    if (!o.corpus_mode.empty()) {
        config.corpus_format =
            o.corpus_mode == "chat" ? pl::CorpusFormat::Chat : pl::CorpusFormat::Plain;
    }
    if (!o.human_panel.empty()) config.human_panel = std::filesystem::path(o.human_panel);
    if (!o.feature_panel.empty()) config.feature_panel = std::filesystem::path(o.feature_panel);
    if (o.sparsity >= 0.0) config.thresholds.sparsity = o.sparsity;
    if (o.alpha >= 0.0) config.thresholds.alpha = o.alpha;
    if (o.epsilon >= 0.0) config.thresholds.epsilon = o.epsilon;
    if (!o.tie.empty()) config.tie = pl::parse_tie_mode(o.tie);
    if (!o.alignment.empty()) config.alignment = pl::parse_alignment_metric(o.alignment);
    if (!o.direction.empty()) {
        config.direction = o.direction == "forward" ? pl::StepwiseOptions::Direction::Forward
                                                    : pl::StepwiseOptions::Direction::Backward;
    }
    if (!o.backend.empty()) config.annotation_backend = o.backend;
    if (o.seed_set) config.seed = o.seed;
    if (o.strict) config.strict = true;
    if (o.deterministic) config.deterministic = true;
    for (pl::BackendConfig& b : config.backends) {
        if (o.max_in_flight > 0) b.max_in_flight = o.max_in_flight;
        if (o.retries >= 0) b.max_retries = o.retries;
        if (!o.mock_script.empty() &&
            (o.backend.empty() || b.backend_id == o.backend)) {
            b.mock_script = o.mock_script;
        }
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interpretable perception-modeling pipeline for picture descriptions"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name

    CliOverrides o;
    app.add_option("--config", o.config_path, "run configuration JSON");
    app.add_option("--out", o.out_dir, "output directory");
    app.add_option("--registry", o.registry, "feature registry JSON");
    app.add_option("--cache-dir", o.cache_dir, "annotation cache directory");
    app.add_option("--sparsity", o.sparsity, "sparsity pruning threshold");
    app.add_option("--alpha", o.alpha, "stepwise significance level");
    app.add_option("--epsilon", o.epsilon, "alternative annotator test margin");
    app.add_option("--tie", o.tie, "majority tie handling: error|dementia|healthy");
    app.add_option("--alignment", o.alignment, "alt-test alignment metric: accuracy|f1");
    app.add_option("--direction", o.direction, "stepwise direction: backward|forward");
    app.add_option("--backend", o.backend, "annotation backend id");
    app.add_option("--mock-script", o.mock_script, "mock script path for the selected backend");
    app.add_option("--max-in-flight", o.max_in_flight, "max concurrent backend requests");
    app.add_option("--retries", o.retries, "max retries per request");
    app.add_option("--seed", o.seed, "random seed")->each([&](const std::string&) { o.seed_set = true; });
    app.add_flag("--strict", o.strict, "fail on malformed input lines");
    app.add_flag("--deterministic", o.deterministic, "zero timestamps for byte-stable outputs");

    auto* ingest = app.add_subcommand("ingest", "load and clean the corpus");
    ingest->add_option("--corpus", o.corpus_paths, "corpus input path(s)");
    ingest->add_option("--mode", o.corpus_mode, "corpus format: chat|plain");

    app.add_subcommand("annotate", "label all features with the annotation backend");
    app.add_subcommand("perceive", "elicit perception judgments from the judge backends");

    auto* vote = app.add_subcommand("vote", "aggregate votes into judgment sets");
    vote->add_option("--human-panel", o.human_panel, "human perception panel CSV");

    auto* agree = app.add_subcommand("agree", "annotation quality statistics");
    std::string agree_which;
    agree->add_option("which", agree_which, "kappa|alt-test")->required();
    agree->add_option("--human-panel", o.human_panel, "human perception panel CSV");
    agree->add_option("--feature-panel", o.feature_panel, "feature panel CSV");

    auto* fit = app.add_subcommand("fit", "stepwise logistic regression per judgment target");
    std::string fit_target = "all";
    fit->add_option("--target", fit_target, "clinical|human|llm|all");

    auto* analyze = app.add_subcommand("analyze", "judgment comparisons");
    std::string analyze_what;
    analyze->add_option("what", analyze_what, "confusion|venn|misperception|correlate|cv")
        ->required();

    app.add_subcommand("report", "assemble the final report");

    auto* demo = app.add_subcommand("demo", "full pipeline over generated fixtures");
    std::size_t demo_transcripts = 514;
    demo->add_option("--transcripts", demo_transcripts, "fixture corpus size");

    CLI11_PARSE(app, argc, argv);

    try {
        if (demo->parsed()) {
            const std::filesystem::path out = o.out_dir.empty() ? "out_demo" : o.out_dir;
            const std::filesystem::path registry =
                o.registry.empty() ? "data/feature_registry.json" : o.registry;
            pl::stages::cmd_demo(out, registry, o.seed_set ? o.seed : 7, demo_transcripts);
            std::cout << "demo complete: " << out.string() << "\n";
            return 0;
        }

        pl::RunConfig config = build_config(o);
        pl::Manifest manifest(config.out_dir);

        if (ingest->parsed()) {
            const pl::Corpus corpus = pl::stages::cmd_ingest(config, manifest);
            std::cout << "ingested " << corpus.transcripts.size() << " transcript(s)\n";
        } else if (app.got_subcommand("annotate")) {
            const auto result = pl::stages::cmd_annotate(config, manifest);
            std::cout << "annotated " << result.matrix.filled_cells() << "/"
                      << result.cells_attempted << " cells ("
                      << result.failures.size() << " failure(s))\n";
        } else if (app.got_subcommand("perceive")) {
            pl::stages::cmd_perceive(config, manifest);
            std::cout << "perception votes written\n";
        } else if (vote->parsed()) {
            const auto judgments = pl::stages::cmd_vote(config, manifest);
            std::cout << "judgments for " << judgments.size() << " transcript(s)\n";
        } else if (agree->parsed()) {
            if (agree_which == "kappa") {
                pl::stages::cmd_agree_kappa(config, manifest);
            } else if (agree_which == "alt-test") {
                const auto result = pl::stages::cmd_agree_alt_test(config, manifest);
                std::cout << "winning_rate=" << pl::format_double(result.winning_rate, 4)
                          << (result.passed ? " PASSED" : " FAILED") << "\n";
            } else {
                throw pl::ValidationError("agree expects kappa|alt-test, got '" + agree_which + "'");
            }
        } else if (fit->parsed()) {
            std::vector<std::string> targets;
            if (fit_target == "all") {
                targets = {"clinical", "human", "llm"};
            } else {
                targets = {fit_target};
            }
            for (const std::string& target : targets) {
                const auto trace = pl::stages::cmd_fit(config, manifest, target);
                std::cout << "fit " << target << ": " << trace.final_fit.terms.size() - 1
                          << " retained feature(s), McFadden R2 "
                          << pl::format_double(trace.final_fit.mcfadden_r2, 3) << "\n";
                for (const std::string& warning : trace.warnings) {
                    std::cerr << "warning: " << warning << "\n";
                }
            }
        } else if (analyze->parsed()) {
            if (analyze_what == "confusion") {
                pl::stages::cmd_analyze_confusion(config, manifest);
            } else if (analyze_what == "venn") {
                pl::stages::cmd_analyze_venn(config, manifest);
            } else if (analyze_what == "misperception") {
                pl::stages::cmd_analyze_misperception(config, manifest);
            } else if (analyze_what == "correlate") {
                pl::stages::cmd_analyze_correlate(config, manifest);
            } else if (analyze_what == "cv") {
                pl::stages::cmd_analyze_cv(config, manifest);
            } else {
                throw pl::ValidationError("analyze expects confusion|venn|misperception|correlate|cv");
            }
            std::cout << "analysis '" << analyze_what << "' written\n";
        } else if (app.got_subcommand("report")) {
            pl::stages::cmd_report(config, manifest);
            std::cout << "report written to "
                      << (config.out_dir / pl::artifacts::kReportMd).string() << "\n";
        }
        return 0;
    } catch (const pl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
