#pragma once

// Seeded synthetic fixture generator: a plausible picture-description corpus
// with longitudinal participants, planted feature effects, scripted mock
// backends, a 10-rater perception panel and a 3-annotator feature panel.
// Everything is a pure function of the seed, so pipeline runs over these
// fixtures are byte-reproducible.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perceptlens/common.hpp"
#include "perceptlens/corpus.hpp"
#include "perceptlens/features.hpp"

namespace perceptlens {

struct SyntheticOptions {
    std::size_t transcripts = 514;
    std::uint64_t seed = 7;
    std::size_t feature_panel_transcripts = 10;
    std::size_t human_annotators = 10;
};

struct SyntheticFixture {
    fs::path corpus_jsonl;
    fs::path human_panel_csv;
    fs::path feature_panel_csv;
    fs::path annotation_script;                 // mock script for feature labeling
    std::vector<fs::path> perception_scripts;   // one mock script per judge backend
    std::vector<std::string> perception_backends;
    std::string annotation_backend;
};

namespace synth_detail {

// Features whose planted positive rate sits below the 5% pruning threshold.
inline const std::vector<std::string>& sparse_features() {
    static const std::vector<std::string> list = {
        "vision_difficulties", "introduction", "naming_characters", "empathy", "irritability"};
    return list;
}

inline bool is_sparse(const std::string& feature_id) {
    const auto& list = sparse_features();
    return std::find(list.begin(), list.end(), feature_id) != list.end();
}

// Class-conditional shift applied to a feature's base log-odds.
inline double clinical_shift(const std::string& f) {
    static const std::map<std::string, double> shifts = {
        {"non_specific_language", 1.0},  {"weather_conditions_mentioned", -0.9},
        {"girl_explicitly_mentioned", -0.8}, {"mother_explicitly_mentioned", -0.8},
        {"lightheartedness", 0.7},       {"short_sentences", 0.6},
        {"actions_over_objects", -0.6},  {"probable_speculation", 0.6},
    };
    auto it = shifts.find(f);
    return it == shifts.end() ? 0.0 : it->second;
}

inline double llm_weight(const std::string& f) {
    static const std::map<std::string, double> weights = {
        {"non_specific_language", 2.2}, {"girl_explicitly_mentioned", -1.4},
        {"outside_mentioned", -1.1},    {"disfluencies", 1.8},
        {"criticise_characters", 1.4},  {"rich_vocabulary", -1.2},
        {"boy_explicitly_mentioned", -1.2}, {"lightheartedness", 0.8},
        {"self_limitations", 0.7},      {"actions_over_objects", -0.7},
        {"sad_depressed_despaired", 1.0}, {"tom_boy", 0.8},
        {"other_characters_mentioned", 0.9},
    };
    auto it = weights.find(f);
    return it == weights.end() ? 0.0 : it->second;
}

inline double human_weight(const std::string& f) {
    static const std::map<std::string, double> weights = {
        {"non_specific_language", 0.7},
        {"girl_explicitly_mentioned", -0.6},
        {"short_sentences", -0.5},
        {"mother_explicitly_mentioned", -0.6},
    };
    auto it = weights.find(f);
    return it == weights.end() ? 0.0 : it->second;
}

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline std::string synth_text(std::mt19937_64& gen, bool dementia) {
    static const std::vector<std::string> fluent = {
        "the boy is standing on a stool reaching for the cookie jar",
        "his sister is holding out her hand for a cookie",
        "the mother is drying dishes by the sink",
        "water is overflowing onto the kitchen floor",
        "the window is open and you can see the garden path",
        "the stool is tipping over and he is about to fall",
        "she does not notice the water spilling over",
        "there are two cups and a plate on the counter",
    };
    static const std::vector<std::string> impaired = {
        "the uh the thing there is going over",
        "he is on that and she is doing something",
        "uh there is a a boy i think",
        "the water the water is running",
        "she is there by the the what do you call it",
        "i cannot see anything else there",
        "cookies . cookies up there",
        "that one is falling maybe",
    };
    const std::vector<std::string>& bank = dementia ? impaired : fluent;
    const std::size_t sentences = 3 + rng_below(gen, 4);
    std::string out;
    for (std::size_t s = 0; s < sentences; ++s) {
        if (s) out += " ";
        out += bank[rng_below(gen, bank.size())];
        out += " .";
    }
    return out;
}

inline std::string zero_pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
    return std::string(buf);
}

}  // namespace synth_detail

// Writes the full fixture tree under dir. Planted structure: a clinical
// outcome per participant, feature values shifted by outcome, an LLM judge
// driven by a wide feature set and a noisier human panel driven by a narrow
// one; exactly the five features named in synth_detail::sparse_features()
// fall under the 5% positive-rate threshold.
inline SyntheticFixture write_synthetic_fixture(const fs::path& dir, const FeatureRegistry& registry,
                                                const SyntheticOptions& options = {}) {
    fs::create_directories(dir);
    const std::size_t n = options.transcripts;
    if (n < 20) throw ValidationError("synthetic fixture needs at least 20 transcripts");

    // participant layout: ~2/5 of transcripts come from two-session participants
    const std::size_t pairs = (n * 100) / 514;
    const std::size_t singles = n - 2 * pairs;
    const std::size_t total_dementia = (n * 283 + 257) / 514;  // rounded

    std::mt19937_64 layout_gen(options.seed ^ fnv1a64("layout"));

    std::vector<std::string> transcript_ids, participant_ids;
    std::vector<int> outcome;  // clinical, per transcript
    std::size_t dementia_pairs = std::min(pairs, (total_dementia * 55) / 283);
    std::size_t dementia_singles =
        std::min(singles, total_dementia - 2 * std::min(dementia_pairs, total_dementia / 2));

    std::vector<int> pair_outcomes(pairs, 0);
    for (std::size_t i = 0; i < dementia_pairs && i < pairs; ++i) pair_outcomes[i] = 1;
    rng_shuffle(layout_gen, pair_outcomes);
    std::vector<int> single_outcomes(singles, 0);
    for (std::size_t i = 0; i < dementia_singles && i < singles; ++i) single_outcomes[i] = 1;
    rng_shuffle(layout_gen, single_outcomes);

    std::size_t transcript_no = 0;
    for (std::size_t p = 0; p < pairs; ++p) {
        const std::string participant = "P" + synth_detail::zero_pad(p + 1, 4);
        for (int session = 0; session < 2; ++session) {
            transcript_ids.push_back("T" + synth_detail::zero_pad(++transcript_no, 4));
            participant_ids.push_back(participant);
            outcome.push_back(pair_outcomes[p]);
        }
    }
    for (std::size_t s = 0; s < singles; ++s) {
        const std::string participant = "P" + synth_detail::zero_pad(pairs + s + 1, 4);
        transcript_ids.push_back("T" + synth_detail::zero_pad(++transcript_no, 4));
        participant_ids.push_back(participant);
        outcome.push_back(single_outcomes[s]);
    }

    // feature values: base rate per feature, log-odds shifted by outcome
    std::mt19937_64 feature_gen(options.seed ^ fnv1a64("features"));
    std::map<std::string, std::vector<int>> feature_values;
    for (const FeatureSpec& spec : registry.specs()) {
        const double base =
            synth_detail::is_sparse(spec.feature_id)
                ? 0.02
                : 0.18 + 0.27 * static_cast<double>(fnv1a64(spec.feature_id) % 1000) / 1000.0;
        const double shift = synth_detail::clinical_shift(spec.feature_id);
        std::vector<int> column(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double logit = std::log(base / (1.0 - base)) + shift * (outcome[i] ? 1.0 : -1.0);
            column[i] = rng_bernoulli(feature_gen, synth_detail::sigmoid(logit)) ? 1 : 0;
        }
        feature_values[spec.feature_id] = std::move(column);
    }

    // LLM judges: a shared latent judgment from the wide feature set, plus a
    // small per-judge flip rate
    std::mt19937_64 llm_gen(options.seed ^ fnv1a64("llm"));
    const std::vector<std::string> judges = {"llm_a", "llm_b", "llm_c"};
    std::vector<std::vector<int>> judge_votes(judges.size(), std::vector<int>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double latent = -1.2;
        for (const auto& [feature, column] : feature_values) {
            latent += synth_detail::llm_weight(feature) * column[i];
        }
        const int base_vote = rng_bernoulli(llm_gen, synth_detail::sigmoid(3.0 * latent)) ? 1 : 0;
        for (std::size_t j = 0; j < judges.size(); ++j) {
            judge_votes[j][i] = rng_bernoulli(llm_gen, 0.08) ? 1 - base_vote : base_vote;
        }
    }

    // human panel: narrow cue set, annotator bias, no ties by construction
    std::mt19937_64 human_gen(options.seed ^ fnv1a64("humans"));
    const std::size_t annotators = options.human_annotators;
    std::vector<double> annotator_bias(annotators);
    for (std::size_t a = 0; a < annotators; ++a) annotator_bias[a] = -0.4 + 0.8 * rng_unit(human_gen);
    std::vector<std::vector<int>> human_votes(n, std::vector<int>(annotators));
    for (std::size_t i = 0; i < n; ++i) {
        double latent = -0.3;
        for (const auto& [feature, column] : feature_values) {
            latent += synth_detail::human_weight(feature) * column[i];
        }
        for (std::size_t a = 0; a < annotators; ++a) {
            human_votes[i][a] =
                rng_bernoulli(human_gen, synth_detail::sigmoid(1.6 * latent + annotator_bias[a])) ? 1 : 0;
        }
        if (annotators % 2 == 0) {
            const int ones = std::accumulate(human_votes[i].begin(), human_votes[i].end(), 0);
            if (static_cast<std::size_t>(ones) * 2 == annotators) {
                human_votes[i][annotators - 1] = human_votes[i][0];  // break the tie
            }
        }
    }

    // corpus JSONL, cycling through the dementia-stage label strings
    std::mt19937_64 text_gen(options.seed ^ fnv1a64("text"));
    static const std::vector<std::string> dementia_labels = {"Probable AD", "AD", "MCI",
                                                             "Possible AD", "Other"};
    std::string corpus_jsonl;
    for (std::size_t i = 0; i < n; ++i) {
        json record{{"transcript_id", transcript_ids[i]},
                    {"participant_id", participant_ids[i]},
                    {"text", synth_detail::synth_text(text_gen, outcome[i] == 1)},
                    {"diagnosis", outcome[i] ? dementia_labels[i % dementia_labels.size()]
                                             : std::string("Healthy Control")}};
        corpus_jsonl += record.dump();
        corpus_jsonl += "\n";
    }

    SyntheticFixture fixture;
    fixture.corpus_jsonl = dir / "corpus.jsonl";
    write_file(fixture.corpus_jsonl, corpus_jsonl);

    // mock script for the annotation backend: one response per cell
    json annotation_responses = json::object();
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [feature, column] : feature_values) {
            annotation_responses[transcript_ids[i] + "|" + feature] =
                json::array({column[i] ? "yes" : "no"});
        }
    }
    fixture.annotation_backend = "gpt_mock";
    fixture.annotation_script = dir / "mock_annotation.json";
    write_file(fixture.annotation_script, json{{"responses", annotation_responses}}.dump());

    // one perception script per judge
    for (std::size_t j = 0; j < judges.size(); ++j) {
        json perception_responses = json::object();
        for (std::size_t i = 0; i < n; ++i) {
            perception_responses[transcript_ids[i] + "|__perception__"] =
                json::array({judge_votes[j][i] ? "dementia" : "healthy"});
        }
        const fs::path path = dir / ("mock_perception_" + judges[j] + ".json");
        write_file(path, json{{"responses", perception_responses}}.dump());
        fixture.perception_scripts.push_back(path);
        fixture.perception_backends.push_back(judges[j]);
    }

    // human perception panel CSV: rows = transcripts, columns = annotators
    {
        std::string csv = "item_id";
        for (std::size_t a = 0; a < annotators; ++a) {
            csv += ",a" + synth_detail::zero_pad(a + 1, 2);
        }
        csv += "\n";
        for (std::size_t i = 0; i < n; ++i) {
            csv += transcript_ids[i];
            for (std::size_t a = 0; a < annotators; ++a) {
                csv += human_votes[i][a] ? ",1" : ",0";
            }
            csv += "\n";
        }
        fixture.human_panel_csv = dir / "human_panel.csv";
        write_file(fixture.human_panel_csv, csv);
    }

    // feature-annotation panel: 3 annotators on a transcript subset, items
    // keyed "<transcript_id>|<feature_id>"
    {
        std::mt19937_64 panel_gen(options.seed ^ fnv1a64("feature_panel"));
        const std::size_t subset = std::min(options.feature_panel_transcripts, n);
        std::string csv = "item_id,h1,h2,h3\n";
        for (std::size_t i = 0; i < subset; ++i) {
            for (const auto& [feature, column] : feature_values) {
                csv += transcript_ids[i] + "|" + feature;
                for (int a = 0; a < 3; ++a) {
                    const int label =
                        rng_bernoulli(panel_gen, 0.12) ? 1 - column[i] : column[i];
                    csv += label ? ",1" : ",0";
                }
                csv += "\n";
            }
        }
        fixture.feature_panel_csv = dir / "feature_panel.csv";
        write_file(fixture.feature_panel_csv, csv);
    }

    return fixture;
}

}  // namespace perceptlens
