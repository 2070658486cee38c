#pragma once

// Annotation-quality statistics: Fleiss' kappa over fixed-size rater panels,
// the epsilon-margin alternative annotator test (leave-one-annotator-out,
// majority reference, alignment accuracy), and Pearson correlations with
// t-transform p-values.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "perceptlens/common.hpp"
#include "perceptlens/stats_math.hpp"

namespace perceptlens {

struct UnequalRaterCountsError : Error {
    explicit UnequalRaterCountsError(const std::string& what)
        : Error(ExitCode::Validation, what) {}
};
struct InsufficientPanelError : Error {
    explicit InsufficientPanelError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct TieError : Error {
    explicit TieError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

enum class TieMode { Error, Dementia, Healthy };

inline TieMode parse_tie_mode(const std::string& name) {
    if (name == "error") return TieMode::Error;
    if (name == "dementia") return TieMode::Dementia;
    if (name == "healthy") return TieMode::Healthy;
    throw ValidationError("unknown tie mode: '" + name + "' (expected error|dementia|healthy)");
}

inline std::string tie_mode_name(TieMode mode) {
    switch (mode) {
        case TieMode::Error: return "error";
        case TieMode::Dementia: return "dementia";
        case TieMode::Healthy: return "healthy";
    }
    return "?";
}

// Strict majority of binary votes; equal counts follow the tie mode.
inline int majority_vote(const std::vector<int>& votes, TieMode tie = TieMode::Error) {
    if (votes.empty()) throw ValidationError("majority_vote: empty vote list");
    std::size_t ones = 0;
    for (int v : votes) {
        if (v != 0 && v != 1) throw ValidationError("majority_vote: votes must be 0/1");
        ones += static_cast<std::size_t>(v);
    }
    const std::size_t zeros = votes.size() - ones;
    if (ones > zeros) return 1;
    if (zeros > ones) return 0;
    switch (tie) {
        case TieMode::Dementia: return 1;
        case TieMode::Healthy: return 0;
        case TieMode::Error: break;
    }
    throw TieError("majority_vote: tie among " + std::to_string(votes.size()) + " votes");
}

// Items x categories tally table with a fixed rater count per item.
struct PanelTable {
    std::vector<std::string> item_ids;
    std::size_t n_raters = 0;
    std::size_t k_categories = 0;
    std::vector<std::vector<std::size_t>> counts;  // per item, per category

    // rows = items, each a full set of per-rater category labels in [0, k)
    static PanelTable from_labels(std::vector<std::string> item_ids,
                                  const std::vector<std::vector<int>>& labels,
                                  std::size_t k_categories) {
        if (labels.empty()) throw ValidationError("panel has no items");
        if (k_categories < 2) throw ValidationError("panel needs at least two categories");
        PanelTable panel;
        panel.item_ids = std::move(item_ids);
        panel.k_categories = k_categories;
        panel.n_raters = labels.front().size();
        if (panel.n_raters < 2) throw ValidationError("panel needs at least two raters");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i].size() != panel.n_raters) {
                throw UnequalRaterCountsError("item " + std::to_string(i) + " has " +
                                              std::to_string(labels[i].size()) + " ratings, expected " +
                                              std::to_string(panel.n_raters));
            }
            std::vector<std::size_t> tally(k_categories, 0);
            for (int label : labels[i]) {
                if (label < 0 || static_cast<std::size_t>(label) >= k_categories) {
                    throw ValidationError("panel label out of range: " + std::to_string(label));
                }
                ++tally[static_cast<std::size_t>(label)];
            }
            panel.counts.push_back(std::move(tally));
        }
        return panel;
    }
};

struct AgreementReport {
    double kappa = 0.0;
    std::size_t n_items = 0;
    std::size_t n_raters = 0;
    std::size_t k_categories = 0;
    double mean_observed_agreement = 0.0;
    double expected_agreement = 0.0;
    bool degenerate_chance = false;  // all ratings in one category; kappa undefined
};

inline AgreementReport fleiss_kappa(const PanelTable& panel) {
    const std::size_t n = panel.n_raters;
    const std::size_t big_n = panel.counts.size();
    if (big_n == 0) throw ValidationError("fleiss_kappa: empty panel");
    if (n < 2) throw UnequalRaterCountsError("fleiss_kappa: need at least 2 raters per item");

    double p_bar = 0.0;
    std::vector<double> category_share(panel.k_categories, 0.0);
    for (const auto& tally : panel.counts) {
        std::size_t row_sum = 0;
        double agree = 0.0;
        for (std::size_t j = 0; j < panel.k_categories; ++j) {
            row_sum += tally[j];
            agree += static_cast<double>(tally[j]) * static_cast<double>(tally[j] - (tally[j] ? 1 : 0));
            category_share[j] += static_cast<double>(tally[j]);
        }
        if (row_sum != n) {
            throw UnequalRaterCountsError("fleiss_kappa: item tally sums to " +
                                          std::to_string(row_sum) + ", expected " + std::to_string(n));
        }
        p_bar += agree / (static_cast<double>(n) * static_cast<double>(n - 1));
    }
    p_bar /= static_cast<double>(big_n);

    double p_e = 0.0;
    for (double& share : category_share) {
        share /= static_cast<double>(big_n) * static_cast<double>(n);
        p_e += share * share;
    }

    AgreementReport report;
    report.n_items = big_n;
    report.n_raters = n;
    report.k_categories = panel.k_categories;
    report.mean_observed_agreement = p_bar;
    report.expected_agreement = p_e;
    if (p_e >= 1.0 - 1e-15) {
        report.degenerate_chance = true;
        report.kappa = std::numeric_limits<double>::quiet_NaN();
    } else {
        report.kappa = (p_bar - p_e) / (1.0 - p_e);
    }
    return report;
}

enum class AlignmentMetric { Accuracy, F1 };

inline AlignmentMetric parse_alignment_metric(const std::string& name) {
    if (name == "accuracy") return AlignmentMetric::Accuracy;
    if (name == "f1") return AlignmentMetric::F1;
    throw ValidationError("unknown alignment metric: '" + name + "' (expected accuracy|f1)");
}

struct AltTestOptions {
    double epsilon = 0.1;
    TieMode tie = TieMode::Error;
    AlignmentMetric alignment = AlignmentMetric::Accuracy;
};

struct AnnotatorOutcome {
    std::string annotator_id;
    double llm_alignment = 0.0;
    double human_alignment = 0.0;
    bool win = false;
};

struct AltTestResult {
    double epsilon = 0.0;
    std::vector<AnnotatorOutcome> per_annotator_wins;
    double winning_rate = 0.0;
    bool passed = false;
};

namespace detail {

inline double alignment_score(const std::vector<int>& labels, const std::vector<int>& reference,
                              AlignmentMetric metric) {
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == reference[i]) ++correct;
        if (labels[i] == 1 && reference[i] == 1) ++tp;
        if (labels[i] == 1 && reference[i] == 0) ++fp;
        if (labels[i] == 0 && reference[i] == 1) ++fn;
    }
    if (metric == AlignmentMetric::Accuracy) {
        return static_cast<double>(correct) / static_cast<double>(labels.size());
    }
    return tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace detail

// For each human annotator j: the reference is the item-wise majority of the
// remaining annotators; j "wins" for the LLM when llm_alignment + epsilon >=
// human_alignment. Passing means the LLM wins against at least half the panel.
inline AltTestResult alt_annotator_test(const std::vector<int>& llm_labels,
                                        const std::vector<std::string>& annotator_ids,
                                        const std::vector<std::vector<int>>& panel_labels,
                                        const AltTestOptions& options = {}) {
    const std::size_t items = llm_labels.size();
    const std::size_t annotators = annotator_ids.size();
    if (annotators < 3) {
        throw InsufficientPanelError("alternative annotator test needs at least 3 annotators, got " +
                                     std::to_string(annotators));
    }
    if (panel_labels.size() != items) {
        throw ValidationError("panel rows must match LLM label count");
    }
    for (std::size_t i = 0; i < items; ++i) {
        if (panel_labels[i].size() != annotators) {
            throw InsufficientPanelError("item " + std::to_string(i) +
                                         " lacks a label from every annotator");
        }
    }
    if (options.epsilon < 0.0) throw ValidationError("epsilon must be non-negative");

    AltTestResult result;
    result.epsilon = options.epsilon;
    std::size_t wins = 0;
    for (std::size_t j = 0; j < annotators; ++j) {
        std::vector<int> reference(items), own(items);
        for (std::size_t i = 0; i < items; ++i) {
            std::vector<int> others;
            others.reserve(annotators - 1);
            for (std::size_t r = 0; r < annotators; ++r) {
                if (r != j) others.push_back(panel_labels[i][r]);
            }
            reference[i] = majority_vote(others, options.tie);
            own[i] = panel_labels[i][j];
        }
        AnnotatorOutcome outcome;
        outcome.annotator_id = annotator_ids[j];
        outcome.llm_alignment = detail::alignment_score(llm_labels, reference, options.alignment);
        outcome.human_alignment = detail::alignment_score(own, reference, options.alignment);
        outcome.win = outcome.llm_alignment + options.epsilon >= outcome.human_alignment - 1e-12;
        wins += outcome.win ? 1u : 0u;
        result.per_annotator_wins.push_back(std::move(outcome));
    }
    result.winning_rate = static_cast<double>(wins) / static_cast<double>(annotators);
    result.passed = result.winning_rate >= 0.5;
    return result;
}

struct NamedColumn {
    std::string name;
    std::vector<int> values;  // {0,1}
};

struct PermutationOptions {
    bool enabled = false;
    std::size_t permutations = 2000;
    std::uint64_t seed = 0;
};

struct CorrelationResult {
    std::vector<std::string> names;
    std::vector<std::vector<double>> r;        // symmetric, unit diagonal
    std::vector<std::vector<double>> p;        // two-sided
    std::vector<bool> constant_flags;          // correlation undefined for these
    std::size_t n = 0;
};

// Pearson r over binary columns; p from the exact t transform with n-2 df,
// or from a seeded permutation test when requested.
inline CorrelationResult pearson_matrix(const std::vector<NamedColumn>& columns,
                                        const PermutationOptions& permutation = {}) {
    if (columns.empty()) throw ValidationError("pearson_matrix: no columns");
    const std::size_t n = columns.front().values.size();
    if (n < 3) throw ValidationError("pearson_matrix: need at least 3 observations");
    for (const NamedColumn& c : columns) {
        if (c.values.size() != n) {
            throw ValidationError("pearson_matrix: column '" + c.name + "' has wrong length");
        }
    }

    const std::size_t m = columns.size();
    CorrelationResult result;
    result.n = n;
    result.names.reserve(m);
    for (const NamedColumn& c : columns) result.names.push_back(c.name);
    result.constant_flags.resize(m, false);

    std::vector<double> mean(m, 0.0), sd(m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
        for (int v : columns[a].values) mean[a] += v;
        mean[a] /= static_cast<double>(n);
        double ss = 0.0;
        for (int v : columns[a].values) ss += (v - mean[a]) * (v - mean[a]);
        sd[a] = std::sqrt(ss);
        if (sd[a] <= 0.0) result.constant_flags[a] = true;
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    result.r.assign(m, std::vector<double>(m, nan));
    result.p.assign(m, std::vector<double>(m, nan));

    auto pearson_r = [&](std::size_t a, std::size_t b) {
        double cov = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cov += (columns[a].values[i] - mean[a]) * (columns[b].values[i] - mean[b]);
        }
        return cov / (sd[a] * sd[b]);
    };

    std::mt19937_64 gen(permutation.seed);
    for (std::size_t a = 0; a < m; ++a) {
        if (result.constant_flags[a]) continue;
        result.r[a][a] = 1.0;
        result.p[a][a] = 0.0;
        for (std::size_t b = a + 1; b < m; ++b) {
            if (result.constant_flags[b]) continue;
            double r = pearson_r(a, b);
            r = std::min(1.0, std::max(-1.0, r));
            double p;
            if (permutation.enabled) {
                std::vector<int> shuffled = columns[b].values;
                std::size_t at_least = 0;
                const double observed = std::fabs(r);
                for (std::size_t it = 0; it < permutation.permutations; ++it) {
                    rng_shuffle(gen, shuffled);
                    double cov = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        cov += (columns[a].values[i] - mean[a]) * (shuffled[i] - mean[b]);
                    }
                    if (std::fabs(cov / (sd[a] * sd[b])) >= observed - 1e-12) ++at_least;
                }
                p = static_cast<double>(1 + at_least) /
                    static_cast<double>(1 + permutation.permutations);
            } else if (std::fabs(r) >= 1.0 - 1e-15) {
                p = 0.0;
            } else {
                const double df = static_cast<double>(n - 2);
                const double t = r * std::sqrt(df / (1.0 - r * r));
                p = student_t_two_sided_p(t, df);
            }
            result.r[a][b] = result.r[b][a] = r;
            result.p[a][b] = result.p[b][a] = p;
        }
    }
    return result;
}

}  // namespace perceptlens
