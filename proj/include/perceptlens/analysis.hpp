#pragma once

// Judgment comparisons and reporting: confusion matrices, three-set overlap
// regions, misperception subsets, participant-grouped cross-validation with
// rank ROC-AUC, and coefficient tables.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "perceptlens/annotate.hpp"
#include "perceptlens/common.hpp"
#include "perceptlens/features.hpp"
#include "perceptlens/logit.hpp"

namespace perceptlens {

struct LengthMismatchError : Error {
    explicit LengthMismatchError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct EmptySubsetError : Error {
    explicit EmptySubsetError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct FoldTooSmallError : Error {
    explicit FoldTooSmallError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

// Dementia (1) is the positive label throughout.
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    std::size_t errors() const { return fp + fn; }
    double accuracy() const { return total() ? static_cast<double>(tp + tn) / total() : 0.0; }
    double false_negative_share() const {
        return errors() ? static_cast<double>(fn) / errors() : 0.0;
    }
    double false_positive_share() const {
        return errors() ? static_cast<double>(fp) / errors() : 0.0;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) {
        throw LengthMismatchError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                                  std::to_string(truth.size()) + " truths");
    }
    ConfusionMatrix m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1) {
            truth[i] == 1 ? ++m.tp : ++m.fp;
        } else {
            truth[i] == 1 ? ++m.fn : ++m.tn;
        }
    }
    return m;
}

// Region bitmask: clinical = 1, human = 2, llm = 4; index 0 is "none".
struct OverlapCounts {
    std::array<std::size_t, 8> regions{};

    std::size_t total() const { return std::accumulate(regions.begin(), regions.end(), std::size_t{0}); }

    std::size_t set_total(int bit) const {
        std::size_t sum = 0;
        for (int mask = 0; mask < 8; ++mask) {
            if (mask & bit) sum += regions[static_cast<std::size_t>(mask)];
        }
        return sum;
    }

    std::size_t clinical_total() const { return set_total(1); }

    // Clinically diagnosed cases outside (human AND llm): missed by at least
    // one perceiving source.
    std::size_t diagnosed_missed_by_perception() const {
        std::size_t sum = 0;
        for (int mask = 0; mask < 8; ++mask) {
            if ((mask & 1) && (mask & 6) != 6) sum += regions[static_cast<std::size_t>(mask)];
        }
        return sum;
    }
};

inline OverlapCounts overlap(const std::vector<int>& clinical, const std::vector<int>& human,
                             const std::vector<int>& llm) {
    if (clinical.size() != human.size() || clinical.size() != llm.size()) {
        throw LengthMismatchError("overlap: label vectors differ in length");
    }
    OverlapCounts counts;
    for (std::size_t i = 0; i < clinical.size(); ++i) {
        const int mask = (clinical[i] == 1 ? 1 : 0) | (human[i] == 1 ? 2 : 0) | (llm[i] == 1 ? 4 : 0);
        ++counts.regions[static_cast<std::size_t>(mask)];
    }
    return counts;
}

enum class FocalSource { Human, Llm };

inline std::string focal_source_name(FocalSource focal) {
    return focal == FocalSource::Human ? "human" : "llm";
}

struct MisperceptionSubset {
    FocalSource focal_source = FocalSource::Human;
    std::vector<std::string> transcript_ids;
    std::vector<int> outcome;  // the focal source's label on the subset
};

// Items where the focal source disagrees with both others while the two
// others agree with each other. Requires clinical labels on every item.
inline MisperceptionSubset misperception_subset(const std::vector<JudgmentSet>& judgments,
                                                FocalSource focal) {
    MisperceptionSubset subset;
    subset.focal_source = focal;
    for (const JudgmentSet& j : judgments) {
        if (!j.clinical) {
            throw ValidationError("misperception_subset: transcript '" + j.transcript_id +
                                  "' lacks a clinical label");
        }
        const int clinical = static_cast<int>(*j.clinical);
        const int focal_label = focal == FocalSource::Human ? j.human_majority : j.llm_majority;
        const int other = focal == FocalSource::Human ? j.llm_majority : j.human_majority;
        if (focal_label != other && focal_label != clinical && other == clinical) {
            subset.transcript_ids.push_back(j.transcript_id);
            subset.outcome.push_back(focal_label);
        }
    }
    if (subset.transcript_ids.empty()) {
        throw EmptySubsetError("misperception subset for focal source '" +
                               focal_source_name(focal) + "' is empty");
    }
    return subset;
}

// Mann-Whitney rank AUC with tie-averaged ranks, as a percentage.
inline double rank_roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw LengthMismatchError("rank_roc_auc: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mean_rank;
        i = j + 1;
    }

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) {
            positive_rank_sum += rank[k];
            ++positives;
        }
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw ValidationError("rank_roc_auc: needs both classes");
    }
    const double u = positive_rank_sum - static_cast<double>(positives) *
                                             (static_cast<double>(positives) + 1.0) / 2.0;
    return 100.0 * u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

struct FoldMetrics {
    std::size_t test_size = 0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, roc_auc = 0.0;
    bool auc_defined = true;
};

struct EvalReport {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, roc_auc = 0.0;  // percent
    std::vector<FoldMetrics> folds;
    std::vector<std::size_t> fold_sizes;
    std::uint64_t seed = 0;
};

struct CvOptions {
    std::size_t k = 5;
    std::uint64_t seed = 0;
};

struct CvRow {
    std::string row_id;
    std::string participant_id;
    std::vector<double> features;
    int outcome = 0;
};

namespace detail {

// Participants shuffled by seed, ordered by descending session count, then
// dealt round-robin so fold sizes stay balanced and no participant spans
// folds.
inline std::vector<std::vector<std::string>> assign_participant_folds(
    const std::map<std::string, std::size_t>& session_counts, std::size_t k, std::uint64_t seed) {
    std::vector<std::pair<std::string, std::size_t>> participants(session_counts.begin(),
                                                                  session_counts.end());
    std::mt19937_64 gen(seed);
    rng_shuffle(gen, participants);
    std::stable_sort(participants.begin(), participants.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::vector<std::string>> folds(k);
    for (std::size_t i = 0; i < participants.size(); ++i) {
        folds[i % k].push_back(participants[i].first);
    }
    return folds;
}

}  // namespace detail

// Per-fold logistic fits on a fixed feature set (no stepwise inside CV);
// positive-class metrics averaged over folds.
inline EvalReport grouped_cv_evaluate(const std::vector<CvRow>& rows,
                                      const std::vector<std::string>& feature_names,
                                      const CvOptions& options = {}) {
    if (feature_names.empty()) throw ValidationError("grouped_cv_evaluate: empty feature set");
    if (options.k < 2) throw ValidationError("grouped_cv_evaluate: k must be at least 2");

    std::map<std::string, std::size_t> session_counts;
    for (const CvRow& row : rows) ++session_counts[row.participant_id];
    if (session_counts.size() < options.k) {
        throw FoldTooSmallError("grouped_cv_evaluate: " + std::to_string(session_counts.size()) +
                                " participants cannot fill " + std::to_string(options.k) + " folds");
    }

    const auto folds = detail::assign_participant_folds(session_counts, options.k, options.seed);

    std::map<std::string, std::size_t> fold_of;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (const std::string& participant : folds[f]) fold_of[participant] = f;
    }

    EvalReport report;
    report.seed = options.seed;
    double acc = 0, prec = 0, rec = 0, f1 = 0, auc = 0;
    std::size_t auc_folds = 0;

    for (std::size_t f = 0; f < options.k; ++f) {
        std::vector<const CvRow*> train, test;
        for (const CvRow& row : rows) {
            (fold_of.at(row.participant_id) == f ? test : train).push_back(&row);
        }
        if (test.empty() || train.empty()) {
            throw FoldTooSmallError("grouped_cv_evaluate: fold " + std::to_string(f) + " is empty");
        }
        // leakage audit: a participant must not appear on both sides
        {
            std::set<std::string> train_participants;
            for (const CvRow* r : train) train_participants.insert(r->participant_id);
            for (const CvRow* r : test) {
                if (train_participants.count(r->participant_id)) {
                    throw ValidationError("participant leakage across folds: " + r->participant_id);
                }
            }
        }

        auto build = [&](const std::vector<const CvRow*>& subset) {
            DesignMatrix design;
            design.column_names = feature_names;
            design.X.resize(static_cast<Eigen::Index>(subset.size()),
                            static_cast<Eigen::Index>(feature_names.size()));
            design.y.resize(static_cast<Eigen::Index>(subset.size()));
            for (std::size_t i = 0; i < subset.size(); ++i) {
                design.row_ids.push_back(subset[i]->row_id);
                design.y(static_cast<Eigen::Index>(i)) = subset[i]->outcome;
                for (std::size_t j = 0; j < feature_names.size(); ++j) {
                    design.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        subset[i]->features[j];
                }
            }
            return design;
        };

        const DesignMatrix train_design = build(train);
        const DesignMatrix test_design = build(test);
        LogisticFit fit;
        try {
            fit = fit_logistic(train_design);
        } catch (const DegenerateOutcomeError&) {
            throw FoldTooSmallError("grouped_cv_evaluate: training outcome degenerate in fold " +
                                    std::to_string(f));
        }

        const Eigen::VectorXd probabilities = predict_probabilities(fit, test_design);
        std::vector<int> predictions(test.size()), truths(test.size());
        std::vector<double> scores(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            scores[i] = probabilities(static_cast<Eigen::Index>(i));
            predictions[i] = scores[i] >= 0.5 ? 1 : 0;
            truths[i] = test[i]->outcome;
        }

        const ConfusionMatrix cm = confusion(predictions, truths);
        FoldMetrics metrics;
        metrics.test_size = test.size();
        metrics.accuracy = 100.0 * cm.accuracy();
        metrics.precision = (cm.tp + cm.fp) ? 100.0 * cm.tp / static_cast<double>(cm.tp + cm.fp) : 0.0;
        metrics.recall = (cm.tp + cm.fn) ? 100.0 * cm.tp / static_cast<double>(cm.tp + cm.fn) : 0.0;
        metrics.f1 = (metrics.precision + metrics.recall > 0.0)
                         ? 2.0 * metrics.precision * metrics.recall /
                               (metrics.precision + metrics.recall)
                         : 0.0;
        const bool both_classes =
            std::count(truths.begin(), truths.end(), 1) > 0 &&
            std::count(truths.begin(), truths.end(), 0) > 0;
        if (both_classes) {
            metrics.roc_auc = rank_roc_auc(scores, truths);
            auc += metrics.roc_auc;
            ++auc_folds;
        } else {
            metrics.auc_defined = false;
        }

        acc += metrics.accuracy;
        prec += metrics.precision;
        rec += metrics.recall;
        f1 += metrics.f1;
        report.fold_sizes.push_back(test.size());
        report.folds.push_back(metrics);
    }

    const double k = static_cast<double>(options.k);
    report.accuracy = acc / k;
    report.precision = prec / k;
    report.recall = rec / k;
    report.f1 = f1 / k;
    report.roc_auc = auc_folds ? auc / static_cast<double>(auc_folds) : 0.0;
    return report;
}

struct NamedFit {
    std::string name;
    LogisticFit fit;
};

namespace detail {

struct CoefficientRow {
    std::string term;
    double beta, se, z, p, odds;
    std::string stars;
};

inline std::vector<CoefficientRow> coefficient_rows(const LogisticFit& fit) {
    std::vector<CoefficientRow> rows;
    for (std::size_t t = 1; t < fit.terms.size(); ++t) {
        const auto idx = static_cast<Eigen::Index>(t);
        rows.push_back({fit.terms[t], fit.beta(idx), fit.se(idx), fit.wald_z(idx),
                        fit.p_values(idx), odds_ratio(fit.beta(idx)),
                        significance_stars(fit.p_values(idx))});
    }
    std::sort(rows.begin(), rows.end(), [](const CoefficientRow& a, const CoefficientRow& b) {
        return a.p != b.p ? a.p < b.p : a.term < b.term;
    });
    // intercept last; reports focus on feature effects
    rows.push_back({fit.terms[0], fit.beta(0), fit.se(0), fit.wald_z(0), fit.p_values(0),
                    odds_ratio(fit.beta(0)), significance_stars(fit.p_values(0))});
    return rows;
}

}  // namespace detail

// CSV columns mirror the standard coefficient-table layout.
inline std::string coefficient_table_csv(const LogisticFit& fit) {
    std::string out = "feature,beta,se,wald_z,p,stars,odds_ratio\n";
    for (const auto& row : detail::coefficient_rows(fit)) {
        out += row.term + "," + format_double(row.beta, 6) + "," + format_double(row.se, 6) + "," +
               format_double(row.z, 4) + "," + format_double(row.p, 6) + "," + row.stars + "," +
               format_double(row.odds, 4) + "\n";
    }
    return out;
}

inline std::string coefficient_table_markdown(const LogisticFit& fit) {
    std::string out =
        "| feature | beta | SE | Wald z | p | stars | odds ratio |\n"
        "|---|---|---|---|---|---|---|\n";
    for (const auto& row : detail::coefficient_rows(fit)) {
        out += "| " + row.term + " | " + format_double(row.beta, 3) + " | " +
               format_double(row.se, 3) + " | " + format_double(row.z, 3) + " | " +
               format_double(row.p, 4) + " | " + row.stars + " | " + format_double(row.odds, 2) +
               " |\n";
    }
    return out;
}

// One table per judgment source plus a cross-source list of features
// significant in more than one final model.
inline std::string coefficient_report_markdown(const std::vector<NamedFit>& fits,
                                               double alpha = 0.05) {
    std::string out;
    for (const NamedFit& nf : fits) {
        out += "### " + nf.name + "\n\n";
        out += "McFadden R2: " + format_double(nf.fit.mcfadden_r2, 3) +
               "  (log-likelihood " + format_double(nf.fit.log_likelihood, 3) + ", null " +
               format_double(nf.fit.null_log_likelihood, 3) + ", n=" + std::to_string(nf.fit.n) +
               ")\n\n";
        out += coefficient_table_markdown(nf.fit);
        out += "\n";
    }

    std::map<std::string, std::vector<std::string>> significant_in;
    for (const NamedFit& nf : fits) {
        for (std::size_t t = 1; t < nf.fit.terms.size(); ++t) {
            if (nf.fit.p_values(static_cast<Eigen::Index>(t)) <= alpha) {
                significant_in[nf.fit.terms[t]].push_back(nf.name);
            }
        }
    }
    out += "### Features significant in multiple models\n\n";
    bool any = false;
    for (const auto& [term, sources] : significant_in) {
        if (sources.size() < 2) continue;
        any = true;
        out += "- " + term + ": ";
        for (std::size_t i = 0; i < sources.size(); ++i) {
            if (i) out += ", ";
            out += sources[i];
        }
        out += "\n";
    }
    if (!any) out += "(none)\n";
    return out;
}

}  // namespace perceptlens
