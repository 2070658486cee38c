#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "perceptlens/agreement.hpp"

using namespace perceptlens;

namespace {

// brute-force reference for the alternative annotator test: enumerate every
// leave-one-out reference by hand
AltTestResult brute_force_alt_test(const std::vector<int>& llm,
                                   const std::vector<std::vector<int>>& panel, double epsilon,
                                   TieMode tie) {
    const std::size_t items = panel.size();
    const std::size_t annotators = panel.front().size();
    AltTestResult result;
    result.epsilon = epsilon;
    std::size_t wins = 0;
    for (std::size_t j = 0; j < annotators; ++j) {
        std::size_t llm_hits = 0, own_hits = 0;
        for (std::size_t i = 0; i < items; ++i) {
            std::size_t ones = 0, count = 0;
            for (std::size_t r = 0; r < annotators; ++r) {
                if (r == j) continue;
                ones += static_cast<std::size_t>(panel[i][r]);
                ++count;
            }
            int reference;
            if (2 * ones > count) {
                reference = 1;
            } else if (2 * ones < count) {
                reference = 0;
            } else {
                reference = tie == TieMode::Dementia ? 1 : 0;
            }
            if (llm[i] == reference) ++llm_hits;
            if (panel[i][j] == reference) ++own_hits;
        }
        AnnotatorOutcome outcome;
        outcome.annotator_id = "a" + std::to_string(j);
        outcome.llm_alignment = static_cast<double>(llm_hits) / items;
        outcome.human_alignment = static_cast<double>(own_hits) / items;
        outcome.win = outcome.llm_alignment + epsilon >= outcome.human_alignment - 1e-12;
        wins += outcome.win;
        result.per_annotator_wins.push_back(outcome);
    }
    result.winning_rate = static_cast<double>(wins) / annotators;
    result.passed = result.winning_rate >= 0.5;
    return result;
}

std::vector<std::string> annotator_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("a" + std::to_string(i));
    return names;
}

}  // namespace

TEST_CASE("fleiss kappa is exactly 1 under perfect agreement") {
    std::vector<std::vector<int>> labels(6, std::vector<int>(4, 1));
    labels[1].assign(4, 0);
    labels[4].assign(4, 0);
    const AgreementReport report =
        fleiss_kappa(PanelTable::from_labels({"i0", "i1", "i2", "i3", "i4", "i5"}, labels, 2));
    REQUIRE(report.kappa == 1.0);
    REQUIRE(report.mean_observed_agreement == 1.0);
    REQUIRE_FALSE(report.degenerate_chance);
}

TEST_CASE("fleiss kappa matches the hand-derived 1/3 panel") {
    // 3 items, 2 raters, tallies (2,0), (0,2), (1,1):
    // P_i = 1, 1, 0 -> P̄ = 2/3; p = (1/2, 1/2) -> Pe = 1/2; kappa = 1/3
    const std::vector<std::vector<int>> labels = {{0, 0}, {1, 1}, {0, 1}};
    const AgreementReport report =
        fleiss_kappa(PanelTable::from_labels({"i0", "i1", "i2"}, labels, 2));
    REQUIRE_THAT(report.kappa, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(report.mean_observed_agreement, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    REQUIRE_THAT(report.expected_agreement, Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("fleiss kappa flags a single-category panel as degenerate") {
    const std::vector<std::vector<int>> labels(5, std::vector<int>(3, 0));
    const AgreementReport report = fleiss_kappa(
        PanelTable::from_labels({"i0", "i1", "i2", "i3", "i4"}, labels, 2));
    REQUIRE(report.degenerate_chance);
    REQUIRE(std::isnan(report.kappa));
}

TEST_CASE("fleiss kappa rejects unequal rater counts") {
    PanelTable panel;
    panel.item_ids = {"i0", "i1"};
    panel.n_raters = 3;
    panel.k_categories = 2;
    panel.counts = {{2, 1}, {1, 1}};
    REQUIRE_THROWS_AS(fleiss_kappa(panel), UnequalRaterCountsError);
    REQUIRE_THROWS_AS(PanelTable::from_labels({"i0", "i1"}, {{0, 1, 1}, {0, 1}}, 2),
                      UnequalRaterCountsError);
}

TEST_CASE("fleiss kappa is invariant under item order and category relabeling") {
    std::mt19937_64 gen(23);
    for (int round = 0; round < 20; ++round) {
        std::vector<std::vector<int>> labels;
        std::vector<std::string> ids;
        for (int i = 0; i < 12; ++i) {
            std::vector<int> row;
            for (int r = 0; r < 5; ++r) row.push_back(rng_bernoulli(gen, 0.4) ? 1 : 0);
            labels.push_back(row);
            ids.push_back("i" + std::to_string(i));
        }
        const double base = fleiss_kappa(PanelTable::from_labels(ids, labels, 2)).kappa;

        std::vector<std::size_t> order(labels.size());
        std::iota(order.begin(), order.end(), 0);
        rng_shuffle(gen, order);
        std::vector<std::vector<int>> permuted;
        for (std::size_t idx : order) permuted.push_back(labels[idx]);
        const double permuted_kappa = fleiss_kappa(PanelTable::from_labels(ids, permuted, 2)).kappa;

        std::vector<std::vector<int>> relabeled;
        for (const auto& row : labels) {
            std::vector<int> flipped;
            for (int v : row) flipped.push_back(1 - v);
            relabeled.push_back(flipped);
        }
        const double relabeled_kappa =
            fleiss_kappa(PanelTable::from_labels(ids, relabeled, 2)).kappa;

        if (!std::isnan(base)) {
            REQUIRE_THAT(permuted_kappa, Catch::Matchers::WithinAbs(base, 1e-12));
            REQUIRE_THAT(relabeled_kappa, Catch::Matchers::WithinAbs(base, 1e-12));
        }
    }
}

TEST_CASE("alt test: an LLM identical to every human always passes") {
    const std::vector<std::vector<int>> panel = {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {0, 0, 0}};
    const std::vector<int> llm = {1, 0, 1, 0};
    const AltTestResult result = alt_annotator_test(llm, annotator_names(3), panel);
    REQUIRE(result.winning_rate == 1.0);
    REQUIRE(result.passed);
    for (const AnnotatorOutcome& o : result.per_annotator_wins) {
        REQUIRE(o.llm_alignment == o.human_alignment);
    }
}

TEST_CASE("alt test: an adversarial LLM fails at small epsilon") {
    const std::vector<std::vector<int>> panel = {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {1, 1, 1}};
    const std::vector<int> llm = {0, 1, 0, 0};
    AltTestOptions options;
    options.epsilon = 0.1;
    const AltTestResult result = alt_annotator_test(llm, annotator_names(3), panel, options);
    REQUIRE(result.winning_rate == 0.0);
    REQUIRE_FALSE(result.passed);
}

TEST_CASE("alt test matches brute-force enumeration on a deviating panel") {
    // 3 annotators, 4 items, annotator 2 deviates on items 1 and 3; the LLM
    // matches the full-panel majority everywhere
    const std::vector<std::vector<int>> panel = {
        {1, 1, 1},
        {0, 0, 1},
        {0, 0, 0},
        {1, 1, 0},
    };
    const std::vector<int> llm = {1, 0, 0, 1};
    AltTestOptions options;
    options.epsilon = 0.1;
    options.tie = TieMode::Healthy;
    const AltTestResult expected = brute_force_alt_test(llm, panel, 0.1, TieMode::Healthy);
    const AltTestResult actual = alt_annotator_test(llm, annotator_names(3), panel, options);
    REQUIRE(actual.winning_rate == expected.winning_rate);
    for (std::size_t j = 0; j < 3; ++j) {
        REQUIRE_THAT(actual.per_annotator_wins[j].llm_alignment,
                     Catch::Matchers::WithinAbs(expected.per_annotator_wins[j].llm_alignment, 1e-12));
        REQUIRE_THAT(actual.per_annotator_wins[j].human_alignment,
                     Catch::Matchers::WithinAbs(expected.per_annotator_wins[j].human_alignment, 1e-12));
        REQUIRE(actual.per_annotator_wins[j].win == expected.per_annotator_wins[j].win);
    }
}

TEST_CASE("alt test winning rate is monotone in epsilon and certain at epsilon 1") {
    std::mt19937_64 gen(91);
    for (int panel_no = 0; panel_no < 5; ++panel_no) {
        std::vector<std::vector<int>> panel;
        std::vector<int> llm;
        for (int i = 0; i < 12; ++i) {
            std::vector<int> row;
            for (int r = 0; r < 4; ++r) row.push_back(rng_bernoulli(gen, 0.5) ? 1 : 0);
            panel.push_back(row);
            llm.push_back(rng_bernoulli(gen, 0.5) ? 1 : 0);
        }
        double previous = -1.0;
        for (double epsilon : {0.0, 0.05, 0.1, 0.5, 1.0}) {
            AltTestOptions options;
            options.epsilon = epsilon;
            const AltTestResult result =
                alt_annotator_test(llm, annotator_names(4), panel, options);
            REQUIRE(result.winning_rate >= previous);
            previous = result.winning_rate;
            if (epsilon == 1.0) REQUIRE(result.passed);
        }
    }
}

TEST_CASE("alt test requires a full panel of at least three annotators") {
    REQUIRE_THROWS_AS(alt_annotator_test({1, 0}, annotator_names(2), {{1, 0}, {0, 1}}),
                      InsufficientPanelError);
    REQUIRE_THROWS_AS(alt_annotator_test({1, 0}, annotator_names(3), {{1, 0, 1}, {0, 1}}),
                      InsufficientPanelError);
}

TEST_CASE("pearson matrix basics") {
    const std::vector<int> x = {0, 0, 1, 1};
    std::vector<NamedColumn> columns = {{"x", x},
                                        {"not_x", {1, 1, 0, 0}},
                                        {"y", {0, 1, 0, 1}}};
    const CorrelationResult result = pearson_matrix(columns);
    REQUIRE(result.r[0][0] == 1.0);
    REQUIRE_THAT(result.r[0][1], Catch::Matchers::WithinAbs(-1.0, 1e-12));
    REQUIRE_THAT(result.r[0][2], Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE(result.p[0][1] == 0.0);
    REQUIRE_THAT(result.p[0][2], Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("pearson matrix is symmetric with unit diagonal and r in [-1,1]") {
    std::mt19937_64 gen(7);
    std::vector<NamedColumn> columns;
    for (int c = 0; c < 6; ++c) {
        NamedColumn col{"c" + std::to_string(c), {}};
        for (int i = 0; i < 40; ++i) col.values.push_back(rng_bernoulli(gen, 0.3 + 0.1 * c) ? 1 : 0);
        columns.push_back(col);
    }
    const CorrelationResult result = pearson_matrix(columns);
    for (std::size_t a = 0; a < columns.size(); ++a) {
        if (result.constant_flags[a]) continue;
        REQUIRE(result.r[a][a] == 1.0);
        for (std::size_t b = 0; b < columns.size(); ++b) {
            if (result.constant_flags[b]) continue;
            REQUIRE(result.r[a][b] == result.r[b][a]);
            REQUIRE(result.r[a][b] >= -1.0);
            REQUIRE(result.r[a][b] <= 1.0);
            REQUIRE(result.p[a][b] >= 0.0);
            REQUIRE(result.p[a][b] <= 1.0);
        }
    }
}

TEST_CASE("pearson p-value agrees with the exact t transform") {
    // r = 0.5, n = 20 -> t = 0.5 * sqrt(18 / 0.75) = 2.449...; two-sided p
    // from Student t with 18 df is 0.0247696 (checked against an independent
    // statistics package)
    const double t = 0.5 * std::sqrt(18.0 / 0.75);
    const double p = student_t_two_sided_p(t, 18.0);
    REQUIRE_THAT(p, Catch::Matchers::WithinAbs(0.0247696, 1e-6));
}

TEST_CASE("constant columns are flagged and their pairs skipped") {
    std::vector<NamedColumn> columns = {{"c", {1, 1, 1, 1}}, {"x", {0, 1, 0, 1}}};
    const CorrelationResult result = pearson_matrix(columns);
    REQUIRE(result.constant_flags[0]);
    REQUIRE_FALSE(result.constant_flags[1]);
    REQUIRE(std::isnan(result.r[0][1]));
    REQUIRE(result.r[1][1] == 1.0);
}

TEST_CASE("permutation p-values approximate the analytic ones") {
    std::mt19937_64 gen(3);
    NamedColumn a{"a", {}}, b{"b", {}};
    for (int i = 0; i < 60; ++i) {
        const int base = rng_bernoulli(gen, 0.5) ? 1 : 0;
        a.values.push_back(base);
        b.values.push_back(rng_bernoulli(gen, 0.25) ? 1 - base : base);
    }
    PermutationOptions permutation;
    permutation.enabled = true;
    permutation.permutations = 4000;
    permutation.seed = 12;
    const CorrelationResult exact = pearson_matrix({a, b});
    const CorrelationResult permuted = pearson_matrix({a, b}, permutation);
    REQUIRE_THAT(permuted.p[0][1], Catch::Matchers::WithinAbs(exact.p[0][1], 0.02));
}
