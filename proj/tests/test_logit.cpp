#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "perceptlens/logit.hpp"

using namespace perceptlens;

namespace {

DesignMatrix make_design(const std::vector<std::vector<double>>& columns,
                         const std::vector<double>& y) {
    DesignMatrix design;
    design.y.resize(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) design.y(static_cast<Eigen::Index>(i)) = y[i];
    design.X.resize(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        design.column_names.push_back("x" + std::to_string(j));
        for (std::size_t i = 0; i < y.size(); ++i) {
            design.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns[j][i];
        }
    }
    for (std::size_t i = 0; i < y.size(); ++i) design.row_ids.push_back("r" + std::to_string(i));
    return design;
}

// separation-free random binary design from a mild true model
DesignMatrix random_design(std::mt19937_64& gen, std::size_t n, std::size_t p) {
    while (true) {
        std::vector<std::vector<double>> columns(p, std::vector<double>(n));
        std::vector<double> y(n);
        std::vector<double> beta_true(p);
        for (std::size_t j = 0; j < p; ++j) beta_true[j] = -1.5 + 3.0 * rng_unit(gen);
        const double intercept = -0.5 + rng_unit(gen);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = intercept;
            for (std::size_t j = 0; j < p; ++j) {
                columns[j][i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
                eta += beta_true[j] * columns[j][i];
            }
            y[i] = rng_bernoulli(gen, 1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
        }
        DesignMatrix design = make_design(columns, y);
        // collinear columns would make the oracle comparison ill-posed
        if (p == 2) {
            bool identical = true, complementary = true;
            for (std::size_t i = 0; i < n; ++i) {
                identical &= columns[0][i] == columns[1][i];
                complementary &= columns[0][i] == 1.0 - columns[1][i];
            }
            if (identical || complementary) continue;
        }
        // a mixed outcome inside every predictor cell keeps the MLE interior
        if (oracles::all_cells_mixed(design)) return design;
    }
}

}  // namespace

TEST_CASE("intercept-only fit on a balanced outcome") {
    const DesignMatrix design = make_design({}, {0, 1});
    const LogisticFit fit = fit_logistic(design);
    REQUIRE(fit.converged);
    REQUIRE_THAT(fit.beta(0), Catch::Matchers::WithinAbs(0.0, 1e-10));
    REQUIRE_THAT(fit.mcfadden_r2, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("perfect separation yields a non-converged flagged fit") {
    const std::vector<double> x = {0, 0, 0, 1, 1, 1};
    const std::vector<double> y = {0, 0, 0, 1, 1, 1};
    const LogisticFit fit = fit_logistic(make_design({x}, y));
    REQUIRE_FALSE(fit.converged);
    REQUIRE(fit.separation_flags[0] == SeparationFlag::Complete);
}

TEST_CASE("six-point design matches the grid-search oracle") {
    // x = [0,0,1,1,0,1], y = [0,1,0,1,1,1]: both x-groups carry 2/3
    // positives, so the true optimum is beta0 = log 2, beta1 = 0
    const DesignMatrix design = make_design({{0, 0, 1, 1, 0, 1}}, {0, 1, 0, 1, 1, 1});
    const LogisticFit fit = fit_logistic(design);
    REQUIRE(fit.converged);

    const Eigen::VectorXd oracle = oracles::grid_search_logistic(design, -10.0, 10.0, 0.05, 1e-6);
    REQUIRE_THAT(fit.beta(0), Catch::Matchers::WithinAbs(oracle(0), 1e-4));
    REQUIRE_THAT(fit.beta(1), Catch::Matchers::WithinAbs(oracle(1), 1e-4));
    REQUIRE_THAT(fit.beta(0), Catch::Matchers::WithinAbs(std::log(2.0), 1e-6));
    REQUIRE_THAT(fit.beta(1), Catch::Matchers::WithinAbs(0.0, 1e-6));
}

TEST_CASE("gradient vanishes at the optimum and matches finite differences") {
    std::mt19937_64 gen(2024);
    for (int round = 0; round < 5; ++round) {
        const DesignMatrix design = random_design(gen, 40, 2);
        const LogisticFit fit = fit_logistic(design);
        REQUIRE(fit.converged);
        const Eigen::VectorXd gradient = log_likelihood_gradient(design, fit.beta);
        const Eigen::VectorXd fd = oracles::finite_difference_gradient(design, fit.beta);
        for (Eigen::Index j = 0; j < gradient.size(); ++j) {
            REQUIRE(std::fabs(gradient(j)) < 1e-6);
            REQUIRE(std::fabs(gradient(j) - fd(j)) <=
                    1e-5 * std::max(1.0, std::fabs(gradient(j))));
        }
    }
}

TEST_CASE("finite differences track the analytic gradient away from the optimum") {
    std::mt19937_64 gen(99);
    const DesignMatrix design = random_design(gen, 30, 2);
    Eigen::VectorXd beta(3);
    beta << 0.3, -0.7, 1.1;
    const Eigen::VectorXd analytic = log_likelihood_gradient(design, beta);
    const Eigen::VectorXd fd = oracles::finite_difference_gradient(design, beta);
    for (Eigen::Index j = 0; j < analytic.size(); ++j) {
        REQUIRE(std::fabs(analytic(j) - fd(j)) <= 1e-6 * std::max(1.0, std::fabs(analytic(j))));
    }
}

TEST_CASE("flipping the outcome negates every coefficient") {
    std::mt19937_64 gen(31);
    const DesignMatrix design = random_design(gen, 50, 2);
    DesignMatrix flipped = design;
    for (Eigen::Index i = 0; i < flipped.y.size(); ++i) flipped.y(i) = 1.0 - flipped.y(i);
    const LogisticFit fit = fit_logistic(design);
    const LogisticFit fit_flipped = fit_logistic(flipped);
    REQUIRE(fit.converged);
    REQUIRE(fit_flipped.converged);
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        REQUIRE_THAT(fit_flipped.beta(j), Catch::Matchers::WithinAbs(-fit.beta(j), 1e-6));
    }
}

TEST_CASE("nesting: model log-likelihood never falls below the null") {
    std::mt19937_64 gen(55);
    for (int round = 0; round < 10; ++round) {
        const DesignMatrix design = random_design(gen, 35, 2);
        const LogisticFit fit = fit_logistic(design);
        REQUIRE(fit.log_likelihood >= fit.null_log_likelihood - 1e-9);
        REQUIRE(fit.mcfadden_r2 >= 0.0);
        REQUIRE(fit.mcfadden_r2 < 1.0);
    }
}

TEST_CASE("degenerate outcomes and collinear columns are rejected") {
    REQUIRE_THROWS_AS(fit_logistic(make_design({{0, 1, 0}}, {1, 1, 1})), DegenerateOutcomeError);

    // duplicated column: the information matrix cannot be inverted
    const std::vector<double> x = {0, 1, 0, 1, 1, 0};
    const std::vector<double> y = {0, 1, 1, 0, 1, 0};
    try {
        fit_logistic(make_design({x, x}, y));
        FAIL("expected SingularInformationError");
    } catch (const SingularInformationError& e) {
        REQUIRE_FALSE(e.offending_columns.empty());
    }
}

TEST_CASE("mcfadden_r2 formula and validation") {
    REQUIRE(mcfadden_r2(-100.0, -100.0) == 0.0);
    REQUIRE_THAT(mcfadden_r2(-50.0, -100.0), Catch::Matchers::WithinAbs(0.5, 1e-12));
    REQUIRE_THROWS_AS(mcfadden_r2(-50.0, 100.0), InvalidLikelihoodsError);
    REQUIRE_THROWS_AS(mcfadden_r2(-150.0, -100.0), InvalidLikelihoodsError);
}

TEST_CASE("mcfadden report fixture renders to three decimals") {
    // formatting fixture: goodness-of-fit triple printed as the docs state
    REQUIRE(format_double(0.058, 3) == "0.058");
    REQUIRE(format_double(0.527, 3) == "0.527");
    REQUIRE(format_double(0.209, 3) == "0.209");
}

TEST_CASE("wald statistic examples") {
    const WaldResult a = wald(1.091, 0.217);
    REQUIRE_THAT(a.z, Catch::Matchers::WithinAbs(5.024, 0.02));
    const WaldResult b = wald(-1.567, 0.332);
    REQUIRE_THAT(b.z, Catch::Matchers::WithinAbs(-4.71, 0.02));
    const WaldResult c = wald(0.0, 1.0);
    REQUIRE(c.z == 0.0);
    REQUIRE(c.p == 1.0);
    REQUIRE_THROWS_AS(wald(1.0, 0.0), ValidationError);
}

TEST_CASE("odds ratio examples") {
    REQUIRE_THAT(odds_ratio(2.16), Catch::Matchers::WithinAbs(8.67, 0.01));
    REQUIRE_THAT(odds_ratio(-1.46), Catch::Matchers::WithinAbs(0.23, 0.01));
    REQUIRE(odds_ratio(0.0) == 1.0);
}

TEST_CASE("significance stars use strict boundaries") {
    REQUIRE(significance_stars(0.0003) == "***");
    REQUIRE(significance_stars(0.0144) == "*");
    REQUIRE(significance_stars(0.05) == "");
    REQUIRE(significance_stars(0.0099) == "**");
    REQUIRE(significance_stars(0.01) == "*");
    REQUIRE(significance_stars(0.001) == "**");
    REQUIRE(significance_stars(0.9) == "");
}

TEST_CASE("stepwise removes a pure-noise column") {
    std::mt19937_64 gen(404);
    const std::size_t n = 200;
    std::vector<double> signal(n), noise(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        signal[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
        noise[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;  // independent coin flips
        const double eta = -0.8 + 1.8 * signal[i];
        y[i] = rng_bernoulli(gen, 1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
    }
    DesignMatrix design = make_design({signal, noise}, y);
    design.column_names = {"signal", "noise"};
    const StepwiseTrace trace = stepwise_fit(design);
    bool noise_removed = false;
    for (const StepRecord& step : trace.steps) {
        if (step.removed_feature == "noise") noise_removed = true;
        REQUIRE(step.p_value > 0.05);
    }
    REQUIRE(noise_removed);
    // retained features are all significant
    const LogisticFit& final_fit = trace.final_fit;
    for (std::size_t t = 1; t < final_fit.terms.size(); ++t) {
        REQUIRE(final_fit.p_values(static_cast<Eigen::Index>(t)) <= 0.05);
    }
}

TEST_CASE("stepwise keeps everything when all columns are significant") {
    std::mt19937_64 gen(7);
    const std::size_t n = 400;
    std::vector<double> a(n), b(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
        b[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
        const double eta = -1.0 + 1.7 * a[i] + 1.4 * b[i];
        y[i] = rng_bernoulli(gen, 1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
    }
    const StepwiseTrace trace = stepwise_fit(make_design({a, b}, y));
    REQUIRE(trace.steps.empty());
    REQUIRE(trace.final_fit.terms.size() == 3);
}

TEST_CASE("alpha = 1 never removes anything") {
    std::mt19937_64 gen(12);
    const DesignMatrix design = random_design(gen, 40, 2);
    StepwiseOptions options;
    options.alpha = 1.0;
    const StepwiseTrace trace = stepwise_fit(design, options);
    REQUIRE(trace.steps.empty());
}

TEST_CASE("stepwise step count equals removal count and trace is consistent") {
    std::mt19937_64 gen(88);
    const DesignMatrix design = random_design(gen, 60, 2);
    const StepwiseTrace trace = stepwise_fit(design);
    const std::size_t retained = trace.final_fit.terms.size() - 1;
    REQUIRE(retained + trace.steps.size() + trace.excluded_separated.size() == 2);
}

TEST_CASE("forward stepwise admits a strong predictor") {
    std::mt19937_64 gen(5);
    const std::size_t n = 300;
    std::vector<double> strong(n), weak(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        strong[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
        weak[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
        const double eta = -1.0 + 2.0 * strong[i];
        y[i] = rng_bernoulli(gen, 1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
    }
    DesignMatrix design = make_design({strong, weak}, y);
    design.column_names = {"strong", "weak"};
    StepwiseOptions options;
    options.direction = StepwiseOptions::Direction::Forward;
    const StepwiseTrace trace = stepwise_fit(design, options);
    bool has_strong = false;
    for (const std::string& term : trace.final_fit.terms) has_strong |= term == "strong";
    REQUIRE(has_strong);
}

TEST_CASE("detect_separation distinguishes quasi and complete") {
    // value 0 always implies outcome 0, value 1 is mixed: quasi
    const std::vector<double> quasi = {0, 0, 0, 1, 1, 1, 1};
    const std::vector<double> y = {0, 0, 0, 0, 1, 1, 0};
    const auto flags = detect_separation(make_design({quasi}, y));
    REQUIRE(flags[0] == SeparationFlag::Quasi);

    const std::vector<double> independent = {0, 1, 0, 1, 0, 1, 0};
    REQUIRE(detect_separation(make_design({independent}, y))[0] == SeparationFlag::None);

    const std::vector<double> equal_to_y = y;
    REQUIRE(detect_separation(make_design({equal_to_y}, y))[0] == SeparationFlag::Complete);
}

TEST_CASE("stepwise excludes separated columns with a warning") {
    std::mt19937_64 gen(61);
    const std::size_t n = 80;
    std::vector<double> good(n), separating(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        good[i] = rng_bernoulli(gen, 0.5) ? 1.0 : 0.0;
        const double eta = -0.5 + 1.5 * good[i];
        y[i] = rng_bernoulli(gen, 1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
        separating[i] = y[i] == 1.0 ? 1.0 : (rng_bernoulli(gen, 0.4) ? 1.0 : 0.0);
        // separating == 0 -> y == 0 by construction
    }
    DesignMatrix design = make_design({good, separating}, y);
    design.column_names = {"good", "separating"};
    const StepwiseTrace trace = stepwise_fit(design);
    REQUIRE(trace.excluded_separated == std::vector<std::string>{"separating"});
    REQUIRE(trace.warnings.size() == 1);
    REQUIRE(trace.warnings[0].find("separating") != std::string::npos);
    for (const std::string& term : trace.final_fit.terms) {
        REQUIRE(term != "separating");
    }
}
