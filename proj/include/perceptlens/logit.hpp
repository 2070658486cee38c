#pragma once

// Maximum-likelihood logistic regression by iteratively reweighted least
// squares, with Wald inference, McFadden pseudo-R2, backward-stepwise
// elimination and quasi/complete separation detection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perceptlens/common.hpp"
#include "perceptlens/stats_math.hpp"

namespace perceptlens {

struct DegenerateOutcomeError : Error {
    explicit DegenerateOutcomeError(const std::string& what) : Error(ExitCode::Validation, what) {}
};
struct SingularInformationError : Error {
    SingularInformationError(const std::string& what, std::vector<std::string> columns)
        : Error(ExitCode::Validation, what), offending_columns(std::move(columns)) {}
    std::vector<std::string> offending_columns;
};
struct InvalidLikelihoodsError : Error {
    explicit InvalidLikelihoodsError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

struct DesignMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> column_names;  // intercept is implicit and always included
    Eigen::MatrixXd X;                      // n x p, entries in {0,1}
    Eigen::VectorXd y;                      // entries in {0,1}

    std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t p() const { return static_cast<std::size_t>(X.cols()); }

    DesignMatrix with_columns(const std::vector<std::string>& keep) const {
        DesignMatrix out;
        out.row_ids = row_ids;
        out.y = y;
        out.column_names = keep;
        out.X.resize(X.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const auto it = std::find(column_names.begin(), column_names.end(), keep[k]);
            if (it == column_names.end()) throw ValidationError("unknown design column: " + keep[k]);
            out.X.col(static_cast<Eigen::Index>(k)) =
                X.col(static_cast<Eigen::Index>(it - column_names.begin()));
        }
        return out;
    }
};

enum class SeparationFlag { None, Quasi, Complete };

// A column separates when a value level co-occurs with only one outcome
// class: one pure level is quasi separation, both pure is complete.
inline std::vector<SeparationFlag> detect_separation(const DesignMatrix& design) {
    std::vector<SeparationFlag> flags(design.p(), SeparationFlag::None);
    for (std::size_t j = 0; j < design.p(); ++j) {
        bool level_seen[2] = {false, false};
        bool saw_y0[2] = {false, false};
        bool saw_y1[2] = {false, false};
        for (Eigen::Index i = 0; i < design.X.rows(); ++i) {
            const int level = design.X(i, static_cast<Eigen::Index>(j)) > 0.5 ? 1 : 0;
            level_seen[level] = true;
            (design.y(i) > 0.5 ? saw_y1 : saw_y0)[level] = true;
        }
        const bool pure0 = level_seen[0] && (saw_y0[0] != saw_y1[0]);
        const bool pure1 = level_seen[1] && (saw_y0[1] != saw_y1[1]);
        if (pure0 && pure1) {
            flags[j] = SeparationFlag::Complete;
        } else if (pure0 || pure1) {
            flags[j] = SeparationFlag::Quasi;
        }
    }
    return flags;
}

struct LogisticFit {
    std::vector<std::string> terms;  // "(intercept)" first, then column names
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd wald_z;
    Eigen::VectorXd p_values;
    double log_likelihood = 0.0;
    double null_log_likelihood = 0.0;
    double mcfadden_r2 = 0.0;
    std::size_t n = 0;
    bool converged = false;
    int iterations = 0;
    std::vector<SeparationFlag> separation_flags;  // per non-intercept column

    double coefficient(const std::string& term) const {
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (terms[i] == term) return beta(static_cast<Eigen::Index>(i));
        }
        throw ValidationError("fit has no term '" + term + "'");
    }
};

struct FitOptions {
    double tolerance = 1e-8;  // max absolute coefficient change
    int max_iterations = 100;
};

inline constexpr const char* kInterceptTerm = "(intercept)";
inline constexpr double kProbClamp = 1e-12;

namespace detail {

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

inline double sigmoid(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

inline double bernoulli_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double p = clamp_prob(sigmoid(eta(i)));
        ll += y(i) > 0.5 ? std::log(p) : std::log(1.0 - p);
    }
    return ll;
}

// Rank check on the intercept-augmented design; names the dependent columns.
inline void check_design_rank(const DesignMatrix& design, const Eigen::MatrixXd& A) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    if (rank == A.cols()) return;
    std::vector<std::string> offending;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = rank; k < A.cols(); ++k) {
        const Eigen::Index col = perm(k);
        offending.push_back(col == 0 ? kInterceptTerm
                                     : design.column_names[static_cast<std::size_t>(col - 1)]);
    }
    std::sort(offending.begin(), offending.end());
    std::string what = "singular information: linearly dependent columns:";
    for (const std::string& c : offending) what += " " + c;
    throw SingularInformationError(what, std::move(offending));
}

}  // namespace detail

inline double mcfadden_r2(double ll_model, double ll_null) {
    if (!(ll_null < 0.0)) {
        throw InvalidLikelihoodsError("mcfadden_r2: null log-likelihood must be negative");
    }
    if (ll_model < ll_null - 1e-9) {
        throw InvalidLikelihoodsError("mcfadden_r2: model log-likelihood below null");
    }
    return 1.0 - ll_model / ll_null;
}

struct WaldResult {
    double z;
    double p;
};

inline WaldResult wald(double beta, double se) {
    if (!(se > 0.0)) throw ValidationError("wald: standard error must be positive");
    const double z = beta / se;
    return WaldResult{z, normal_two_sided_p(z)};
}

inline double odds_ratio(double beta) { return std::exp(beta); }

// Strict boundaries: p == 0.05 earns no star.
inline std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

// Newton/IRLS from beta = 0. Non-convergence (typically separation) yields
// converged=false with separation_flags filled rather than an exception.
inline LogisticFit fit_logistic(const DesignMatrix& design, const FitOptions& options = {}) {
    const Eigen::Index n = design.X.rows();
    const Eigen::Index p = design.X.cols();
    if (n == 0) throw ValidationError("fit_logistic: empty design");
    if (static_cast<std::size_t>(p) != design.column_names.size()) {
        throw ValidationError("fit_logistic: column_names size mismatch");
    }

    const double y_sum = design.y.sum();
    if (y_sum <= 0.0 || y_sum >= static_cast<double>(n)) {
        throw DegenerateOutcomeError("outcome vector contains a single class");
    }

    Eigen::MatrixXd A(n, p + 1);
    A.col(0) = Eigen::VectorXd::Ones(n);
    if (p > 0) A.rightCols(p) = design.X;
    detail::check_design_rank(design, A);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    bool converged = false;
    int iter = 0;
    Eigen::MatrixXd information(p + 1, p + 1);

    while (iter < options.max_iterations) {
        ++iter;
        const Eigen::VectorXd eta = A * beta;
        Eigen::VectorXd mu(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu(i) = detail::clamp_prob(detail::sigmoid(eta(i)));
            w(i) = mu(i) * (1.0 - mu(i));
        }
        const Eigen::VectorXd gradient = A.transpose() * (design.y - mu);
        information = A.transpose() * w.asDiagonal() * A;

        const Eigen::VectorXd delta = information.ldlt().solve(gradient);
        if (!delta.allFinite()) break;
        beta += delta;
        if (delta.cwiseAbs().maxCoeff() < options.tolerance) {
            converged = true;
            break;
        }
    }

    LogisticFit fit;
    fit.terms.push_back(kInterceptTerm);
    for (const std::string& c : design.column_names) fit.terms.push_back(c);
    fit.beta = beta;
    fit.n = static_cast<std::size_t>(n);
    fit.converged = converged;
    fit.iterations = iter;
    fit.separation_flags = detect_separation(design);

    // observed information at the optimum
    {
        const Eigen::VectorXd eta = A * beta;
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mu = detail::clamp_prob(detail::sigmoid(eta(i)));
            w(i) = mu * (1.0 - mu);
        }
        information = A.transpose() * w.asDiagonal() * A;
        fit.log_likelihood = detail::bernoulli_log_likelihood(design.y, eta);
    }

    const Eigen::MatrixXd covariance =
        information.ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
    fit.se.resize(p + 1);
    fit.wald_z.resize(p + 1);
    fit.p_values.resize(p + 1);
    for (Eigen::Index j = 0; j <= p; ++j) {
        const double var = covariance(j, j);
        fit.se(j) = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
        if (fit.se(j) > 0.0) {
            const WaldResult wr = wald(beta(j), fit.se(j));
            fit.wald_z(j) = wr.z;
            fit.p_values(j) = wr.p;
        } else {
            fit.wald_z(j) = std::numeric_limits<double>::quiet_NaN();
            fit.p_values(j) = 1.0;
        }
    }

    // intercept-only null model has a closed-form optimum
    const double pbar = y_sum / static_cast<double>(n);
    fit.null_log_likelihood =
        static_cast<double>(n) * (pbar * std::log(pbar) + (1.0 - pbar) * std::log(1.0 - pbar));
    fit.mcfadden_r2 =
        converged ? mcfadden_r2(std::max(fit.log_likelihood, fit.null_log_likelihood),
                                fit.null_log_likelihood)
                  : 1.0 - fit.log_likelihood / fit.null_log_likelihood;
    return fit;
}

struct StepRecord {
    std::string removed_feature;
    double p_value = 0.0;  // the feature's p at removal time
    double refit_log_likelihood = 0.0;
};

struct StepwiseOptions {
    double alpha = 0.05;
    enum class Direction { Backward, Forward } direction = Direction::Backward;
    FitOptions fit;
};

struct StepwiseTrace {
    std::vector<StepRecord> steps;
    LogisticFit final_fit;
    std::vector<std::string> excluded_separated;  // removed before fitting
    std::vector<std::string> excluded_collinear;  // aliased out of a rank-deficient design
    std::vector<std::string> warnings;
};

namespace detail {

// Largest-p non-intercept term above alpha; lexicographic tie-break.
inline int worst_term(const LogisticFit& fit, double alpha) {
    int worst = -1;
    for (std::size_t t = 1; t < fit.terms.size(); ++t) {
        const double p = fit.p_values(static_cast<Eigen::Index>(t));
        if (!(p > alpha)) continue;
        if (worst < 0 || p > fit.p_values(worst) + 1e-15 ||
            (std::fabs(p - fit.p_values(worst)) <= 1e-15 && fit.terms[t] < fit.terms[worst])) {
            worst = static_cast<int>(t);
        }
    }
    return worst;
}

inline StepwiseTrace stepwise_backward(const DesignMatrix& design, const StepwiseOptions& options,
                                       StepwiseTrace trace, std::vector<std::string> columns) {
    DesignMatrix current = design.with_columns(columns);
    LogisticFit fit = fit_logistic(current, options.fit);
    while (true) {
        const int worst = worst_term(fit, options.alpha);
        if (worst < 0) break;
        StepRecord step;
        step.removed_feature = fit.terms[static_cast<std::size_t>(worst)];
        step.p_value = fit.p_values(worst);
        columns.erase(std::find(columns.begin(), columns.end(), step.removed_feature));
        current = design.with_columns(columns);
        fit = fit_logistic(current, options.fit);
        step.refit_log_likelihood = fit.log_likelihood;
        trace.steps.push_back(std::move(step));
    }
    trace.final_fit = std::move(fit);
    return trace;
}

inline StepwiseTrace stepwise_forward(const DesignMatrix& design, const StepwiseOptions& options,
                                      StepwiseTrace trace, std::vector<std::string> candidates) {
    std::vector<std::string> chosen;
    LogisticFit fit = fit_logistic(design.with_columns(chosen), options.fit);
    while (!candidates.empty()) {
        int best = -1;
        double best_p = 1.0;
        double best_ll = 0.0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            std::vector<std::string> trial = chosen;
            trial.push_back(candidates[c]);
            LogisticFit trial_fit;
            try {
                trial_fit = fit_logistic(design.with_columns(trial), options.fit);
            } catch (const SingularInformationError&) {
                continue;
            }
            const double lr = 2.0 * (trial_fit.log_likelihood - fit.log_likelihood);
            const double p = chi2_1_sf(std::max(0.0, lr));
            if (p < options.alpha &&
                (best < 0 || p < best_p - 1e-15 ||
                 (std::fabs(p - best_p) <= 1e-15 && candidates[c] < candidates[best]))) {
                best = static_cast<int>(c);
                best_p = p;
                best_ll = trial_fit.log_likelihood;
            }
        }
        if (best < 0) break;
        chosen.push_back(candidates[static_cast<std::size_t>(best)]);
        candidates.erase(candidates.begin() + best);
        fit = fit_logistic(design.with_columns(chosen), options.fit);
        trace.steps.push_back({chosen.back(), best_p, best_ll});
    }
    trace.final_fit = std::move(fit);
    return trace;
}

}  // namespace detail

// Separation-flagged columns are excluded up front with a warning; the MLE
// for them diverges and their Wald statistics would be meaningless. Linearly
// dependent columns are aliased out the same way a rank-revealing GLM would.
inline StepwiseTrace stepwise_fit(const DesignMatrix& design, const StepwiseOptions& options = {}) {
    StepwiseTrace trace;
    const std::vector<SeparationFlag> flags = detect_separation(design);
    std::vector<std::string> columns;
    for (std::size_t j = 0; j < design.column_names.size(); ++j) {
        if (flags[j] == SeparationFlag::None) {
            columns.push_back(design.column_names[j]);
        } else {
            trace.excluded_separated.push_back(design.column_names[j]);
            trace.warnings.push_back(
                "column '" + design.column_names[j] + "' shows " +
                (flags[j] == SeparationFlag::Complete ? std::string("complete")
                                                      : std::string("quasi-perfect")) +
                " separation and was excluded from stepwise selection");
        }
    }

    // alias out dependent columns until the full model is identifiable
    while (!columns.empty()) {
        try {
            fit_logistic(design.with_columns(columns), options.fit);
            break;
        } catch (const SingularInformationError& e) {
            bool removed_any = false;
            for (const std::string& name : e.offending_columns) {
                auto it = std::find(columns.begin(), columns.end(), name);
                if (it == columns.end()) continue;
                columns.erase(it);
                trace.excluded_collinear.push_back(name);
                trace.warnings.push_back("column '" + name +
                                         "' is linearly dependent in this design and was aliased "
                                         "out before stepwise selection");
                removed_any = true;
            }
            if (!removed_any) throw;
        }
    }

    if (options.direction == StepwiseOptions::Direction::Forward) {
        return detail::stepwise_forward(design, options, std::move(trace), std::move(columns));
    }
    return detail::stepwise_backward(design, options, std::move(trace), std::move(columns));
}

// Gradient of the Bernoulli log-likelihood at beta (intercept-augmented).
inline Eigen::VectorXd log_likelihood_gradient(const DesignMatrix& design,
                                               const Eigen::VectorXd& beta) {
    const Eigen::Index n = design.X.rows();
    const Eigen::Index p = design.X.cols();
    Eigen::MatrixXd A(n, p + 1);
    A.col(0) = Eigen::VectorXd::Ones(n);
    if (p > 0) A.rightCols(p) = design.X;
    const Eigen::VectorXd eta = A * beta;
    Eigen::VectorXd mu(n);
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = detail::sigmoid(eta(i));
    return A.transpose() * (design.y - mu);
}

inline double log_likelihood_at(const DesignMatrix& design, const Eigen::VectorXd& beta) {
    const Eigen::Index n = design.X.rows();
    const Eigen::Index p = design.X.cols();
    Eigen::MatrixXd A(n, p + 1);
    A.col(0) = Eigen::VectorXd::Ones(n);
    if (p > 0) A.rightCols(p) = design.X;
    return detail::bernoulli_log_likelihood(design.y, A * beta);
}

// Fitted P(y=1) for each row under a converged fit.
inline Eigen::VectorXd predict_probabilities(const LogisticFit& fit, const DesignMatrix& design) {
    if (fit.terms.size() != design.column_names.size() + 1) {
        throw ValidationError("predict_probabilities: fit/design shape mismatch");
    }
    const Eigen::Index n = design.X.rows();
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, fit.beta(0));
    for (std::size_t j = 0; j < design.column_names.size(); ++j) {
        eta += fit.beta(static_cast<Eigen::Index>(j + 1)) * design.X.col(static_cast<Eigen::Index>(j));
    }
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = detail::sigmoid(eta(i));
    return out;
}

}  // namespace perceptlens
