#pragma once

// Distribution tails used by the inference code: standard normal two-sided
// p-values, chi-squared(1) survival, and Student-t two-sided p-values via the
// regularized incomplete beta function (Lentz continued fraction).

#include <cmath>
#include <limits>
#include <stdexcept>

namespace perceptlens {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Two-sided tail; clamped so p stays in (0, 1] even for extreme z.
inline double normal_two_sided_p(double z) {
    double p = std::erfc(std::fabs(z) / std::sqrt(2.0));
    if (p < 1e-300) p = 1e-300;
    if (p > 1.0) p = 1.0;
    return p;
}

inline double chi2_1_sf(double x) {
    if (x <= 0.0) return 1.0;
    return std::erfc(std::sqrt(x / 2.0));
}

// Regularized incomplete beta I_x(a, b), continued fraction per Lentz.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    const bool flip = x > (a + 1.0) / (a + b + 2.0);
    if (flip) {
        std::swap(a, b);
        x = 1.0 - x;
    }

    const double log_front = a * std::log(x) + b * std::log(1.0 - x) -
                             (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));

    constexpr double kTiny = 1e-30;
    constexpr double kEps = 1e-14;
    constexpr int kMaxIter = 500;

    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;

    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;

        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }

    const double result = std::exp(log_front) * h / a;
    return flip ? 1.0 - result : result;
}

// Two-sided p for a t statistic with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) throw std::invalid_argument("student_t_two_sided_p: df must be positive");
    if (!std::isfinite(t)) return 0.0;
    const double x = df / (df + t * t);
    double p = incomplete_beta(df / 2.0, 0.5, x);
    if (p < 0.0) p = 0.0;
    if (p > 1.0) p = 1.0;
    return p;
}

}  // namespace perceptlens
