#pragma once
// Welch two-sample one-sided t-test and mean ± std summaries.

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "skelloss/types.hpp"

namespace skelloss::stats {

struct SampleSet {
    std::string label;
    std::vector<double> values;

    void validate() const {
        if (values.size() < 2) throw ValidationError("SampleSet '" + label + "': need at least 2 values");
        for (double v : values) {
            if (!std::isfinite(v)) throw ValidationError("SampleSet '" + label + "': non-finite value");
        }
    }
};

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
    std::size_t n = 0;
};

/// Two-pass mean and sample standard deviation.
inline Summary summarize(const SampleSet& s) {
    s.validate();
    Summary r;
    r.n = s.values.size();
    double sum = 0.0;
    for (double v : s.values) sum += v;
    r.mean = sum / static_cast<double>(r.n);
    double ss = 0.0;
    for (double v : s.values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
    return r;
}

/// Welford's single-pass update; agrees with summarize() to rounding.
inline Summary summarize_single_pass(const SampleSet& s) {
    s.validate();
    Summary r;
    double m2 = 0.0;
    for (double v : s.values) {
        ++r.n;
        const double delta = v - r.mean;
        r.mean += delta / static_cast<double>(r.n);
        m2 += delta * (v - r.mean);
    }
    r.std = std::sqrt(m2 / static_cast<double>(r.n - 1));
    return r;
}

/// "84.05 ± 0.10" style cell.
inline std::string format_mean_std(const Summary& s, int precision = 2) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f \xC2\xB1 %.*f", precision, s.mean, precision, s.std);
    return buf;
}

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// Regularised incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ValidationError("incomplete_beta: a and b must be > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete_beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // The continued fraction converges quickly for x < (a+1)/(a+b+2); use the
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// P(T <= t) for Student's t with df degrees of freedom (df > 0, may be fractional).
inline double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("student_t_cdf: df must be > 0");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);  // P(T > |t|)
    return t > 0.0 ? 1.0 - tail : tail;
}

enum class Alternative {
    greater,  // H1: mean(a) > mean(b); p = P(T >= t)
    less,     // H1: mean(a) < mean(b); p = P(T <= t)
};

struct TTestResult {
    double t_value = 0.0;
    double p_value = 0.5;
    double df = 0.0;
};

/// Welch two-sample t-test of mean(a) - mean(b) with a one-sided p-value and
/// Welch-Satterthwaite degrees of freedom. When both samples have zero
/// variance: equal means give t = 0, p = 0.5; unequal means give t = ±inf and
/// p in {0, 1}, with df = n_a + n_b - 2.
inline TTestResult t_test_one_sided(const SampleSet& a, const SampleSet& b,
                                    Alternative alt = Alternative::greater) {
    const Summary sa = summarize(a);
    const Summary sb = summarize(b);
    const double na = static_cast<double>(sa.n);
    const double nb = static_cast<double>(sb.n);
    const double ra = sa.std * sa.std / na;
    const double rb = sb.std * sb.std / nb;
    const double diff = sa.mean - sb.mean;

    TTestResult r;
    if (ra + rb == 0.0) {
        r.df = na + nb - 2.0;
        if (diff == 0.0) {
            r.t_value = 0.0;
            r.p_value = 0.5;
        } else {
            r.t_value = diff > 0.0 ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity();
            const bool supports = alt == Alternative::greater ? diff > 0.0 : diff < 0.0;
            r.p_value = supports ? 0.0 : 1.0;
        }
        return r;
    }
    r.t_value = diff / std::sqrt(ra + rb);
    r.df = (ra + rb) * (ra + rb) / (ra * ra / (na - 1.0) + rb * rb / (nb - 1.0));
    r.p_value = alt == Alternative::greater ? student_t_cdf(-r.t_value, r.df) : student_t_cdf(r.t_value, r.df);
    return r;
}

inline Alternative parse_alternative(const std::string& s) {
    if (s == "greater") return Alternative::greater;
    if (s == "less") return Alternative::less;
    throw ValidationError("direction must be 'greater' or 'less', got '" + s + "'");
}

inline const char* to_string(Alternative a) { return a == Alternative::greater ? "greater" : "less"; }

}  // namespace skelloss::stats
