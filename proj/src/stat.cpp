#include "bwa/stat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bwa::stats {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(what) + ": non-finite input");
}

// Continued fraction for the incomplete beta function (Lentz's algorithm).
double beta_cont_fraction(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double normal_cdf(double z) {
    require_finite(z, "normal_cdf");
    return 0.5 * std::erfc(-z / kSqrt2);
}

double normal_pdf(double z) {
    return 0.3989422804014326779399461 * std::exp(-0.5 * z * z);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0,1)");

    // Acklam's rational approximation as the starting point.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Two Halley refinements against the erfc-based CDF.
    for (int iter = 0; iter < 2; ++iter) {
        const double err = normal_cdf(x) - p;
        const double dens = normal_pdf(x);
        if (dens <= 0.0) break;
        const double u = err / dens;
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("incomplete_beta: a,b must be positive");
    if (std::isnan(x) || x < 0.0 || x > 1.0)
        throw std::domain_error("incomplete_beta: x must lie in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cont_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     beta_cont_fraction(b, a, 1.0 - x) / b;
}

double f_cdf(double x, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw std::domain_error("f_cdf: degrees of freedom must be positive");
    if (std::isnan(x) || x < 0.0) throw std::domain_error("f_cdf: x must be >= 0");
    if (x == 0.0) return 0.0;
    const double t = d1 * x / (d1 * x + d2);
    return incomplete_beta(0.5 * d1, 0.5 * d2, t);
}

double t_cdf(double t, double d) {
    if (!(d > 0.0)) throw std::domain_error("t_cdf: degrees of freedom must be positive");
    if (std::isnan(t)) throw std::domain_error("t_cdf: non-finite input");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = d / (d + t * t);
    const double half_tail = 0.5 * incomplete_beta(0.5 * d, 0.5, x);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

double mean(std::span<const double> sample) {
    if (sample.empty()) throw std::domain_error("mean: empty sample");
    return std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(sample.size());
}

double median(std::span<const double> sample) {
    if (sample.empty()) throw std::domain_error("median: empty sample");
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

double mad_scale(std::span<const double> sample) {
    const double center = median(sample);
    std::vector<double> dev(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) dev[i] = std::fabs(sample[i] - center);
    return 1.4826 * median(dev);
}

double huber_location(std::span<const double> sample, double c) {
    if (sample.empty()) throw std::domain_error("huber_location: empty sample");
    const double scale = mad_scale(sample);
    double theta = median(sample);
    if (scale <= 0.0) return theta;  // constant bulk; the median is the fixed point

    const double clip = c * scale;
    for (int iter = 0; iter < 200; ++iter) {
        // IRLS step: weights min(1, clip/|r|)
        double weight_sum = 0.0;
        double weighted_sum = 0.0;
        for (double x : sample) {
            const double r = std::fabs(x - theta);
            const double w = (r <= clip || r == 0.0) ? 1.0 : clip / r;
            weight_sum += w;
            weighted_sum += w * x;
        }
        const double next = weighted_sum / weight_sum;
        const double step = std::fabs(next - theta);
        theta = next;
        if (step < 1e-9) break;
    }
    return theta;
}

double location_estimate(std::span<const double> sample, LocationKind kind) {
    switch (kind) {
        case LocationKind::mean: return mean(sample);
        case LocationKind::median: return median(sample);
        case LocationKind::huber: return huber_location(sample);
    }
    throw std::domain_error("location_estimate: unknown kind");
}

namespace {

// Rank-sum of x within the pooled sample, midranks for ties.
double rank_sum_of_x(std::span<const double> x, std::span<const double> y) {
    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(x.size() + y.size());
    for (double v : x) pooled.emplace_back(v, 0);
    for (double v : y) pooled.emplace_back(v, 1);
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    double w = 0.0;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j + 1);  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].second == 0) w += midrank;
        i = j;
    }
    return w;
}

// Exact permutation distribution of the rank-sum: enumerate every
// assignment of nx of the pooled values to the first sample.
double wmw_exact(std::span<const double> x, std::span<const double> y, Alternative alternative) {
    const std::size_t nx = x.size();
    const std::size_t n = nx + y.size();

    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    std::sort(pooled.begin(), pooled.end());

    // midranks of the sorted pooled values
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && pooled[j] == pooled[i]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j + 1);
        for (std::size_t k = i; k < j; ++k) rank[k] = midrank;
        i = j;
    }

    const double w_obs = rank_sum_of_x(x, y);
    constexpr double tol = 1e-9;

    // walk all C(n, nx) index subsets
    std::vector<std::size_t> pick(nx);
    for (std::size_t k = 0; k < nx; ++k) pick[k] = k;
    std::uint64_t total = 0;
    std::uint64_t count_ge = 0;
    std::uint64_t count_le = 0;
    while (true) {
        double w = 0.0;
        for (std::size_t idx : pick) w += rank[idx];
        ++total;
        if (w >= w_obs - tol) ++count_ge;
        if (w <= w_obs + tol) ++count_le;

        // next combination
        std::size_t pos = nx;
        while (pos > 0) {
            --pos;
            if (pick[pos] != pos + n - nx) break;
            if (pos == 0) { pos = nx; break; }
        }
        if (pos == nx) break;
        ++pick[pos];
        for (std::size_t k = pos + 1; k < nx; ++k) pick[k] = pick[k - 1] + 1;
    }

    const double p_greater = static_cast<double>(count_ge) / static_cast<double>(total);
    if (alternative == Alternative::greater) return p_greater;
    const double p_less = static_cast<double>(count_le) / static_cast<double>(total);
    return std::min(1.0, 2.0 * std::min(p_greater, p_less));
}

double wmw_normal_approx(std::span<const double> x, std::span<const double> y,
                         Alternative alternative) {
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    const double n = nx + ny;
    const double w = rank_sum_of_x(x, y);
    const double mean_w = 0.5 * nx * (n + 1.0);

    // tie correction: sum over tie groups of (t^3 - t)
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    std::sort(pooled.begin(), pooled.end());
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double var_w = nx * ny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var_w <= 0.0) return 1.0;  // every value tied
    const double sd = std::sqrt(var_w);

    const double z_upper = (w - mean_w - 0.5) / sd;
    if (alternative == Alternative::greater) return 1.0 - normal_cdf(z_upper);
    const double z_lower = (w - mean_w + 0.5) / sd;
    const double p_greater = 1.0 - normal_cdf(z_upper);
    const double p_less = normal_cdf(z_lower);
    return std::min(1.0, 2.0 * std::min(p_greater, p_less));
}

}  // namespace

double wmw_test(std::span<const double> x, std::span<const double> y, Alternative alternative) {
    if (x.empty() || y.empty()) throw std::domain_error("wmw_test: both samples must be non-empty");
    for (double v : x) require_finite(v, "wmw_test");
    for (double v : y) require_finite(v, "wmw_test");

    const bool all_tied = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) &&
                          std::all_of(y.begin(), y.end(), [&](double v) { return v == x[0]; });
    if (all_tied) return 1.0;

    if (x.size() + y.size() <= wmw_exact_limit) return wmw_exact(x, y, alternative);
    return wmw_normal_approx(x, y, alternative);
}

std::vector<double> sample_normal(RngStream& rng, double mu, double sigma, std::size_t n) {
    if (!(sigma >= 0.0)) throw std::domain_error("sample_normal: sigma must be >= 0");
    std::vector<double> out(n);
    rng.fill_normal(out, mu, sigma);
    return out;
}

}  // namespace bwa::stats
