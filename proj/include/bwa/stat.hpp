#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bwa/rng.hpp"

namespace bwa::stats {

// ---------------------------------------------------------------------------
// Distribution functions
// ---------------------------------------------------------------------------

/// Standard normal CDF. Absolute error below 1e-12 over the full range.
double normal_cdf(double z);

/// Standard normal density.
double normal_pdf(double z);

/// Inverse of normal_cdf for p in (0,1). Round-trips with normal_cdf to
/// better than 1e-9.
double normal_quantile(double p);

/// Regularized incomplete beta function I_x(a,b), a,b > 0, x in [0,1].
double incomplete_beta(double a, double b, double x);

/// Fisher F CDF with d1, d2 > 0 degrees of freedom; x >= 0.
double f_cdf(double x, double d1, double d2);

/// Student t CDF with d > 0 degrees of freedom.
double t_cdf(double t, double d);

// ---------------------------------------------------------------------------
// Location estimators
// ---------------------------------------------------------------------------

enum class LocationKind { mean, median, huber };

double mean(std::span<const double> sample);
double median(std::span<const double> sample);

/// Median absolute deviation about the median, scaled by 1.4826 so that it
/// is consistent for the normal standard deviation.
double mad_scale(std::span<const double> sample);

/// Huber M-estimate of location with clipping constant c and MAD scale.
/// Degenerate scale (all values equal up to the MAD) falls back to the median.
double huber_location(std::span<const double> sample, double c = 1.345);

double location_estimate(std::span<const double> sample, LocationKind kind);

// ---------------------------------------------------------------------------
// Wilcoxon-Mann-Whitney rank test
// ---------------------------------------------------------------------------

enum class Alternative { greater, two_sided };

/// Rank-sum test of x against y. Exact (full enumeration of rank
/// assignments, ties handled by midranks) when the combined size is at most
/// wmw_exact_limit; otherwise the normal approximation with tie and
/// continuity corrections. Both samples all tied gives p = 1.
double wmw_test(std::span<const double> x, std::span<const double> y, Alternative alternative);

inline constexpr std::size_t wmw_exact_limit = 12;

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// n independent N(mu, sigma^2) draws from the stream.
std::vector<double> sample_normal(RngStream& rng, double mu, double sigma, std::size_t n);

}  // namespace bwa::stats
