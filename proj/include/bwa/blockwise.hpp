#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bwa/mtp.hpp"
#include "bwa/stat.hpp"

namespace bwa::blockwise {

/// One scalar measurement per small region, with an optional mask of
/// regions excluded from analysis.
struct GlobalRegion {
    std::vector<double> values;
    std::vector<bool> mask;  // empty, or per-region: true = excluded

    std::size_t total_regions() const { return values.size(); }
    bool excluded(std::size_t j) const { return !mask.empty() && mask[j]; }
    std::size_t active_regions() const;
};

/// Disjoint cover of the unmasked regions by blocks 0..m-1. Built from
/// (region, block) assignment records so that duplicate assignments are
/// representable and reported by validation.
struct BlockPartition {
    std::vector<std::pair<std::size_t, std::size_t>> records;  // (region, block)
    std::size_t block_count = 0;

    void assign(std::size_t region, std::size_t block);
    std::vector<std::size_t> block_sizes() const;
    /// Member regions per block; duplicates appear as recorded.
    std::vector<std::vector<std::size_t>> members() const;
};

struct PartitionReport {
    bool ok = true;
    std::vector<std::size_t> duplicate_regions;   // assigned to more than one block
    std::vector<std::size_t> unassigned_regions;  // unmasked but not covered
    std::vector<std::size_t> masked_assigned;     // masked yet assigned
    std::vector<std::size_t> empty_blocks;
    std::string message() const;
};

PartitionReport validate_partition(const GlobalRegion& region, const BlockPartition& part);

/// Partition file: one record per line, "region block" or "row col block"
/// (0-based); '#' starts a comment. The three-token form needs the matrix
/// width to linearize.
BlockPartition load_partition(const std::string& path,
                              std::optional<std::size_t> row_width = std::nullopt);

enum class SummaryKind { mean, median, huber, truncated_mean, bivariate };

const char* summary_name(SummaryKind kind);
std::optional<SummaryKind> summary_from_name(const std::string& name);

/// Per-block summary statistic: a scalar, or the (mean, truncated mean)
/// pair for the bivariate kind.
struct BlockSummary {
    std::size_t block = 0;
    SummaryKind kind = SummaryKind::mean;
    double value = 0.0;    // scalar statistic, or the mean component
    double second = 0.0;   // truncated-mean component (bivariate only)
};

/// Fraction of values strictly above the threshold.
double truncated_mean(std::span<const double> values, double threshold = 0.0);

BlockSummary summarize_block(std::span<const double> values, SummaryKind kind,
                             std::size_t block = 0, double threshold = 0.0);

// ---------------------------------------------------------------------------
// Critical values and block-level tests (known-variance one-sided setting)
// ---------------------------------------------------------------------------

/// Small-region-wise critical value mu0 + sigma0 * Phi^-1(1 - alpha/M).
double srw_critical_value(double alpha, std::size_t total_regions, double mu0, double sigma0);

/// Block-mean critical value mu0 + sigma0/sqrt(b) * Phi^-1(1 - alpha/m).
double bwa_critical_value(double alpha, std::size_t block_count, std::size_t block_size,
                          double mu0, double sigma0);

/// One-sided p-value of a block mean t against N(mu0, sigma0^2/b).
double block_z_pvalue(double summary_value, std::size_t block_size, double mu0, double sigma0);

// ---------------------------------------------------------------------------
// Bivariate two-sample test on (mean, truncated mean) block summaries
// ---------------------------------------------------------------------------

struct BivariatePoint {
    double first = 0.0;
    double second = 0.0;
};

/// Degrees-of-freedom constant variants for the two-sample statistic; the
/// `standard` choice divides by 2(n_c+n_t-2).
enum class FConstant { standard, legacy };

struct BivariateResult {
    double statistic = 0.0;
    double pvalue = 1.0;
};

/// Thrown when the pooled covariance is singular; names the degenerate
/// component (0 = first, 1 = second, -1 = jointly degenerate).
struct SingularCovariance : std::runtime_error {
    explicit SingularCovariance(int component_in, const std::string& what)
        : std::runtime_error(what), component(component_in) {}
    int component;
};

BivariateResult bivariate_f_test(std::span<const BivariatePoint> control,
                                 std::span<const BivariatePoint> treatment,
                                 FConstant constant = FConstant::standard);

// ---------------------------------------------------------------------------
// One-pass block analysis (single image against a known null)
// ---------------------------------------------------------------------------

struct BlockAnalysis {
    std::vector<BlockSummary> summaries;
    std::vector<double> pvalues;
    std::vector<double> adjusted;
    std::vector<std::size_t> rejected_blocks;
    std::optional<mtp::DecisionTable> table;  // present when ground truth given
    std::optional<mtp::ErrorRates> rates;
};

struct NullModel {
    double mu0 = 0.0;
    double sigma0 = 1.0;
};

using GroundTruth = std::optional<std::vector<std::size_t>>;

/// Summarize each block, test one-sided against the null model (median and
/// huber summaries reuse the mean's p-value map, a deliberately
/// conservative convention), and correct over the m block tests.
BlockAnalysis run_block_analysis(const GlobalRegion& region, const BlockPartition& part,
                                 SummaryKind summary, mtp::ProcedureKind method, double alpha,
                                 const NullModel& null_model,
                                 const GroundTruth& affected_blocks = std::nullopt);

/// Two-image variant: per block, one-sided z-test on the difference of the
/// two block summaries under the shared known-noise null.
BlockAnalysis run_block_analysis(const GlobalRegion& baseline, const GlobalRegion& comparison,
                                 const BlockPartition& part, SummaryKind summary,
                                 mtp::ProcedureKind method, double alpha,
                                 const NullModel& null_model,
                                 const GroundTruth& affected_blocks = std::nullopt);

}  // namespace bwa::blockwise
