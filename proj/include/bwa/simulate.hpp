#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bwa/blockwise.hpp"
#include "bwa/mtp.hpp"

namespace bwa::sim {

// ---------------------------------------------------------------------------
// Analytic power, known-variance one-sided setting
// ---------------------------------------------------------------------------

/// Power of a single small-region test under the Bonferroni-corrected
/// one-sided rule over M tests.
double analytic_power_srw(double delta, double alpha, std::size_t total_regions, double sigma0,
                          double sigma1);

/// Power of the block-mean test for a fully affected block of size b under
/// Bonferroni correction over m block tests.
double analytic_power_bwa_full(double delta, double alpha, std::size_t block_count,
                               std::size_t block_size, double sigma0, double sigma1);

/// Mixture standard deviation of a block where k of b regions carry the
/// shift: sqrt((k/b) s1^2 + (1-k/b) s0^2 + delta^2 (k/b)(1-k/b)).
double mixture_sigma(double delta, double sigma0, double sigma1, std::size_t k, std::size_t b);

/// Power of the block-mean test when only k of b regions are affected.
double analytic_power_bwa_partial(double delta, double alpha, std::size_t block_count,
                                  std::size_t block_size, std::size_t k, double sigma0,
                                  double sigma1);

/// Smallest k/b on the grid k in {1..b} where the partial-block power
/// reaches the SRW power; nullopt when no grid point qualifies (or delta
/// is zero, where both reduce to test levels).
std::optional<double> crossover_fraction(double delta, double alpha, std::size_t block_count,
                                         std::size_t block_size, std::size_t total_regions,
                                         double sigma0, double sigma1);

// ---------------------------------------------------------------------------
// Monte Carlo scenarios
// ---------------------------------------------------------------------------

enum class Strategy { srw, mean_bwa };

const char* strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(const std::string& name);

struct ScenarioConfig {
    std::size_t total_regions = 1000;  // M
    std::size_t block_size = 1;        // b, uniform across blocks
    double mu0 = 0.0;
    double sigma0 = 1.0;
    double sigma1 = 1.0;
    double delta = 0.0;
    std::size_t fully_affected_blocks = 0;      // m1
    std::size_t partially_affected_blocks = 0;  // m2
    std::size_t affected_per_partial = 0;       // k, regions per partial block
    double alpha = 0.05;
    std::size_t n_sim = 10000;
    std::uint64_t seed = 0;

    std::size_t block_count() const { return total_regions / block_size; }  // m
    std::size_t affected_regions() const {                                  // M1
        return fully_affected_blocks * block_size +
               partially_affected_blocks * affected_per_partial;
    }
    void validate() const;  // throws on inconsistent settings
};

/// One Monte Carlo estimate. avg_power is the mean of S/M1 (regions for
/// SRW, blocks for block strategies); fwer the fraction of replications
/// with V >= 1; fdr the mean of V/max(R,1).
struct SimulationResult {
    double avg_power = 0.0;
    double fwer = 0.0;
    double fdr = 0.0;
    double se_power = 0.0;
    double se_fwer = 0.0;
    std::size_t n_sim = 0;
};

SimulationResult simulate_scenario(const ScenarioConfig& cfg, Strategy strategy,
                                   mtp::ProcedureKind method, std::uint64_t cell_id = 0,
                                   unsigned threads = 0);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepCell {
    Strategy strategy;
    mtp::ProcedureKind method;
    double delta = 0.0;
    double k_over_b = 1.0;  // 1 for fully affected layouts
    std::size_t block_size = 1;
    std::size_t block_count = 1;
    SimulationResult mc;
    std::optional<double> analytic_power;  // Bonferroni formulas only
};

struct SweepTable {
    std::vector<SweepCell> cells;
    ScenarioConfig base;  // grid-independent parameters

    std::string to_tsv() const;
    std::string to_json() const;
};

struct SweepRequest {
    ScenarioConfig base;
    std::vector<double> deltas;              // empty means: use base.delta
    std::vector<std::size_t> k_values;       // empty means: fully affected layout
    std::vector<std::size_t> block_sizes;    // at least one entry
    std::vector<Strategy> strategies;
    std::vector<mtp::ProcedureKind> methods;
    std::size_t affected_region_target = 0;  // M1 to hold fixed across b (0 = keep base)
    std::uint64_t cell_id_base = 0;          // substream offset, for merged sweeps
};

SweepTable power_sweep(const SweepRequest& request, unsigned threads = 0);

// ---------------------------------------------------------------------------
// The printed 8x8 example
// ---------------------------------------------------------------------------

struct Example2 {
    blockwise::GlobalRegion region;            // 64 values, row-major
    blockwise::BlockPartition partition;       // 6 blocks
    std::vector<std::size_t> affected_blocks;  // block-level ground truth
    std::vector<std::size_t> affected_regions; // region-level ground truth
    std::vector<std::string> block_names;

    double value_at(std::size_t row, std::size_t col) const {  // 0-based
        return region.values[row * 8 + col];
    }
};

const Example2& example2_fixture();

}  // namespace bwa::sim
