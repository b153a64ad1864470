#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bwa/blockwise.hpp"
#include "bwa/mtp.hpp"

namespace bwa::conn {

/// Load or consistency failure; carries the offending file when known.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what, std::string file_in = {})
        : std::runtime_error(what), file(std::move(file_in)) {}
    std::string file;
};

// ---------------------------------------------------------------------------
// Connectivity matrices
// ---------------------------------------------------------------------------

/// Symmetric non-negative N x N connection-density matrix.
struct ConnectivityMatrix {
    std::size_t n = 0;
    std::vector<double> values;  // row-major

    static ConnectivityMatrix zeros(std::size_t n) {
        return ConnectivityMatrix{n, std::vector<double>(n * n, 0.0)};
    }
    double at(std::size_t k, std::size_t l) const { return values[k * n + l]; }
    void set(std::size_t k, std::size_t l, double v) {
        values[k * n + l] = v;
        values[l * n + k] = v;
    }
};

/// Dense whitespace/comma-separated grid, no header. Entries must be
/// finite and non-negative; asymmetry up to 1e-9 is averaged away, more is
/// an error naming the cell.
ConnectivityMatrix load_matrix(const std::string& path);
void save_matrix(const ConnectivityMatrix& matrix, const std::string& path);

/// All regular files in the directory, sorted by name.
std::vector<ConnectivityMatrix> load_group(const std::string& directory);

// ---------------------------------------------------------------------------
// Fiber bundles
// ---------------------------------------------------------------------------

/// Fibers connecting one ROI pair, with the two ROI surface areas (mm^2)
/// and per-fiber trajectory lengths (mm).
struct FiberBundle {
    double surface_k = 0.0;
    double surface_l = 0.0;
    std::vector<double> fiber_lengths;
};

/// Surface-normalized, length-debiased density:
/// 2/(S(k)+S(l)) * sum_f 1/l(f).
double connection_density(const FiberBundle& bundle);

// ---------------------------------------------------------------------------
// Parcellation hierarchy and matrix blocks
// ---------------------------------------------------------------------------

/// Nested parcellations of the fine ROIs. Level 0 is the identity (the
/// fine ROIs themselves); coarser levels map every fine ROI to a parcel.
struct ParcellationHierarchy {
    std::size_t fine_count = 0;
    std::vector<std::string> level_names;          // coarser levels only
    std::vector<std::vector<int>> parcel_of;       // [level][fine roi]
    std::vector<std::size_t> level_sizes;          // distinct parcels per level

    /// Index of the level with the given parcel count; fine_count selects
    /// the identity level (returned as nullopt level id with size n).
    std::optional<std::size_t> level_with_size(std::size_t size) const;
    void validate() const;  // surjective labels, nested levels
};

/// File format: header "roi <name>..." then one row per fine ROI with its
/// parcel id at each level.
ParcellationHierarchy load_hierarchy(const std::string& path);
void save_hierarchy(const ParcellationHierarchy& hierarchy, const std::string& path);

/// Contiguous parcels of near-equal size (differing by at most one ROI).
ParcellationHierarchy uniform_hierarchy(std::size_t fine_count, std::size_t parcels);

/// Linear index of upper-triangle cell (k < l).
inline std::size_t cell_index(std::size_t k, std::size_t l, std::size_t n) {
    return k * (2 * n - k - 1) / 2 + (l - k - 1);
}
std::pair<std::size_t, std::size_t> cell_coords(std::size_t index, std::size_t n);
inline std::size_t cell_count(std::size_t n) { return n * (n - 1) / 2; }

/// Blocks of the connectivity matrix: one block per unordered parcel pair,
/// members are the upper-triangle cells linking the two parcels.
struct CellBlocks {
    std::size_t fine_count = 0;
    bool includes_diagonal = false;                  // within-parcel pairs kept?
    std::vector<std::pair<int, int>> pairs;          // block -> (P <= Q)
    std::vector<std::vector<std::size_t>> cells;     // block -> cell indices
    std::vector<int> block_of_cell;                  // cell -> block or -1

    std::size_t block_count() const { return pairs.size(); }
    std::size_t covered_cells() const;
};

/// Group upper-triangle cells by the coarse parcels of their endpoints.
/// Off-diagonal pairs only by default, matching the usual block count of
/// (#parcels choose 2).
CellBlocks blocks_from_hierarchy(const ParcellationHierarchy& hierarchy, std::size_t fine_size,
                                 std::size_t coarse_size, bool include_diagonal = false);

/// View of the blocks as a region/partition pair for generic validation.
blockwise::BlockPartition to_block_partition(const CellBlocks& blocks);

std::map<std::size_t, std::size_t> block_size_histogram(const CellBlocks& blocks);

// ---------------------------------------------------------------------------
// Treatment-group synthesis
// ---------------------------------------------------------------------------

struct GroundTruth {
    std::vector<std::size_t> affected_blocks;
    std::vector<double> fractions;            // aligned with affected_blocks
    std::vector<std::size_t> affected_cells;  // linear upper-triangle ids
};

struct SynthesizedGroup {
    std::vector<ConnectivityMatrix> subjects;
    GroundTruth truth;
};

/// Parametric bootstrap of the control group: per cell draw
/// N(mean, sd) over the controls, clamp negatives to zero; inside each
/// affected block add an independent N(delta, sd) draw to
/// ceil(fraction * b) seeded-chosen cells.
SynthesizedGroup synthesize_treatment_group(const std::vector<ConnectivityMatrix>& controls,
                                            const CellBlocks& blocks,
                                            std::span<const std::size_t> affected_blocks,
                                            std::span<const double> fractions, double delta,
                                            std::size_t n_treatment, std::uint64_t seed);

/// Null synthesis: no affected blocks.
std::vector<ConnectivityMatrix> bootstrap_group(const std::vector<ConnectivityMatrix>& controls,
                                                const CellBlocks& blocks, std::size_t n_subjects,
                                                std::uint64_t seed);

/// Histogram of ground-truth fractions over equal bins of [0,1].
std::vector<std::size_t> fraction_histogram(const GroundTruth& truth, std::size_t bins = 10);

/// Affected-blocks file: one "P Q fraction" record per line, parcels
/// referring to the coarse level of the given block index.
std::pair<std::vector<std::size_t>, std::vector<double>> load_affected_file(
    const std::string& path, const CellBlocks& blocks);
void save_affected_file(const GroundTruth& truth, const CellBlocks& blocks,
                        const std::string& path);

// ---------------------------------------------------------------------------
// Group comparison: the four strategies
// ---------------------------------------------------------------------------

enum class Strategy { srw, mean_bwa, truncated_bwa, bivariate_bwa };

const char* strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(const std::string& name);
inline constexpr Strategy all_strategies[] = {Strategy::srw, Strategy::mean_bwa,
                                              Strategy::truncated_bwa, Strategy::bivariate_bwa};

struct CompareOptions {
    double alpha = 0.05;
    double threshold = 0.0;  // truncated-mean binarization threshold
    blockwise::FConstant f_constant = blockwise::FConstant::standard;
};

struct GroupComparison {
    Strategy strategy{};
    mtp::ProcedureKind method{};
    double alpha = 0.05;
    bool cell_level = false;  // true for srw: units are cells, else blocks
    std::vector<double> raw_p;
    std::vector<double> adjusted_p;
    std::vector<std::size_t> rejected;
    std::vector<std::uint8_t> fallback;  // per unit: degenerate-covariance fallback hit
    std::optional<mtp::DecisionTable> table;
    std::optional<mtp::ErrorRates> rates;
    std::optional<double> avg_power;  // S / number of truly affected units

    bool any_fallback() const;
};

/// Compare the two groups over the given blocks. SRW tests every covered
/// cell with a pooled two-sample t-test; mean-BWA tests per-subject block
/// means; truncated-BWA ranks per-subject truncated means; bivariate-BWA
/// applies the two-sample F test to (mean, truncated mean) pairs, falling
/// back to the non-degenerate component when the pooled covariance is
/// singular.
GroupComparison compare_groups(const std::vector<ConnectivityMatrix>& controls,
                               const std::vector<ConnectivityMatrix>& treatments,
                               const CellBlocks& blocks, Strategy strategy,
                               mtp::ProcedureKind method, const CompareOptions& options = {},
                               const GroundTruth* truth = nullptr);

/// Results document: per-unit p-values, decisions, outcome table, rates.
std::string comparison_to_json(const GroupComparison& comparison, const CellBlocks& blocks,
                               int indent = 2);

// ---------------------------------------------------------------------------
// Synthetic control cohort (non-clinical fixture)
// ---------------------------------------------------------------------------

/// Seeded generator for a control cohort: structural zeros with
/// distance-decay connection probability, log-normal latent strengths,
/// clamped-normal subject noise proportional to the latent strength.
struct SyntheticConfig {
    std::size_t regions = 60;
    std::size_t parcels = 12;
    std::size_t subjects = 15;
    double conn_near = 0.95;    // connection probability at distance 0
    double conn_far = 0.75;     // connection probability at maximal distance
    double value_scale = 10.0;  // latent strength scale
    double value_floor = 1.0;   // strength fraction retained at maximal distance
    double value_decay = 3.0;
    double value_spread = 0.25;  // lognormal sigma of the latent strength
    double noise_ratio = 0.5;    // per-cell sd relative to latent strength
};

std::vector<ConnectivityMatrix> synthetic_controls(const SyntheticConfig& config,
                                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Replicated experiments (power orderings, null FWER)
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    SyntheticConfig synthetic;
    double delta = 1.5;
    std::size_t affected_block_count = 22;
    double fraction_min = 0.4;
    double fraction_max = 1.0;
    std::size_t replications = 40;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    /// Replace the control side by an independent null bootstrap; used for
    /// null-calibration runs so both groups share one generating law.
    bool bootstrap_baseline = false;
};

struct ExperimentCell {
    Strategy strategy{};
    mtp::ProcedureKind method{};
    double avg_power = 0.0;  // mean over replications of per-rep average power
    double se_power = 0.0;
    double fwer = 0.0;  // fraction of replications with V >= 1
    double se_fwer = 0.0;
    std::size_t replications = 0;
};

std::vector<ExperimentCell> run_group_experiment(const ExperimentConfig& config,
                                                 std::span<const Strategy> strategies,
                                                 std::span<const mtp::ProcedureKind> methods,
                                                 unsigned threads = 0);

}  // namespace bwa::conn
