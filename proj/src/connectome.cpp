#include "bwa/connectome.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bwa/parallel.hpp"
#include "bwa/rng.hpp"
#include "bwa/stat.hpp"

namespace bwa::conn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Matrix IO
// ---------------------------------------------------------------------------

namespace {

std::vector<double> parse_row(const std::string& line) {
    std::string cleaned = line;
    for (char& c : cleaned)
        if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ls(cleaned);
    std::vector<double> row;
    std::string token;
    while (ls >> token) {
        try {
            std::size_t used = 0;
            const double v = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
            row.push_back(v);
        } catch (const std::exception&) {
            throw DataError("unparseable numeric token '" + token + "'");
        }
    }
    return row;
}

}  // namespace

ConnectivityMatrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open matrix file: " + path, path);

    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<double> row;
        try {
            row = parse_row(line);
        } catch (const DataError& e) {
            throw DataError(path + ": row " + std::to_string(rows.size() + 1) + ": " + e.what(),
                            path);
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    const std::size_t n = rows.size();
    if (n == 0) throw DataError(path + ": empty matrix", path);
    for (std::size_t k = 0; k < n; ++k)
        if (rows[k].size() != n)
            throw DataError(path + ": row " + std::to_string(k + 1) + " has " +
                                std::to_string(rows[k].size()) + " entries, expected " +
                                std::to_string(n),
                            path);

    ConnectivityMatrix matrix = ConnectivityMatrix::zeros(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            const double v = rows[k][l];
            if (std::isnan(v))
                throw DataError(path + ": NaN at cell (" + std::to_string(k) + "," +
                                    std::to_string(l) + ")",
                                path);
            if (v < 0.0)
                throw DataError(path + ": negative entry at cell (" + std::to_string(k) + "," +
                                    std::to_string(l) + ")",
                                path);
            matrix.values[k * n + l] = v;
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k + 1; l < n; ++l) {
            const double a = matrix.values[k * n + l];
            const double b = matrix.values[l * n + k];
            if (std::fabs(a - b) > 1e-9)
                throw DataError(path + ": asymmetric beyond tolerance at cell (" +
                                    std::to_string(k) + "," + std::to_string(l) + ")",
                                path);
            const double v = 0.5 * (a + b);
            matrix.values[k * n + l] = v;
            matrix.values[l * n + k] = v;
        }
    }
    return matrix;
}

void save_matrix(const ConnectivityMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write matrix file: " + path, path);
    char buf[40];
    for (std::size_t k = 0; k < matrix.n; ++k) {
        for (std::size_t l = 0; l < matrix.n; ++l) {
            const auto end = std::to_chars(buf, buf + sizeof buf, matrix.values[k * matrix.n + l]);
            out.write(buf, end.ptr - buf);
            out.put(l + 1 == matrix.n ? '\n' : '\t');
        }
    }
}

std::vector<ConnectivityMatrix> load_group(const std::string& directory) {
    if (!fs::is_directory(directory))
        throw DataError("not a directory: " + directory, directory);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(directory))
        if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no matrix files in directory: " + directory, directory);

    std::vector<ConnectivityMatrix> group;
    group.reserve(files.size());
    for (const auto& file : files) {
        ConnectivityMatrix matrix = load_matrix(file);
        if (!group.empty() && matrix.n != group.front().n)
            throw DataError(file + ": size " + std::to_string(matrix.n) +
                                " differs from group size " + std::to_string(group.front().n),
                            file);
        group.push_back(std::move(matrix));
    }
    return group;
}

// ---------------------------------------------------------------------------
// Fiber bundles
// ---------------------------------------------------------------------------

double connection_density(const FiberBundle& bundle) {
    if (!(bundle.surface_k > 0.0) || !(bundle.surface_l > 0.0))
        throw std::domain_error("connection_density: ROI surfaces must be positive");
    double inverse_length_sum = 0.0;
    for (double length : bundle.fiber_lengths) {
        if (!(length > 0.0))
            throw std::domain_error("connection_density: fiber lengths must be positive");
        inverse_length_sum += 1.0 / length;
    }
    return 2.0 / (bundle.surface_k + bundle.surface_l) * inverse_length_sum;
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

std::optional<std::size_t> ParcellationHierarchy::level_with_size(std::size_t size) const {
    for (std::size_t level = 0; level < level_sizes.size(); ++level)
        if (level_sizes[level] == size) return level;
    return std::nullopt;
}

void ParcellationHierarchy::validate() const {
    if (fine_count == 0) throw DataError("hierarchy: no fine ROIs");
    for (std::size_t level = 0; level < parcel_of.size(); ++level) {
        const auto& mapping = parcel_of[level];
        if (mapping.size() != fine_count) throw DataError("hierarchy: level size mismatch");
        const std::size_t parcels = level_sizes[level];
        std::vector<char> seen(parcels, 0);
        for (int parcel : mapping) {
            if (parcel < 0 || static_cast<std::size_t>(parcel) >= parcels)
                throw DataError("hierarchy: parcel id out of range");
            seen[parcel] = 1;
        }
        if (!std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }))
            throw DataError("hierarchy: level is not surjective");
    }
    // nested: walking levels coarser and coarser, equal parcels must stay equal
    std::vector<std::size_t> order(parcel_of.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return level_sizes[a] > level_sizes[b]; });
    for (std::size_t step = 1; step < order.size(); ++step) {
        const auto& finer = parcel_of[order[step - 1]];
        const auto& coarser = parcel_of[order[step]];
        std::vector<int> image(level_sizes[order[step - 1]], -1);
        for (std::size_t roi = 0; roi < fine_count; ++roi) {
            int& mapped = image[finer[roi]];
            if (mapped == -1) mapped = coarser[roi];
            else if (mapped != coarser[roi])
                throw DataError("hierarchy: levels are not nested (parcel split across " +
                                level_names[order[step]] + ")");
        }
    }
}

ParcellationHierarchy load_hierarchy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open hierarchy file: " + path, path);

    std::string header;
    if (!std::getline(in, header)) throw DataError(path + ": empty hierarchy file", path);
    std::istringstream hs(header);
    std::vector<std::string> columns;
    std::string token;
    while (hs >> token) columns.push_back(token);
    if (columns.size() < 2 || columns.front() != "roi")
        throw DataError(path + ": header must be 'roi <level>...'", path);

    ParcellationHierarchy hierarchy;
    hierarchy.level_names.assign(columns.begin() + 1, columns.end());
    hierarchy.parcel_of.resize(hierarchy.level_names.size());

    std::vector<std::vector<int>> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<int> fields;
        int v;
        while (ls >> v) fields.push_back(v);
        if (fields.empty()) continue;
        if (fields.size() != columns.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(columns.size()) + " fields",
                            path);
        rows.push_back(std::move(fields));
    }
    hierarchy.fine_count = rows.size();
    for (auto& level : hierarchy.parcel_of) level.resize(rows.size());
    std::vector<char> roi_seen(rows.size(), 0);
    for (const auto& fields : rows) {
        const int roi = fields[0];
        if (roi < 0 || static_cast<std::size_t>(roi) >= rows.size() || roi_seen[roi])
            throw DataError(path + ": bad or duplicate roi id " + std::to_string(roi), path);
        roi_seen[roi] = 1;
        for (std::size_t level = 0; level < hierarchy.parcel_of.size(); ++level)
            hierarchy.parcel_of[level][roi] = fields[level + 1];
    }
    hierarchy.level_sizes.resize(hierarchy.parcel_of.size());
    for (std::size_t level = 0; level < hierarchy.parcel_of.size(); ++level) {
        const auto& mapping = hierarchy.parcel_of[level];
        hierarchy.level_sizes[level] =
            mapping.empty() ? 0 : static_cast<std::size_t>(
                                      *std::max_element(mapping.begin(), mapping.end())) + 1;
    }
    hierarchy.validate();
    return hierarchy;
}

void save_hierarchy(const ParcellationHierarchy& hierarchy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write hierarchy file: " + path, path);
    out << "roi";
    for (const auto& name : hierarchy.level_names) out << ' ' << name;
    out << '\n';
    for (std::size_t roi = 0; roi < hierarchy.fine_count; ++roi) {
        out << roi;
        for (const auto& level : hierarchy.parcel_of) out << ' ' << level[roi];
        out << '\n';
    }
}

ParcellationHierarchy uniform_hierarchy(std::size_t fine_count, std::size_t parcels) {
    if (parcels == 0 || parcels > fine_count)
        throw std::domain_error("uniform_hierarchy: need 1 <= parcels <= ROI count");
    ParcellationHierarchy hierarchy;
    hierarchy.fine_count = fine_count;
    hierarchy.level_names = {"p" + std::to_string(parcels)};
    hierarchy.level_sizes = {parcels};
    hierarchy.parcel_of.emplace_back(fine_count);
    // contiguous runs whose sizes differ by at most one
    const std::size_t base = fine_count / parcels;
    const std::size_t extra = fine_count % parcels;
    std::size_t roi = 0;
    for (std::size_t parcel = 0; parcel < parcels; ++parcel) {
        const std::size_t run = base + (parcel < extra ? 1 : 0);
        for (std::size_t i = 0; i < run; ++i)
            hierarchy.parcel_of[0][roi++] = static_cast<int>(parcel);
    }
    return hierarchy;
}

// ---------------------------------------------------------------------------
// Cell blocks
// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> cell_coords(std::size_t index, std::size_t n) {
    // invert the triangular layout
    std::size_t k = 0;
    std::size_t row_start = 0;
    while (row_start + (n - k - 1) <= index) {
        row_start += n - k - 1;
        ++k;
    }
    return {k, k + 1 + (index - row_start)};
}

std::size_t CellBlocks::covered_cells() const {
    std::size_t total = 0;
    for (const auto& block : cells) total += block.size();
    return total;
}

CellBlocks blocks_from_hierarchy(const ParcellationHierarchy& hierarchy, std::size_t fine_size,
                                 std::size_t coarse_size, bool include_diagonal) {
    hierarchy.validate();

    // resolve a level (or the identity) for each requested size
    const auto resolve = [&](std::size_t size) -> std::vector<int> {
        if (size == hierarchy.fine_count) {
            std::vector<int> identity(hierarchy.fine_count);
            std::iota(identity.begin(), identity.end(), 0);
            return identity;
        }
        const auto level = hierarchy.level_with_size(size);
        if (!level)
            throw DataError("hierarchy has no level with " + std::to_string(size) + " parcels");
        return hierarchy.parcel_of[*level];
    };

    if (fine_size != hierarchy.fine_count)
        throw DataError("blocks_from_hierarchy: fine level must be the ROI resolution");
    if (coarse_size > fine_size)
        throw DataError("blocks_from_hierarchy: coarse level must not exceed the fine level");
    const std::vector<int> parcel = resolve(coarse_size);

    const std::size_t n = hierarchy.fine_count;
    CellBlocks blocks;
    blocks.fine_count = n;
    blocks.includes_diagonal = include_diagonal;
    blocks.block_of_cell.assign(cell_count(n), -1);

    // block ids ordered by (P,Q), P <= Q
    std::vector<std::vector<int>> block_id(coarse_size, std::vector<int>(coarse_size, -1));
    for (std::size_t p = 0; p < coarse_size; ++p) {
        for (std::size_t q = p; q < coarse_size; ++q) {
            if (p == q && !include_diagonal) continue;
            block_id[p][q] = static_cast<int>(blocks.pairs.size());
            blocks.pairs.emplace_back(static_cast<int>(p), static_cast<int>(q));
        }
    }
    blocks.cells.resize(blocks.pairs.size());

    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k + 1; l < n; ++l) {
            int p = parcel[k];
            int q = parcel[l];
            if (p > q) std::swap(p, q);
            const int id = block_id[p][q];
            if (id < 0) continue;  // within-parcel cell with diagonal blocks excluded
            const std::size_t cell = cell_index(k, l, n);
            blocks.cells[id].push_back(cell);
            blocks.block_of_cell[cell] = id;
        }
    }

    // drop parcel pairs with no cells (possible only for diagonal singleton parcels)
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::vector<std::size_t>> cells;
    for (std::size_t b = 0; b < blocks.pairs.size(); ++b) {
        if (blocks.cells[b].empty()) continue;
        const int new_id = static_cast<int>(pairs.size());
        for (std::size_t cell : blocks.cells[b]) blocks.block_of_cell[cell] = new_id;
        pairs.push_back(blocks.pairs[b]);
        cells.push_back(std::move(blocks.cells[b]));
    }
    blocks.pairs = std::move(pairs);
    blocks.cells = std::move(cells);
    return blocks;
}

blockwise::BlockPartition to_block_partition(const CellBlocks& blocks) {
    blockwise::BlockPartition part;
    for (std::size_t b = 0; b < blocks.cells.size(); ++b)
        for (std::size_t cell : blocks.cells[b]) part.assign(cell, b);
    part.block_count = blocks.cells.size();
    return part;
}

std::map<std::size_t, std::size_t> block_size_histogram(const CellBlocks& blocks) {
    std::map<std::size_t, std::size_t> histogram;
    for (const auto& block : blocks.cells) ++histogram[block.size()];
    return histogram;
}

std::pair<std::vector<std::size_t>, std::vector<double>> load_affected_file(
    const std::string& path, const CellBlocks& blocks) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open affected-blocks file: " + path, path);
    std::vector<std::size_t> ids;
    std::vector<double> fractions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        int p, q;
        double fraction;
        if (!(ls >> p)) continue;  // blank line
        if (!(ls >> q >> fraction))
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 'P Q fraction'",
                            path);
        if (p > q) std::swap(p, q);
        const auto match = std::find(blocks.pairs.begin(), blocks.pairs.end(),
                                     std::pair<int, int>{p, q});
        if (match == blocks.pairs.end())
            throw DataError(path + ":" + std::to_string(line_no) + ": parcel pair (" +
                                std::to_string(p) + "," + std::to_string(q) +
                                ") is not a block of the index",
                            path);
        ids.push_back(static_cast<std::size_t>(match - blocks.pairs.begin()));
        fractions.push_back(fraction);
    }
    return {std::move(ids), std::move(fractions)};
}

void save_affected_file(const GroundTruth& truth, const CellBlocks& blocks,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write affected-blocks file: " + path, path);
    char buf[40];
    for (std::size_t i = 0; i < truth.affected_blocks.size(); ++i) {
        const auto& pair = blocks.pairs[truth.affected_blocks[i]];
        const auto end = std::to_chars(buf, buf + sizeof buf, truth.fractions[i]);
        out << pair.first << ' ' << pair.second << ' ' << std::string(buf, end.ptr) << '\n';
    }
}

std::vector<std::size_t> fraction_histogram(const GroundTruth& truth, std::size_t bins) {
    std::vector<std::size_t> histogram(bins, 0);
    for (double fraction : truth.fractions) {
        auto bin = static_cast<std::size_t>(fraction * static_cast<double>(bins));
        if (bin >= bins) bin = bins - 1;
        ++histogram[bin];
    }
    return histogram;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

namespace {

struct CellMoments {
    std::vector<double> mean;  // per upper-triangle cell
    std::vector<double> sd;    // unbiased
};

CellMoments control_moments(const std::vector<ConnectivityMatrix>& controls) {
    const std::size_t n = controls.front().n;
    const std::size_t cells = cell_count(n);
    const double count = static_cast<double>(controls.size());
    CellMoments moments;
    moments.mean.assign(cells, 0.0);
    moments.sd.assign(cells, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k + 1; l < n; ++l) {
            const std::size_t cell = cell_index(k, l, n);
            double sum = 0.0;
            for (const auto& subject : controls) sum += subject.at(k, l);
            const double mean = sum / count;
            double ss = 0.0;
            for (const auto& subject : controls) {
                const double d = subject.at(k, l) - mean;
                ss += d * d;
            }
            moments.mean[cell] = mean;
            moments.sd[cell] = controls.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
        }
    }
    return moments;
}

}  // namespace

SynthesizedGroup synthesize_treatment_group(const std::vector<ConnectivityMatrix>& controls,
                                            const CellBlocks& blocks,
                                            std::span<const std::size_t> affected_blocks,
                                            std::span<const double> fractions, double delta,
                                            std::size_t n_treatment, std::uint64_t seed) {
    if (controls.size() < 2)
        throw std::domain_error("synthesize_treatment_group: need >= 2 controls to estimate sd");
    if (affected_blocks.size() != fractions.size())
        throw std::domain_error("synthesize_treatment_group: one fraction per affected block");
    const std::size_t n = controls.front().n;
    if (blocks.fine_count != n)
        throw std::domain_error("synthesize_treatment_group: block index does not match matrix size");

    const CellMoments moments = control_moments(controls);

    SynthesizedGroup out;
    out.truth.affected_blocks.assign(affected_blocks.begin(), affected_blocks.end());
    out.truth.fractions.assign(fractions.begin(), fractions.end());

    std::vector<char> affected_cell(cell_count(n), 0);
    for (std::size_t i = 0; i < affected_blocks.size(); ++i) {
        const std::size_t block = affected_blocks[i];
        if (block >= blocks.block_count())
            throw std::domain_error("synthesize_treatment_group: affected block " +
                                    std::to_string(block) + " not in the block index");
        const double fraction = fractions[i];
        if (!(fraction > 0.0 && fraction <= 1.0))
            throw std::domain_error("synthesize_treatment_group: fractions must lie in (0,1]");
        const auto& members = blocks.cells[block];
        const auto take = static_cast<std::size_t>(
            std::ceil(fraction * static_cast<double>(members.size())));
        // seeded partial Fisher-Yates over a copy of the member list
        std::vector<std::size_t> pool = members;
        RngStream pick = RngStream::derive(seed, {0xA11, block});
        for (std::size_t j = 0; j < take; ++j) {
            const std::size_t swap_with = j + pick.next_below(pool.size() - j);
            std::swap(pool[j], pool[swap_with]);
            affected_cell[pool[j]] = 1;
            out.truth.affected_cells.push_back(pool[j]);
        }
    }
    std::sort(out.truth.affected_cells.begin(), out.truth.affected_cells.end());

    out.subjects.reserve(n_treatment);
    for (std::size_t subject = 0; subject < n_treatment; ++subject) {
        RngStream rng = RngStream::derive(seed, {0xD0E, subject});
        ConnectivityMatrix matrix = ConnectivityMatrix::zeros(n);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t l = k + 1; l < n; ++l) {
                const std::size_t cell = cell_index(k, l, n);
                double value = moments.mean[cell] + moments.sd[cell] * rng.next_normal();
                if (value < 0.0) value = 0.0;
                if (affected_cell[cell]) {
                    value += delta + moments.sd[cell] * rng.next_normal();
                    if (value < 0.0) value = 0.0;
                }
                matrix.set(k, l, value);
            }
        }
        out.subjects.push_back(std::move(matrix));
    }
    return out;
}

std::vector<ConnectivityMatrix> bootstrap_group(const std::vector<ConnectivityMatrix>& controls,
                                                const CellBlocks& blocks, std::size_t n_subjects,
                                                std::uint64_t seed) {
    return synthesize_treatment_group(controls, blocks, {}, {}, 0.0, n_subjects, seed).subjects;
}

// ---------------------------------------------------------------------------
// Group comparison
// ---------------------------------------------------------------------------

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::srw: return "srw";
        case Strategy::mean_bwa: return "mean_bwa";
        case Strategy::truncated_bwa: return "truncated_bwa";
        case Strategy::bivariate_bwa: return "bivariate_bwa";
    }
    return "?";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
    for (Strategy s : all_strategies)
        if (name == strategy_name(s)) return s;
    return std::nullopt;
}

namespace {

// One-sided pooled two-sample t: p-value against "treatment > control".
// Zero pooled variance degenerates to the constant-difference rule.
double pooled_t_p_greater(std::span<const double> control, std::span<const double> treatment) {
    const double nc = static_cast<double>(control.size());
    const double nt = static_cast<double>(treatment.size());
    double mc = 0.0, mt = 0.0;
    for (double v : control) mc += v;
    for (double v : treatment) mt += v;
    mc /= nc;
    mt /= nt;
    double ss = 0.0;
    for (double v : control) ss += (v - mc) * (v - mc);
    for (double v : treatment) ss += (v - mt) * (v - mt);
    const double df = nc + nt - 2.0;
    const double pooled_var = ss / df;
    const double diff = mt - mc;
    if (pooled_var <= 0.0) return diff > 0.0 ? 0.0 : 1.0;
    const double t = diff / std::sqrt(pooled_var * (1.0 / nc + 1.0 / nt));
    return 1.0 - stats::t_cdf(t, df);
}

double sample_variance(std::span<const double> sample) {
    const double n = static_cast<double>(sample.size());
    double mean = 0.0;
    for (double v : sample) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : sample) ss += (v - mean) * (v - mean);
    return ss / (n - 1.0);
}

struct BlockSummaries {
    std::vector<double> control_mean, treatment_mean;
    std::vector<double> control_trunc, treatment_trunc;
};

BlockSummaries block_summaries(const std::vector<ConnectivityMatrix>& controls,
                               const std::vector<ConnectivityMatrix>& treatments,
                               std::span<const std::size_t> cells, std::size_t n,
                               double threshold) {
    BlockSummaries out;
    const auto summarize = [&](const std::vector<ConnectivityMatrix>& group,
                               std::vector<double>& means, std::vector<double>& truncs) {
        means.reserve(group.size());
        truncs.reserve(group.size());
        for (const auto& subject : group) {
            double sum = 0.0;
            std::size_t above = 0;
            for (std::size_t cell : cells) {
                const auto [k, l] = cell_coords(cell, n);
                const double v = subject.at(k, l);
                sum += v;
                if (v > threshold) ++above;
            }
            means.push_back(sum / static_cast<double>(cells.size()));
            truncs.push_back(static_cast<double>(above) / static_cast<double>(cells.size()));
        }
    };
    summarize(controls, out.control_mean, out.control_trunc);
    summarize(treatments, out.treatment_mean, out.treatment_trunc);
    return out;
}

// Bivariate F with the documented fallbacks; sets `used_fallback`.
double bivariate_block_p(const BlockSummaries& s, blockwise::FConstant constant,
                         bool& used_fallback) {
    std::vector<blockwise::BivariatePoint> control(s.control_mean.size());
    std::vector<blockwise::BivariatePoint> treatment(s.treatment_mean.size());
    for (std::size_t i = 0; i < control.size(); ++i)
        control[i] = {s.control_mean[i], s.control_trunc[i]};
    for (std::size_t i = 0; i < treatment.size(); ++i)
        treatment[i] = {s.treatment_mean[i], s.treatment_trunc[i]};
    try {
        return blockwise::bivariate_f_test(control, treatment, constant).pvalue;
    } catch (const blockwise::SingularCovariance&) {
        used_fallback = true;
        const double nc = static_cast<double>(control.size());
        const double nt = static_cast<double>(treatment.size());
        const double var_mean = ((nc - 1.0) * sample_variance(s.control_mean) +
                                 (nt - 1.0) * sample_variance(s.treatment_mean)) /
                                (nc + nt - 2.0);
        const double var_trunc = ((nc - 1.0) * sample_variance(s.control_trunc) +
                                  (nt - 1.0) * sample_variance(s.treatment_trunc)) /
                                 (nc + nt - 2.0);
        const double scale = std::max({var_mean, var_trunc, 1e-300});
        const bool mean_degenerate = var_mean <= scale * 1e-12;
        const bool trunc_degenerate = var_trunc <= scale * 1e-12;
        if (!mean_degenerate) return pooled_t_p_greater(s.control_mean, s.treatment_mean);
        if (!trunc_degenerate)
            return stats::wmw_test(s.treatment_trunc, s.control_trunc,
                                   stats::Alternative::greater);
        // two constant summaries: any strict increase is conclusive
        const double dm = stats::mean(s.treatment_mean) - stats::mean(s.control_mean);
        const double dt = stats::mean(s.treatment_trunc) - stats::mean(s.control_trunc);
        return (dm > 0.0 || dt > 0.0) ? 0.0 : 1.0;
    }
}

std::vector<std::size_t> covered_cell_list(const CellBlocks& blocks) {
    std::vector<std::size_t> covered;
    covered.reserve(blocks.covered_cells());
    for (std::size_t cell = 0; cell < blocks.block_of_cell.size(); ++cell)
        if (blocks.block_of_cell[cell] >= 0) covered.push_back(cell);
    return covered;
}

}  // namespace

GroupComparison compare_groups(const std::vector<ConnectivityMatrix>& controls,
                               const std::vector<ConnectivityMatrix>& treatments,
                               const CellBlocks& blocks, Strategy strategy,
                               mtp::ProcedureKind method, const CompareOptions& options,
                               const GroundTruth* truth) {
    if (controls.size() < 2 || treatments.size() < 2)
        throw std::domain_error("compare_groups: each group needs >= 2 subjects");
    const std::size_t n = controls.front().n;
    for (const auto& subject : controls)
        if (subject.n != n) throw DataError("compare_groups: control sizes differ");
    for (const auto& subject : treatments)
        if (subject.n != n) throw DataError("compare_groups: treatment size differs from controls");
    if (blocks.fine_count != n)
        throw std::domain_error("compare_groups: block index does not match matrix size");

    GroupComparison result;
    result.strategy = strategy;
    result.method = method;
    result.alpha = options.alpha;
    result.cell_level = strategy == Strategy::srw;

    if (strategy == Strategy::srw) {
        const auto covered = covered_cell_list(blocks);
        result.raw_p.resize(covered.size());
        result.fallback.assign(covered.size(), 0);
        std::vector<double> control_values(controls.size());
        std::vector<double> treatment_values(treatments.size());
        for (std::size_t unit = 0; unit < covered.size(); ++unit) {
            const auto [k, l] = cell_coords(covered[unit], n);
            for (std::size_t s = 0; s < controls.size(); ++s)
                control_values[s] = controls[s].at(k, l);
            for (std::size_t s = 0; s < treatments.size(); ++s)
                treatment_values[s] = treatments[s].at(k, l);
            result.raw_p[unit] = pooled_t_p_greater(control_values, treatment_values);
        }
    } else {
        const std::size_t m = blocks.block_count();
        result.raw_p.resize(m);
        result.fallback.assign(m, 0);
        for (std::size_t b = 0; b < m; ++b) {
            const auto summaries =
                block_summaries(controls, treatments, blocks.cells[b], n, options.threshold);
            bool used_fallback = false;
            switch (strategy) {
                case Strategy::mean_bwa:
                    result.raw_p[b] =
                        pooled_t_p_greater(summaries.control_mean, summaries.treatment_mean);
                    break;
                case Strategy::truncated_bwa:
                    result.raw_p[b] = stats::wmw_test(summaries.treatment_trunc,
                                                      summaries.control_trunc,
                                                      stats::Alternative::greater);
                    break;
                case Strategy::bivariate_bwa:
                    result.raw_p[b] =
                        bivariate_block_p(summaries, options.f_constant, used_fallback);
                    break;
                default: break;
            }
            result.fallback[b] = used_fallback ? 1 : 0;
        }
    }

    result.adjusted_p = mtp::adjust_pvalues(result.raw_p, method);
    for (std::size_t unit = 0; unit < result.adjusted_p.size(); ++unit)
        if (result.adjusted_p[unit] <= options.alpha) result.rejected.push_back(unit);

    if (truth != nullptr) {
        std::vector<std::size_t> affected_units;
        if (strategy == Strategy::srw) {
            const auto covered = covered_cell_list(blocks);
            std::vector<int> unit_of_cell(blocks.block_of_cell.size(), -1);
            for (std::size_t unit = 0; unit < covered.size(); ++unit)
                unit_of_cell[covered[unit]] = static_cast<int>(unit);
            for (std::size_t cell : truth->affected_cells)
                if (cell < unit_of_cell.size() && unit_of_cell[cell] >= 0)
                    affected_units.push_back(static_cast<std::size_t>(unit_of_cell[cell]));
        } else {
            affected_units = truth->affected_blocks;
        }
        result.table = mtp::tabulate(result.rejected, affected_units, result.raw_p.size());
        result.rates = mtp::empirical_rates(*result.table);
        if (result.table->m1() > 0)
            result.avg_power = static_cast<double>(result.table->false_null_rejected) /
                               static_cast<double>(result.table->m1());
    }
    return result;
}

bool GroupComparison::any_fallback() const {
    return std::any_of(fallback.begin(), fallback.end(), [](std::uint8_t f) { return f != 0; });
}

std::string comparison_to_json(const GroupComparison& comparison, const CellBlocks& blocks,
                               int indent) {
    nlohmann::json doc;
    doc["strategy"] = strategy_name(comparison.strategy);
    doc["method"] = mtp::procedure_name(comparison.method);
    doc["alpha"] = comparison.alpha;
    doc["units"] = comparison.cell_level ? "cells" : "blocks";

    std::vector<char> rejected(comparison.raw_p.size(), 0);
    for (std::size_t unit : comparison.rejected) rejected[unit] = 1;

    nlohmann::json units = nlohmann::json::array();
    const auto covered = comparison.cell_level ? covered_cell_list(blocks)
                                               : std::vector<std::size_t>{};
    for (std::size_t unit = 0; unit < comparison.raw_p.size(); ++unit) {
        nlohmann::json row;
        if (comparison.cell_level) {
            const auto [k, l] = cell_coords(covered[unit], blocks.fine_count);
            row["cell"] = {k, l};
            const int block = blocks.block_of_cell[covered[unit]];
            row["block"] = block;
        } else {
            row["block"] = unit;
            row["parcels"] = {blocks.pairs[unit].first, blocks.pairs[unit].second};
            row["size"] = blocks.cells[unit].size();
        }
        row["p"] = comparison.raw_p[unit];
        row["p_adjusted"] = comparison.adjusted_p[unit];
        row["rejected"] = rejected[unit] != 0;
        if (comparison.fallback[unit]) row["fallback"] = true;
        units.push_back(std::move(row));
    }
    doc["results"] = std::move(units);
    doc["rejections"] = comparison.rejected.size();
    doc["any_fallback"] = comparison.any_fallback();

    if (comparison.table) {
        doc["decision_table"] = {{"U", comparison.table->true_null_accepted},
                                 {"V", comparison.table->true_null_rejected},
                                 {"T", comparison.table->false_null_accepted},
                                 {"S", comparison.table->false_null_rejected},
                                 {"m0", comparison.table->m0()},
                                 {"m1", comparison.table->m1()},
                                 {"m", comparison.table->m()},
                                 {"R", comparison.table->rejections()}};
    }
    if (comparison.rates) {
        nlohmann::json rates;
        if (comparison.rates->type_i) rates["type_i"] = *comparison.rates->type_i;
        if (comparison.rates->type_ii) rates["type_ii"] = *comparison.rates->type_ii;
        rates["fdp"] = comparison.rates->fdp;
        rates["any_false_positive"] = comparison.rates->any_false_positive;
        doc["rates"] = std::move(rates);
    }
    if (comparison.avg_power) doc["avg_power"] = *comparison.avg_power;
    return doc.dump(indent) + "\n";
}

// ---------------------------------------------------------------------------
// Synthetic cohort
// ---------------------------------------------------------------------------

std::vector<ConnectivityMatrix> synthetic_controls(const SyntheticConfig& config,
                                                   std::uint64_t seed) {
    const std::size_t n = config.regions;
    if (n < 2) throw std::domain_error("synthetic_controls: need at least two ROIs");
    const std::size_t cells = cell_count(n);

    // structural layout: shared across subjects
    std::vector<char> connected(cells, 0);
    std::vector<double> latent_mean(cells, 0.0);
    std::vector<double> latent_sd(cells, 0.0);
    RngStream structure = RngStream::derive(seed, {0x57A});
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k + 1; l < n; ++l) {
            const std::size_t cell = cell_index(k, l, n);
            const double distance =
                static_cast<double>(l - k) / static_cast<double>(n - 1);
            const double p_conn =
                config.conn_near + (config.conn_far - config.conn_near) * distance;
            const bool is_connected = structure.next_uniform() < p_conn;
            const double strength =
                config.value_scale *
                (config.value_floor +
                 (1.0 - config.value_floor) * std::exp(-config.value_decay * distance)) *
                std::exp(config.value_spread * structure.next_normal());
            connected[cell] = is_connected ? 1 : 0;
            latent_mean[cell] = strength;
            latent_sd[cell] = config.noise_ratio * strength;
        }
    }

    std::vector<ConnectivityMatrix> group;
    group.reserve(config.subjects);
    for (std::size_t subject = 0; subject < config.subjects; ++subject) {
        RngStream rng = RngStream::derive(seed, {0x5B1, subject});
        ConnectivityMatrix matrix = ConnectivityMatrix::zeros(n);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t l = k + 1; l < n; ++l) {
                const std::size_t cell = cell_index(k, l, n);
                if (!connected[cell]) continue;
                const double value =
                    latent_mean[cell] + latent_sd[cell] * rng.next_normal();
                matrix.set(k, l, value < 0.0 ? 0.0 : value);
            }
        }
        group.push_back(std::move(matrix));
    }
    return group;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

std::vector<ExperimentCell> run_group_experiment(const ExperimentConfig& config,
                                                 std::span<const Strategy> strategies,
                                                 std::span<const mtp::ProcedureKind> methods,
                                                 unsigned threads) {
    const auto controls =
        synthetic_controls(config.synthetic, RngStream::derive(config.seed, {1}).next_u64());
    const auto hierarchy =
        uniform_hierarchy(config.synthetic.regions, config.synthetic.parcels);
    const auto blocks = blocks_from_hierarchy(hierarchy, config.synthetic.regions,
                                              config.synthetic.parcels, false);
    if (config.affected_block_count > blocks.block_count())
        throw std::domain_error("run_group_experiment: more affected blocks than blocks");

    const std::size_t combos = strategies.size() * methods.size();
    struct RepRow {
        double power = std::numeric_limits<double>::quiet_NaN();
        double any_false = 0.0;
    };
    std::vector<RepRow> rows(config.replications * combos);

    parallel_for(
        config.replications,
        [&](std::size_t rep) {
            const std::vector<ConnectivityMatrix>* baseline = &controls;
            std::vector<ConnectivityMatrix> bootstrap;
            SynthesizedGroup synthesized;

            if (config.bootstrap_baseline) {
                bootstrap = bootstrap_group(controls, blocks, config.synthetic.subjects,
                                            RngStream::derive(config.seed, {2, rep}).next_u64());
                baseline = &bootstrap;
            }

            std::vector<std::size_t> affected;
            std::vector<double> fractions;
            if (config.affected_block_count > 0) {
                RngStream select = RngStream::derive(config.seed, {3, rep});
                std::vector<std::size_t> pool(blocks.block_count());
                std::iota(pool.begin(), pool.end(), std::size_t{0});
                for (std::size_t i = 0; i < config.affected_block_count; ++i) {
                    const std::size_t j = i + select.next_below(pool.size() - i);
                    std::swap(pool[i], pool[j]);
                    affected.push_back(pool[i]);
                }
                std::sort(affected.begin(), affected.end());
                for (std::size_t i = 0; i < affected.size(); ++i)
                    fractions.push_back(config.fraction_min +
                                        (config.fraction_max - config.fraction_min) *
                                            select.next_uniform());
            }

            synthesized = synthesize_treatment_group(
                controls, blocks, affected, fractions, config.delta, config.synthetic.subjects,
                RngStream::derive(config.seed, {4, rep}).next_u64());

            CompareOptions options;
            options.alpha = config.alpha;
            std::size_t combo = 0;
            for (Strategy strategy : strategies) {
                for (mtp::ProcedureKind method : methods) {
                    const auto comparison =
                        compare_groups(*baseline, synthesized.subjects, blocks, strategy, method,
                                       options, &synthesized.truth);
                    RepRow& row = rows[rep * combos + combo];
                    if (comparison.avg_power) row.power = *comparison.avg_power;
                    row.any_false =
                        comparison.rates && comparison.rates->any_false_positive ? 1.0 : 0.0;
                    ++combo;
                }
            }
        },
        threads);

    std::vector<ExperimentCell> cells;
    cells.reserve(combos);
    const double reps = static_cast<double>(config.replications);
    std::size_t combo = 0;
    for (Strategy strategy : strategies) {
        for (mtp::ProcedureKind method : methods) {
            ExperimentCell cell;
            cell.strategy = strategy;
            cell.method = method;
            cell.replications = config.replications;
            double power_sum = 0.0, power_sq = 0.0, fwer_sum = 0.0;
            bool has_power = true;
            for (std::size_t rep = 0; rep < config.replications; ++rep) {
                const RepRow& row = rows[rep * combos + combo];
                if (std::isnan(row.power)) has_power = false;
                else {
                    power_sum += row.power;
                    power_sq += row.power * row.power;
                }
                fwer_sum += row.any_false;
            }
            if (has_power && config.replications > 0) {
                cell.avg_power = power_sum / reps;
                const double var =
                    std::max(0.0, power_sq / reps - cell.avg_power * cell.avg_power);
                cell.se_power = std::sqrt(var / reps);
            } else {
                cell.avg_power = std::numeric_limits<double>::quiet_NaN();
                cell.se_power = std::numeric_limits<double>::quiet_NaN();
            }
            cell.fwer = fwer_sum / reps;
            cell.se_fwer = std::sqrt(std::max(0.0, cell.fwer * (1.0 - cell.fwer)) / reps);
            cells.push_back(cell);
            ++combo;
        }
    }
    return cells;
}

}  // namespace bwa::conn
