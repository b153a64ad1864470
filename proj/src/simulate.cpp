#include "bwa/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "bwa/parallel.hpp"
#include "bwa/rng.hpp"

namespace bwa::sim {

using stats::normal_cdf;
using stats::normal_quantile;

double analytic_power_srw(double delta, double alpha, std::size_t total_regions, double sigma0,
                          double sigma1) {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0))
        throw std::domain_error("analytic_power_srw: sigmas must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("analytic_power_srw: alpha in (0,1)");
    if (total_regions < 1) throw std::domain_error("analytic_power_srw: M >= 1");
    const double crit = sigma0 * normal_quantile(1.0 - alpha / static_cast<double>(total_regions));
    return 1.0 - normal_cdf((crit - delta) / sigma1);
}

double analytic_power_bwa_full(double delta, double alpha, std::size_t block_count,
                               std::size_t block_size, double sigma0, double sigma1) {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0))
        throw std::domain_error("analytic_power_bwa_full: sigmas must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("analytic_power_bwa_full: alpha in (0,1)");
    if (block_count < 1 || block_size < 1)
        throw std::domain_error("analytic_power_bwa_full: m,b >= 1");
    const double crit = sigma0 * normal_quantile(1.0 - alpha / static_cast<double>(block_count));
    return 1.0 - normal_cdf((crit - delta * std::sqrt(static_cast<double>(block_size))) / sigma1);
}

double mixture_sigma(double delta, double sigma0, double sigma1, std::size_t k, std::size_t b) {
    if (b < 1 || k > b) throw std::domain_error("mixture_sigma: need 0 <= k <= b, b >= 1");
    if (!(sigma0 >= 0.0) || !(sigma1 >= 0.0))
        throw std::domain_error("mixture_sigma: sigmas must be non-negative");
    const double frac = static_cast<double>(k) / static_cast<double>(b);
    return std::sqrt(frac * sigma1 * sigma1 + (1.0 - frac) * sigma0 * sigma0 +
                     delta * delta * frac * (1.0 - frac));
}

double analytic_power_bwa_partial(double delta, double alpha, std::size_t block_count,
                                  std::size_t block_size, std::size_t k, double sigma0,
                                  double sigma1) {
    if (k < 1 || k > block_size)
        throw std::domain_error("analytic_power_bwa_partial: need 1 <= k <= b");
    const double frac = static_cast<double>(k) / static_cast<double>(block_size);
    const double sigma_k = mixture_sigma(delta, sigma0, sigma1, k, block_size);
    const double crit = sigma0 * normal_quantile(1.0 - alpha / static_cast<double>(block_count));
    const double shift = frac * delta * std::sqrt(static_cast<double>(block_size));
    return 1.0 - normal_cdf((crit - shift) / sigma_k);
}

std::optional<double> crossover_fraction(double delta, double alpha, std::size_t block_count,
                                         std::size_t block_size, std::size_t total_regions,
                                         double sigma0, double sigma1) {
    if (delta <= 0.0) return std::nullopt;  // both powers degenerate to test levels
    const double srw = analytic_power_srw(delta, alpha, total_regions, sigma0, sigma1);
    for (std::size_t k = 1; k <= block_size; ++k) {
        const double bwa =
            analytic_power_bwa_partial(delta, alpha, block_count, block_size, k, sigma0, sigma1);
        if (bwa >= srw) return static_cast<double>(k) / static_cast<double>(block_size);
    }
    return std::nullopt;
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::srw: return "srw";
        case Strategy::mean_bwa: return "mean_bwa";
    }
    return "?";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
    if (name == "srw") return Strategy::srw;
    if (name == "mean_bwa") return Strategy::mean_bwa;
    return std::nullopt;
}

void ScenarioConfig::validate() const {
    if (total_regions == 0) throw std::domain_error("scenario: M >= 1");
    if (block_size == 0 || total_regions % block_size != 0)
        throw std::domain_error("scenario: block size must divide M");
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) throw std::domain_error("scenario: sigmas positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("scenario: alpha in (0,1)");
    if (delta < 0.0) throw std::domain_error("scenario: delta >= 0");
    const std::size_t m = block_count();
    if (fully_affected_blocks + partially_affected_blocks > m)
        throw std::domain_error("scenario: affected blocks exceed block count");
    if (partially_affected_blocks > 0 &&
        (affected_per_partial < 1 || affected_per_partial > block_size))
        throw std::domain_error("scenario: need 1 <= k <= b for partial blocks");
    if (n_sim == 0) throw std::domain_error("scenario: n_sim >= 1");
}

namespace {

struct RepOutcome {
    double power = std::numeric_limits<double>::quiet_NaN();
    double any_false = 0.0;
    double fdp = 0.0;
};

// upper-tail p-value of a standardized draw
inline double upper_p(double z) { return 0.5 * std::erfc(z * 0.70710678118654752440); }

// Regions are laid out block-contiguously: fully affected blocks first,
// then partially affected blocks. Inside a partial block every region
// carries the shift independently with probability k/b, the sampling model
// behind the mixture-variance power formula. Block-level ground truth is
// the designated m1+m2 blocks; region-level ground truth is the realized
// affection pattern.
RepOutcome run_replication(const ScenarioConfig& cfg, Strategy strategy,
                           mtp::ProcedureKind method, std::uint64_t cell_id, std::size_t rep,
                           std::vector<double>& pvalues, std::vector<char>& affected) {
    const std::size_t m = cfg.block_count();
    const std::size_t b = cfg.block_size;
    const std::size_t affected_blocks = cfg.fully_affected_blocks + cfg.partially_affected_blocks;
    const double partial_fraction = cfg.partially_affected_blocks > 0
                                        ? static_cast<double>(cfg.affected_per_partial) /
                                              static_cast<double>(b)
                                        : 0.0;

    RngStream rng = RngStream::derive(cfg.seed, {cell_id, rep});

    const bool region_level = strategy == Strategy::srw;
    if (region_level) {
        pvalues.resize(cfg.total_regions);
        affected.assign(cfg.total_regions, 0);
    } else {
        pvalues.resize(m);
    }

    std::size_t realized_affected = 0;
    const double root_b = std::sqrt(static_cast<double>(b));
    std::size_t j = 0;
    for (std::size_t block = 0; block < m; ++block) {
        double sum = 0.0;
        for (std::size_t offset = 0; offset < b; ++offset, ++j) {
            bool hit = false;
            if (block < cfg.fully_affected_blocks) hit = true;
            else if (block < affected_blocks) hit = rng.next_uniform() < partial_fraction;
            const double x = hit ? cfg.mu0 + cfg.delta + cfg.sigma1 * rng.next_normal()
                                 : cfg.mu0 + cfg.sigma0 * rng.next_normal();
            if (region_level) {
                pvalues[j] = upper_p((x - cfg.mu0) / cfg.sigma0);
                if (hit) {
                    affected[j] = 1;
                    ++realized_affected;
                }
            } else {
                sum += x;
            }
        }
        if (!region_level) {
            const double t = sum / static_cast<double>(b);
            pvalues[block] = upper_p(root_b * (t - cfg.mu0) / cfg.sigma0);
        }
    }

    const auto adjusted = mtp::adjust_pvalues(pvalues, method);
    std::size_t v = 0, s = 0;
    std::size_t true_units = 0;
    if (region_level) {
        true_units = realized_affected;
        for (std::size_t unit = 0; unit < cfg.total_regions; ++unit) {
            if (adjusted[unit] > cfg.alpha) continue;
            if (affected[unit]) ++s;
            else ++v;
        }
    } else {
        true_units = affected_blocks;
        for (std::size_t block = 0; block < m; ++block) {
            if (adjusted[block] > cfg.alpha) continue;
            if (block < affected_blocks) ++s;
            else ++v;
        }
    }

    RepOutcome out;
    const std::size_t r = v + s;
    if (true_units > 0)
        out.power = static_cast<double>(s) / static_cast<double>(true_units);
    out.any_false = v >= 1 ? 1.0 : 0.0;
    out.fdp = static_cast<double>(v) / static_cast<double>(std::max<std::size_t>(r, 1));
    return out;
}

}  // namespace

SimulationResult simulate_scenario(const ScenarioConfig& cfg, Strategy strategy,
                                   mtp::ProcedureKind method, std::uint64_t cell_id,
                                   unsigned threads) {
    cfg.validate();
    std::vector<RepOutcome> outcomes(cfg.n_sim);
    parallel_for(
        cfg.n_sim,
        [&](std::size_t rep) {
            thread_local std::vector<double> pvalues;
            thread_local std::vector<char> affected;
            outcomes[rep] = run_replication(cfg, strategy, method, cell_id, rep, pvalues, affected);
        },
        threads);

    // sequential reduction keeps results independent of the thread count
    SimulationResult result;
    result.n_sim = cfg.n_sim;
    const double n = static_cast<double>(cfg.n_sim);
    double power_sum = 0.0, power_sq = 0.0, fwer_sum = 0.0, fdp_sum = 0.0;
    std::size_t power_reps = 0;  // replications with at least one affected unit
    for (const auto& o : outcomes) {
        if (!std::isnan(o.power)) {
            power_sum += o.power;
            power_sq += o.power * o.power;
            ++power_reps;
        }
        fwer_sum += o.any_false;
        fdp_sum += o.fdp;
    }
    if (power_reps > 0) {
        const double np = static_cast<double>(power_reps);
        result.avg_power = power_sum / np;
        const double var = std::max(0.0, power_sq / np - result.avg_power * result.avg_power);
        result.se_power = std::sqrt(var / np);
    } else {
        result.avg_power = std::numeric_limits<double>::quiet_NaN();
        result.se_power = std::numeric_limits<double>::quiet_NaN();
    }
    result.fwer = fwer_sum / n;
    result.se_fwer = std::sqrt(std::max(0.0, result.fwer * (1.0 - result.fwer)) / n);
    result.fdr = fdp_sum / n;
    return result;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    const auto result = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, result.ptr);
}

}  // namespace

std::string SweepTable::to_tsv() const {
    std::string out =
        "strategy\tmethod\tdelta\tk_over_b\tb\tm\tavg_power\tfwer\tfdr\tse_power\tse_fwer\t"
        "analytic_power\tn_sim\n";
    for (const auto& c : cells) {
        out += strategy_name(c.strategy);
        out += '\t';
        out += mtp::procedure_name(c.method);
        out += '\t';
        out += format_double(c.delta);
        out += '\t';
        out += format_double(c.k_over_b);
        out += '\t';
        out += std::to_string(c.block_size);
        out += '\t';
        out += std::to_string(c.block_count);
        out += '\t';
        out += format_double(c.mc.avg_power);
        out += '\t';
        out += format_double(c.mc.fwer);
        out += '\t';
        out += format_double(c.mc.fdr);
        out += '\t';
        out += format_double(c.mc.se_power);
        out += '\t';
        out += format_double(c.mc.se_fwer);
        out += '\t';
        out += c.analytic_power ? format_double(*c.analytic_power) : std::string("");
        out += '\t';
        out += std::to_string(c.mc.n_sim);
        out += '\n';
    }
    return out;
}

std::string SweepTable::to_json() const {
    nlohmann::json doc;
    doc["config"] = {{"M", base.total_regions},    {"mu0", base.mu0},
                     {"sigma0", base.sigma0},      {"sigma1", base.sigma1},
                     {"alpha", base.alpha},        {"n_sim", base.n_sim},
                     {"seed", base.seed}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json row = {
            {"strategy", strategy_name(c.strategy)},
            {"method", mtp::procedure_name(c.method)},
            {"delta", c.delta},
            {"k_over_b", c.k_over_b},
            {"b", c.block_size},
            {"m", c.block_count},
            {"avg_power", std::isnan(c.mc.avg_power) ? nlohmann::json(nullptr)
                                                     : nlohmann::json(c.mc.avg_power)},
            {"fwer", c.mc.fwer},
            {"fdr", c.mc.fdr},
            {"se_power", std::isnan(c.mc.se_power) ? nlohmann::json(nullptr)
                                                   : nlohmann::json(c.mc.se_power)},
            {"se_fwer", c.mc.se_fwer},
            {"n_sim", c.mc.n_sim},
        };
        if (c.analytic_power) row["analytic_power"] = *c.analytic_power;
        else row["analytic_power"] = nullptr;
        rows.push_back(std::move(row));
    }
    doc["cells"] = std::move(rows);
    return doc.dump(2) + "\n";
}

SweepTable power_sweep(const SweepRequest& request, unsigned threads) {
    if (request.block_sizes.empty()) throw std::domain_error("power_sweep: no block sizes");
    if (request.strategies.empty()) throw std::domain_error("power_sweep: no strategies");
    if (request.methods.empty()) throw std::domain_error("power_sweep: no methods");

    std::vector<double> deltas = request.deltas;
    if (deltas.empty()) deltas.push_back(request.base.delta);

    SweepTable table;
    table.base = request.base;

    std::uint64_t cell_id = request.cell_id_base;
    for (Strategy strategy : request.strategies) {
        for (mtp::ProcedureKind method : request.methods) {
            for (std::size_t b : request.block_sizes) {
                for (double delta : deltas) {
                    ScenarioConfig cfg = request.base;
                    cfg.block_size = b;
                    cfg.delta = delta;
                    const std::size_t m = cfg.block_count();

                    std::vector<std::size_t> k_values = request.k_values;
                    if (k_values.empty()) {
                        // fully affected layout, M1 held fixed across b
                        std::size_t target = request.affected_region_target;
                        if (target == 0) target = cfg.fully_affected_blocks * b;
                        if (target % b != 0)
                            throw std::domain_error(
                                "power_sweep: affected regions must fill whole blocks");
                        cfg.fully_affected_blocks = target / b;
                        cfg.partially_affected_blocks = 0;
                        cfg.affected_per_partial = 0;
                        SweepCell cell;
                        cell.strategy = strategy;
                        cell.method = method;
                        cell.delta = delta;
                        cell.k_over_b = 1.0;
                        cell.block_size = b;
                        cell.block_count = m;
                        cell.mc = simulate_scenario(cfg, strategy, method, cell_id++, threads);
                        if (method == mtp::ProcedureKind::bonferroni) {
                            cell.analytic_power =
                                strategy == Strategy::srw
                                    ? analytic_power_srw(delta, cfg.alpha, cfg.total_regions,
                                                         cfg.sigma0, cfg.sigma1)
                                    : analytic_power_bwa_full(delta, cfg.alpha, m, b, cfg.sigma0,
                                                              cfg.sigma1);
                        }
                        table.cells.push_back(std::move(cell));
                    } else {
                        for (std::size_t k : k_values) {
                            ScenarioConfig partial = cfg;
                            partial.fully_affected_blocks = 0;
                            partial.partially_affected_blocks = request.base.partially_affected_blocks;
                            partial.affected_per_partial = k;
                            SweepCell cell;
                            cell.strategy = strategy;
                            cell.method = method;
                            cell.delta = delta;
                            cell.k_over_b = static_cast<double>(k) / static_cast<double>(b);
                            cell.block_size = b;
                            cell.block_count = m;
                            cell.mc =
                                simulate_scenario(partial, strategy, method, cell_id++, threads);
                            if (method == mtp::ProcedureKind::bonferroni) {
                                cell.analytic_power =
                                    strategy == Strategy::srw
                                        ? analytic_power_srw(delta, cfg.alpha, cfg.total_regions,
                                                             cfg.sigma0, cfg.sigma1)
                                        : analytic_power_bwa_partial(delta, cfg.alpha, m, b, k,
                                                                     cfg.sigma0, cfg.sigma1);
                            }
                            table.cells.push_back(std::move(cell));
                        }
                    }
                }
            }
        }
    }
    return table;
}

namespace {

Example2 build_example2() {
    Example2 ex;
    ex.region.values = {
        3.26,  4.48,  2.27,  -0.83, 0.06,  0.32,  6.32,  1.07,   //
        2.17,  4.26,  4.21,  0.67,  -1.39, 0.69,  -0.62, -1.1,   //
        4.48,  1.47,  2.1,   -2.58, 1.36,  6.23,  0.72,  0.46,   //
        2.89,  2.74,  1.74,  0.86,  2.2,   1.01,  0.5,   -1.79,  //
        -0.29, 1.06,  2.73,  -0.49, 1.13,  0.72,  9.18,  -1.73,  //
        0.22,  -0.28, -0.16, 0.45,  -5.45, -0.7,  -0.19, -1.27,  //
        -0.49, 0.51,  -0.64, 0.2,   0.44,  0.18,  -0.63, 0.59,   //
        -1.87, 1.29,  -0.23, 0.6,   1.37,  1.94,  -1.91, -0.33,
    };
    // rows split 4/4, columns split 3/2/3: sizes {12,8,12,12,8,12}
    for (std::size_t row = 0; row < 8; ++row) {
        for (std::size_t col = 0; col < 8; ++col) {
            const std::size_t band_row = row < 4 ? 0 : 1;
            const std::size_t band_col = col < 3 ? 0 : (col < 5 ? 1 : 2);
            ex.partition.assign(row * 8 + col, band_row * 3 + band_col);
        }
    }
    ex.affected_blocks = {0};
    for (std::size_t row = 0; row < 4; ++row)
        for (std::size_t col = 0; col < 3; ++col) ex.affected_regions.push_back(row * 8 + col);
    ex.block_names = {"top-left",    "top-middle",    "top-right",
                      "bottom-left", "bottom-middle", "bottom-right"};
    return ex;
}

}  // namespace

const Example2& example2_fixture() {
    static const Example2 fixture = build_example2();
    return fixture;
}

}  // namespace bwa::sim
