// Acceptance suite: one test case per criterion, each printing a
// [PASS]/[FAIL] line. Monte Carlo criteria run at fixed seeds and their
// stated replication counts, so the whole suite is deterministic.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bwa/blockwise.hpp"
#include "bwa/connectome.hpp"
#include "bwa/mtp.hpp"
#include "bwa/simulate.hpp"
#include "oracles.hpp"

using namespace bwa;

namespace {

bool report(int criterion, const std::string& what, bool ok) {
    std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    return ok;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// ---------------------------------------------------------------------------
// Shared Monte Carlo grid (criteria 4, 6, 7)
// ---------------------------------------------------------------------------

struct GridCell {
    double delta;
    std::size_t b;
    sim::SimulationResult mc;
    double analytic;
};

struct SharedGrid {
    std::vector<GridCell> bwa_full;           // delta x b, mean-BWA + bonferroni
    std::vector<GridCell> srw;                // delta, SRW + bonferroni
    std::vector<GridCell> bwa_partial;        // delta x k (b=20), mean-BWA + bonferroni
    double grid_seconds = 0.0;
};

const SharedGrid& shared_grid() {
    static const SharedGrid grid = [] {
        Stopwatch timer;
        SharedGrid g;
        const std::vector<double> deltas{0.5, 1.0, 2.0, 3.0};
        const std::vector<std::size_t> sizes{2, 4, 5};
        std::uint64_t cell_id = 0;

        sim::ScenarioConfig base;
        base.total_regions = 1000;
        base.alpha = 0.05;
        base.n_sim = 10000;
        base.seed = 0xC4;

        for (double delta : deltas) {
            for (std::size_t b : sizes) {
                sim::ScenarioConfig cfg = base;
                cfg.block_size = b;
                cfg.delta = delta;
                cfg.fully_affected_blocks = 100 / b;  // M1 = 100
                GridCell cell{delta, b,
                              sim::simulate_scenario(cfg, sim::Strategy::mean_bwa,
                                                     mtp::ProcedureKind::bonferroni, cell_id++),
                              sim::analytic_power_bwa_full(delta, 0.05, 1000 / b, b, 1, 1)};
                g.bwa_full.push_back(cell);
            }
            sim::ScenarioConfig cfg = base;
            cfg.block_size = 1;
            cfg.delta = delta;
            cfg.fully_affected_blocks = 100;
            GridCell cell{delta, 1,
                          sim::simulate_scenario(cfg, sim::Strategy::srw,
                                                 mtp::ProcedureKind::bonferroni, cell_id++),
                          sim::analytic_power_srw(delta, 0.05, 1000, 1, 1)};
            g.srw.push_back(cell);
        }

        // partial blocks: b=20, m=50, m1=0, m2=m/5=10 (the figure-2 layout)
        for (double delta : deltas) {
            for (std::size_t k : {std::size_t{4}, std::size_t{10}, std::size_t{16}}) {
                sim::ScenarioConfig cfg = base;
                cfg.block_size = 20;
                cfg.delta = delta;
                cfg.partially_affected_blocks = 10;
                cfg.affected_per_partial = k;
                GridCell cell{delta, k,
                              sim::simulate_scenario(cfg, sim::Strategy::mean_bwa,
                                                     mtp::ProcedureKind::bonferroni, cell_id++),
                              sim::analytic_power_bwa_partial(delta, 0.05, 50, 20, k, 1, 1)};
                g.bwa_partial.push_back(cell);
            }
        }
        g.grid_seconds = timer.seconds();
        return g;
    }();
    return grid;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("criterion 1: printed example, region-wise outcome") {
    Stopwatch timer;
    const auto& example = sim::example2_fixture();
    std::vector<double> pvalues;
    for (double z : example.region.values) pvalues.push_back(1.0 - stats::normal_cdf(z));
    const auto rejected = mtp::reject(pvalues, mtp::ProcedureKind::bonferroni, 0.05);
    const auto table = mtp::tabulate(rejected, example.affected_regions, 64);
    const auto rates = mtp::empirical_rates(table);

    bool ok = rejected.size() == 8;
    ok = ok && table.true_null_rejected == 3 && table.false_null_rejected == 5 &&
         table.false_null_accepted == 7;
    ok = ok && *rates.type_i == 3.0 / 52.0 && *rates.type_ii == 7.0 / 12.0;
    ok = ok && timer.seconds() < 1.0;
    CHECK(report(1, "SRW+Bonferroni on the 8x8 example: 8 rejections, V=3 S=5 T=7, "
                    "rates 3/52 and 7/12, under 1 s",
                 ok));
}

TEST_CASE("criterion 2: critical values") {
    Stopwatch timer;
    const double srw = stats::normal_quantile(1.0 - 0.05 / 64.0);
    const double b12 = blockwise::bwa_critical_value(0.05, 6, 12, 0.0, 1.0);
    const double b8 = blockwise::bwa_critical_value(0.05, 6, 8, 0.0, 1.0);
    bool ok = std::fabs(srw - 3.16) <= 0.005;
    ok = ok && std::fabs(b12 - 0.691) <= 0.001;
    ok = ok && std::fabs(b8 - 0.846) <= 0.001;
    ok = ok && timer.seconds() < 1.0;
    CHECK(report(2, "critical values 3.16 +/- 0.005, 0.691 +/- 0.001, 0.846 +/- 0.001", ok));
}

TEST_CASE("criterion 3: printed example, block-wise decisions") {
    const auto& example = sim::example2_fixture();
    const blockwise::NullModel null_model{0.0, 1.0};
    const blockwise::GroundTruth truth = example.affected_blocks;

    const auto analyze = [&](blockwise::SummaryKind kind) {
        return blockwise::run_block_analysis(example.region, example.partition, kind,
                                             mtp::ProcedureKind::bonferroni, 0.05, null_model,
                                             truth);
    };
    const auto mean_run = analyze(blockwise::SummaryKind::mean);
    const auto median_run = analyze(blockwise::SummaryKind::median);
    const auto huber_run = analyze(blockwise::SummaryKind::huber);

    bool ok = mean_run.rejected_blocks == std::vector<std::size_t>{0, 2} &&
              *mean_run.rates->type_i == 0.2 && *mean_run.rates->type_ii == 0.0;
    for (const auto* run : {&median_run, &huber_run}) {
        ok = ok && run->rejected_blocks == std::vector<std::size_t>{0} &&
             *run->rates->type_i == 0.0 && *run->rates->type_ii == 0.0;
    }

    // the consistent printed summary values (others are documented typos)
    ok = ok && std::fabs(mean_run.summaries[1].value - 0.04) <= 0.01;   // top-middle mean
    ok = ok && std::fabs(mean_run.summaries[2].value - 1.15) <= 0.01;   // top-right mean
    ok = ok && std::fabs(mean_run.summaries[3].value - 0.15) <= 0.01;   // bottom-left mean
    ok = ok && std::fabs(median_run.summaries[3].value - (-0.2)) <= 0.01;
    ok = ok && std::fabs(median_run.summaries[1].value - 0.36) <= 0.01;
    ok = ok && std::fabs(median_run.summaries[5].value - (-0.26)) <= 0.01;
    ok = ok && std::fabs(mean_run.summaries[0].value - 3.08) <= 0.1;    // top-left mean

    CHECK(report(3, "block decisions: mean rejects {top-left, top-right}, median/huber "
                    "reject {top-left}, consistent summary cells match",
                 ok));
}

TEST_CASE("criterion 4: analytic formulas match Monte Carlo at 3 SE") {
    const auto& grid = shared_grid();
    // SE definition as documented for sweep estimates:
    // sqrt(p(1-p)/n_sim), evaluated at the hypothesized (analytic) value so
    // saturated cells keep a proper binomial scale.
    const auto within = [](const GridCell& cell) {
        const double se =
            std::sqrt(cell.analytic * (1.0 - cell.analytic) / static_cast<double>(cell.mc.n_sim));
        return std::fabs(cell.mc.avg_power - cell.analytic) <= 3.0 * se;
    };
    bool ok = true;
    std::size_t checked = 0;
    for (const auto& cell : grid.bwa_full) {
        ok = ok && within(cell);
        ++checked;
    }
    for (const auto& cell : grid.srw) {
        ok = ok && within(cell);
        ++checked;
    }
    for (const auto& cell : grid.bwa_partial) {
        ok = ok && within(cell);
        ++checked;
    }
    ok = ok && checked == 12 + 4 + 12;
    const bool in_time = grid.grid_seconds < 120.0;
    std::ostringstream what;
    what << "28 grid cells within 3 SE of the analytic formulas, grid ran in "
         << static_cast<int>(grid.grid_seconds + 0.5) << " s";
    CHECK(report(4, what.str(), ok && in_time));
}

TEST_CASE("criterion 5: figure 1(d) error-rate behaviour") {
    Stopwatch timer;
    sim::ScenarioConfig base;
    base.total_regions = 1000;
    base.alpha = 0.05;
    base.n_sim = 10000;
    base.seed = 0xC5;

    bool fwer_ok = true;
    bool bh_ok = true;
    std::uint64_t cell_id = 500;
    for (double delta : {1.0, 2.0, 3.0, 4.0, 5.0}) {
        sim::ScenarioConfig bwa_cfg = base;
        bwa_cfg.block_size = 2;
        bwa_cfg.delta = delta;
        bwa_cfg.fully_affected_blocks = 50;  // M1 = 100
        const auto bwa_run = sim::simulate_scenario(bwa_cfg, sim::Strategy::mean_bwa,
                                                    mtp::ProcedureKind::bonferroni, cell_id++);
        fwer_ok = fwer_ok && std::fabs(bwa_run.fwer - 0.045) <= 0.010;

        sim::ScenarioConfig srw_cfg = base;
        srw_cfg.block_size = 1;
        srw_cfg.delta = delta;
        srw_cfg.fully_affected_blocks = 100;
        const auto srw_run = sim::simulate_scenario(srw_cfg, sim::Strategy::srw,
                                                    mtp::ProcedureKind::bh95, cell_id++);
        if (delta >= 2.5) bh_ok = bh_ok && srw_run.fwer >= 0.90;
    }
    const double elapsed = timer.seconds();
    std::ostringstream what;
    what << "mean-BWA(b=2)+Bonferroni FWER within 0.045 +/- 0.010; SRW+BH95 FWER >= 0.90 "
            "for delta >= 2.5; ran in "
         << static_cast<int>(elapsed + 0.5) << " s";
    CHECK(report(5, what.str(), fwer_ok && bh_ok && elapsed < 60.0));
}

TEST_CASE("criterion 6: figure 1(a) power ordering in block size") {
    const auto& grid = shared_grid();
    const auto power = [&](double delta, std::size_t b) -> const GridCell& {
        if (b == 1) {
            for (const auto& cell : grid.srw)
                if (cell.delta == delta) return cell;
        }
        for (const auto& cell : grid.bwa_full)
            if (cell.delta == delta && cell.b == b) return cell;
        throw std::logic_error("missing grid cell");
    };
    bool ok = true;
    for (double delta : {1.0, 2.0, 3.0}) {
        const auto& b5 = power(delta, 5);
        const auto& b4 = power(delta, 4);
        const auto& b2 = power(delta, 2);
        const auto& srw = power(delta, 1);
        const auto leq = [](const GridCell& lo, const GridCell& hi) {
            const double slack = 3.0 * std::sqrt(lo.mc.se_power * lo.mc.se_power +
                                                 hi.mc.se_power * hi.mc.se_power);
            return hi.mc.avg_power >= lo.mc.avg_power - slack;
        };
        ok = ok && leq(b4, b5) && leq(b2, b4) && leq(srw, b2);
    }
    CHECK(report(6, "power ordering BWA(b=5) >= BWA(b=4) >= BWA(b=2) >= SRW at delta 1,2,3 "
                    "(3 SE slack)",
                 ok));
}

TEST_CASE("criterion 7: figure 2 crossover fraction") {
    Stopwatch timer;
    const std::size_t b = 20;
    const double delta = 3.0;
    sim::ScenarioConfig base;
    base.total_regions = 1000;
    base.block_size = b;
    base.delta = delta;
    base.partially_affected_blocks = 10;  // m2 = m/5
    base.alpha = 0.05;
    base.n_sim = 4000;
    base.seed = 0xC7;

    // Two Monte Carlo crossings: against SRW+BH95 (the headline comparison,
    // existence required) and against SRW+Bonferroni (the like-for-like
    // counterpart of the analytic crossover, which is defined relative to
    // the Bonferroni-corrected region-wise power).
    std::optional<double> mc_vs_bh95;
    std::optional<double> mc_vs_bonferroni;
    std::uint64_t cell_id = 900;
    for (std::size_t k = 1; k <= b; ++k) {
        sim::ScenarioConfig cfg = base;
        cfg.affected_per_partial = k;
        const auto bwa_run = sim::simulate_scenario(cfg, sim::Strategy::mean_bwa,
                                                    mtp::ProcedureKind::bonferroni, cell_id++);
        const auto srw_bh95 =
            sim::simulate_scenario(cfg, sim::Strategy::srw, mtp::ProcedureKind::bh95, cell_id++);
        const auto srw_bonf = sim::simulate_scenario(cfg, sim::Strategy::srw,
                                                     mtp::ProcedureKind::bonferroni, cell_id++);
        const double frac = static_cast<double>(k) / static_cast<double>(b);
        if (!mc_vs_bh95 && bwa_run.avg_power >= srw_bh95.avg_power) mc_vs_bh95 = frac;
        if (!mc_vs_bonferroni && bwa_run.avg_power >= srw_bonf.avg_power)
            mc_vs_bonferroni = frac;
    }
    const auto analytic = sim::crossover_fraction(delta, 0.05, 1000 / b, b, 1000, 1.0, 1.0);

    bool ok = mc_vs_bh95.has_value() && mc_vs_bonferroni.has_value() && analytic.has_value();
    if (ok)
        ok = std::fabs(*mc_vs_bonferroni - *analytic) <= 1.0 / static_cast<double>(b) + 1e-12;
    const double elapsed = timer.seconds();
    std::ostringstream what;
    what << "crossover vs SRW+BH95 exists (k/b = " << (mc_vs_bh95 ? *mc_vs_bh95 : -1.0)
         << "); analytic crossover " << (analytic ? *analytic : -1.0)
         << " within one grid step of its MC counterpart "
         << (mc_vs_bonferroni ? *mc_vs_bonferroni : -1.0) << "; ran in "
         << static_cast<int>(elapsed + 0.5) << " s";
    CHECK(report(7, what.str(), ok));
}

namespace {

oracle::StepMethod to_oracle_method(mtp::ProcedureKind method) {
    switch (method) {
        case mtp::ProcedureKind::bonferroni: return oracle::StepMethod::bonferroni;
        case mtp::ProcedureKind::sidak: return oracle::StepMethod::sidak;
        case mtp::ProcedureKind::holm: return oracle::StepMethod::holm;
        case mtp::ProcedureKind::hochberg: return oracle::StepMethod::hochberg;
        case mtp::ProcedureKind::bh95: return oracle::StepMethod::bh95;
        case mtp::ProcedureKind::by01: return oracle::StepMethod::by01;
    }
    throw std::logic_error("unmapped method");
}

}  // namespace

TEST_CASE("criterion 8: adjustment procedures against the step-rule oracle") {
    RngStream rng(0xC8);
    bool adjusted_ok = true;
    bool nesting_ok = true;
    const auto subset = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
        return std::includes(b.begin(), b.end(), a.begin(), a.end());
    };
    for (int round = 0; round < 1000; ++round) {
        const std::size_t m = 1 + rng.next_below(200);
        std::vector<double> p(m);
        for (auto& v : p) {
            const double u = rng.next_uniform();
            if (u < 0.04) v = 0.0;
            else if (u < 0.08) v = 1.0;
            else if (u < 0.20 && m > 2) v = 0.25;  // deliberate ties
            else v = rng.next_uniform();
        }
        for (auto method : mtp::all_procedures) {
            const auto got = mtp::adjust_pvalues(p, method);
            const auto want = oracle::step_adjusted_pvalues(p, to_oracle_method(method));
            for (std::size_t j = 0; j < m; ++j)
                if (std::fabs(got[j] - want[j]) > 1e-12) adjusted_ok = false;
        }
        const double alpha = 0.01 + 0.3 * rng.next_uniform();
        const auto bonferroni = mtp::reject(p, mtp::ProcedureKind::bonferroni, alpha);
        const auto sidak = mtp::reject(p, mtp::ProcedureKind::sidak, alpha);
        const auto holm = mtp::reject(p, mtp::ProcedureKind::holm, alpha);
        const auto hochberg = mtp::reject(p, mtp::ProcedureKind::hochberg, alpha);
        const auto bh95 = mtp::reject(p, mtp::ProcedureKind::bh95, alpha);
        const auto by01 = mtp::reject(p, mtp::ProcedureKind::by01, alpha);
        if (!subset(bonferroni, holm) || !subset(holm, hochberg) || !subset(hochberg, bh95) ||
            !subset(by01, bh95) || !subset(bonferroni, sidak))
            nesting_ok = false;
    }
    CHECK(report(8, "six procedures match the independent step-rule oracle to 1e-12 on 1000 "
                    "vectors; nesting holds with zero violations",
                 adjusted_ok && nesting_ok));
}

TEST_CASE("criterion 9: rank test equals exhaustive enumeration") {
    RngStream rng(0xC9);
    bool ok = true;
    for (int round = 0; round < 200; ++round) {
        const std::size_t nx = 1 + rng.next_below(11);
        const std::size_t ny = 1 + rng.next_below(12 - nx);
        std::vector<double> x(nx), y(ny);
        for (auto& v : x) v = static_cast<double>(rng.next_below(6));
        for (auto& v : y) v = static_cast<double>(rng.next_below(6));
        for (bool two_sided : {false, true}) {
            const double got = stats::wmw_test(
                x, y, two_sided ? stats::Alternative::two_sided : stats::Alternative::greater);
            const double want = oracle::wmw_exact_enumeration(x, y, two_sided);
            if (std::fabs(got - want) > 1e-12) ok = false;
        }
    }
    CHECK(report(9, "exact rank-test p equals full enumeration (ties included) on 200 "
                    "random integer samples",
                 ok));
}

TEST_CASE("criterion 10: bivariate statistic against direct matrix arithmetic") {
    RngStream rng(0xCA);
    bool ok = true;
    for (int round = 0; round < 100; ++round) {
        std::vector<blockwise::BivariatePoint> control(15), treatment(15);
        for (auto& point : control) {
            point.first = rng.next_normal();
            point.second = 0.4 * point.first + rng.next_normal();
        }
        for (auto& point : treatment) {
            point.first = rng.next_normal() + 0.5;
            point.second = 0.4 * point.first + rng.next_normal() + 0.2;
        }
        const auto got = blockwise::bivariate_f_test(control, treatment);

        std::vector<oracle::Vec2> oc, ot;
        for (const auto& point : control) oc.push_back({point.first, point.second});
        for (const auto& point : treatment) ot.push_back({point.first, point.second});
        if (std::fabs(got.statistic - oracle::bivariate_f_direct(oc, ot, false)) > 1e-10)
            ok = false;

        // label swap: bit-identical
        const auto swapped = blockwise::bivariate_f_test(treatment, control);
        if (swapped.statistic != got.statistic || swapped.pvalue != got.pvalue) ok = false;

        // affine invariance
        const auto map = [&](std::vector<blockwise::BivariatePoint> points) {
            for (auto& point : points) {
                const double a = 1.7 * point.first - 0.6 * point.second + 2.0;
                const double b = 0.9 * point.first + 2.2 * point.second - 1.0;
                point.first = a;
                point.second = b;
            }
            return points;
        };
        const auto mapped = blockwise::bivariate_f_test(map(control), map(treatment));
        if (std::fabs(mapped.statistic - got.statistic) >
            1e-9 * std::max(1.0, std::fabs(got.statistic)))
            ok = false;
    }
    CHECK(report(10, "bivariate f equals the direct 2x2 oracle to 1e-10; affine-invariant; "
                     "label-swap exact, over 100 seeded group pairs",
                 ok));
}

TEST_CASE("criterion 11: connectome strategy orderings and null FWER") {
    Stopwatch timer;
    conn::ExperimentConfig config;  // synthetic defaults: N=60, 12 parcels, 15 subjects
    config.delta = 1.5;
    config.affected_block_count = 22;
    config.replications = 40;
    config.seed = 424242;

    const std::vector<conn::Strategy> strategies{conn::Strategy::srw, conn::Strategy::mean_bwa,
                                                 conn::Strategy::truncated_bwa,
                                                 conn::Strategy::bivariate_bwa};
    const std::vector<mtp::ProcedureKind> methods{
        mtp::ProcedureKind::bonferroni, mtp::ProcedureKind::bh95, mtp::ProcedureKind::by01};
    const auto cells = conn::run_group_experiment(config, strategies, methods);
    const auto power = [&](conn::Strategy strategy, mtp::ProcedureKind method) {
        for (const auto& cell : cells)
            if (cell.strategy == strategy && cell.method == method) return cell.avg_power;
        throw std::logic_error("missing cell");
    };

    bool strategy_ok =
        power(conn::Strategy::bivariate_bwa, mtp::ProcedureKind::bonferroni) >=
            power(conn::Strategy::truncated_bwa, mtp::ProcedureKind::bonferroni) &&
        power(conn::Strategy::truncated_bwa, mtp::ProcedureKind::bonferroni) >=
            power(conn::Strategy::mean_bwa, mtp::ProcedureKind::bonferroni) &&
        power(conn::Strategy::mean_bwa, mtp::ProcedureKind::bonferroni) >=
            power(conn::Strategy::srw, mtp::ProcedureKind::bonferroni);

    bool method_ok = true;
    for (const auto strategy : strategies) {
        method_ok = method_ok &&
                    power(strategy, mtp::ProcedureKind::bh95) >=
                        power(strategy, mtp::ProcedureKind::by01) &&
                    power(strategy, mtp::ProcedureKind::by01) >=
                        power(strategy, mtp::ProcedureKind::bonferroni);
    }

    // null calibration: both groups bootstrapped from the same cohort
    conn::ExperimentConfig null_config = config;
    null_config.delta = 0.0;
    null_config.affected_block_count = 0;
    null_config.replications = 200;
    null_config.seed = 31415;
    null_config.bootstrap_baseline = true;
    const std::vector<mtp::ProcedureKind> bonferroni_only{mtp::ProcedureKind::bonferroni};
    const auto null_cells = conn::run_group_experiment(null_config, strategies, bonferroni_only);
    const double bound = 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 200.0);
    bool fwer_ok = true;
    for (const auto& cell : null_cells) fwer_ok = fwer_ok && cell.fwer <= bound;

    const double elapsed = timer.seconds();
    std::ostringstream what;
    what << "bivariate >= truncated >= mean >= SRW under Bonferroni; BH95 >= BY01 >= "
            "Bonferroni within strategies; null FWER <= alpha+3SE over 200 reps; ran in "
         << static_cast<int>(elapsed + 0.5) << " s";
    CHECK(report(11, what.str(), strategy_ok && method_ok && fwer_ok && elapsed < 180.0));
}

TEST_CASE("criterion 12: byte-identical CLI outputs across thread counts") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "bwa_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const std::string binary = BLOCKMT_BIN;
    const auto run = [&](const std::string& out, const std::string& threads) {
        const std::string command = "BLOCKMT_THREADS=" + threads + " " + binary +
                                    " sweep --figure 1c --nsim 400 --seed 12 --out " +
                                    (dir / out).string() + " > /dev/null 2>&1";
        return std::system(command.c_str()) == 0;
    };
    const auto slurp = [](const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    };

    bool ok = run("one", "1") && run("four", "4") && run("two", "2");
    ok = ok && slurp(dir / "one.tsv") == slurp(dir / "four.tsv");
    ok = ok && slurp(dir / "one.json") == slurp(dir / "four.json");
    ok = ok && slurp(dir / "one.tsv") == slurp(dir / "two.tsv");
    ok = ok && !slurp(dir / "one.tsv").empty();

    // connectome pipeline as well
    const auto conn_run = [&](const std::string& out, const std::string& threads) {
        const std::string command =
            "BLOCKMT_THREADS=" + threads + " " + binary +
            " connectome --synthetic --synthesize --delta 1 --strategy all --method bh95 "
            "--seed 5 --out " +
            (dir / out).string() + " > /dev/null 2>&1";
        return std::system(command.c_str()) == 0;
    };
    ok = ok && conn_run("ca", "1") && conn_run("cb", "3");
    ok = ok && slurp(dir / "ca.json") == slurp(dir / "cb.json");
    ok = ok && slurp(dir / "ca.tsv") == slurp(dir / "cb.tsv");

    fs::remove_all(dir);
    CHECK(report(12, "sweep and connectome outputs byte-identical across thread counts "
                     "and repeated runs",
                 ok));
}
