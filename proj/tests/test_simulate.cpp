#include <doctest.h>

#include <cmath>
#include <vector>

#include "bwa/simulate.hpp"
#include "oracles.hpp"

using namespace bwa;

TEST_CASE("analytic srw power: level recovery and oracle evaluation") {
    CHECK(sim::analytic_power_srw(0.0, 0.05, 1000, 1, 1) ==
          doctest::Approx(0.05 / 1000.0).epsilon(1e-6));
    const double crit = stats::normal_quantile(1.0 - 0.05 / 1000.0);
    CHECK(sim::analytic_power_srw(crit, 0.05, 1000, 1, 1) == doctest::Approx(0.5).epsilon(1e-9));

    const double expected =
        1.0 - oracle::normal_cdf_series(oracle::normal_quantile_bisect(1.0 - 0.05 / 1000.0) - 3.0);
    CHECK(sim::analytic_power_srw(3.0, 0.05, 1000, 1, 1) ==
          doctest::Approx(expected).epsilon(1e-8));
    CHECK(expected == doctest::Approx(0.186).epsilon(0.005));

    // strictly increasing in delta
    double previous = 0.0;
    for (double delta = 0.0; delta < 6.0; delta += 0.3) {
        const double power = sim::analytic_power_srw(delta, 0.05, 1000, 1, 1);
        CHECK(power > previous);
        previous = power;
    }
}

TEST_CASE("analytic bwa power: reduction, symmetry point, oracle value") {
    CHECK(sim::analytic_power_bwa_full(1.3, 0.05, 1000, 1, 1, 1) ==
          doctest::Approx(sim::analytic_power_srw(1.3, 0.05, 1000, 1, 1)).epsilon(1e-12));

    const double delta_half = stats::normal_quantile(1.0 - 0.05 / 200.0) / std::sqrt(5.0);
    CHECK(sim::analytic_power_bwa_full(delta_half, 0.05, 200, 5, 1, 1) ==
          doctest::Approx(0.5).epsilon(1e-9));

    const double expected =
        1.0 - oracle::normal_cdf_series(oracle::normal_quantile_bisect(1.0 - 0.05 / 200.0) -
                                        std::sqrt(5.0));
    CHECK(sim::analytic_power_bwa_full(1.0, 0.05, 200, 5, 1, 1) ==
          doctest::Approx(expected).epsilon(1e-8));
    CHECK(expected == doctest::Approx(0.107).epsilon(0.01));

    // block averaging beats region-wise testing whenever it can
    for (double delta : {0.5, 1.0, 2.0})
        for (std::size_t b : {2, 4, 5, 10})
            CHECK(sim::analytic_power_bwa_full(delta, 0.05, 1000 / b, b, 1, 1) >
                  sim::analytic_power_srw(delta, 0.05, 1000, 1, 1));
}

TEST_CASE("mixture sigma: boundary cases and hand value") {
    CHECK(sim::mixture_sigma(2.0, 1.0, 1.4, 5, 5) == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(sim::mixture_sigma(2.0, 0.8, 1.4, 0, 5) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(sim::mixture_sigma(2.0, 1.0, 1.0, 1, 2) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(sim::mixture_sigma(1.0, 1.0, 1.0, 6, 5), std::domain_error);
}

TEST_CASE("analytic partial power: reduction at k=b and oracle evaluation") {
    CHECK(sim::analytic_power_bwa_partial(1.7, 0.05, 50, 20, 20, 1, 1) ==
          doctest::Approx(sim::analytic_power_bwa_full(1.7, 0.05, 50, 20, 1, 1)).epsilon(1e-12));

    // delta=3, b=20, k=2, m=50
    const double q = oracle::normal_quantile_bisect(1.0 - 0.05 / 50.0);
    const double shift = 0.1 * 3.0 * std::sqrt(20.0);
    const double sigma_k = std::sqrt(1.0 + 9.0 * 0.1 * 0.9);
    const double expected = 1.0 - oracle::normal_cdf_series((q - shift) / sigma_k);
    CHECK(sim::analytic_power_bwa_partial(3.0, 0.05, 50, 20, 2, 1, 1) ==
          doctest::Approx(expected).epsilon(1e-8));
    CHECK(expected == doctest::Approx(0.097).epsilon(0.02));

    // monotone in k on the stated grid
    for (double delta : {1.0, 2.0, 3.0}) {
        for (std::size_t b : {5, 20}) {
            double previous = 0.0;
            for (std::size_t k = 1; k <= b; ++k) {
                const double power =
                    sim::analytic_power_bwa_partial(delta, 0.05, 50, b, k, 1, 1);
                CHECK(power > previous);
                previous = power;
            }
        }
    }
}

TEST_CASE("crossover fraction: grid scan against a direct oracle") {
    // delta=0: both powers degenerate to their levels
    CHECK(!sim::crossover_fraction(0.0, 0.05, 50, 20, 1000, 1, 1).has_value());

    const auto oracle_scan = [](double delta, std::size_t m, std::size_t b, std::size_t M) {
        const double srw =
            1.0 - oracle::normal_cdf_series(
                      oracle::normal_quantile_bisect(1.0 - 0.05 / static_cast<double>(M)) - delta);
        for (std::size_t k = 1; k <= b; ++k) {
            const double frac = static_cast<double>(k) / static_cast<double>(b);
            const double sigma_k = std::sqrt(1.0 + delta * delta * frac * (1.0 - frac));
            const double q =
                oracle::normal_quantile_bisect(1.0 - 0.05 / static_cast<double>(m));
            const double power = 1.0 - oracle::normal_cdf_series(
                                           (q - frac * delta * std::sqrt(b)) / sigma_k);
            if (power >= srw) return std::optional<double>(frac);
        }
        return std::optional<double>();
    };

    for (double delta : {1.0, 2.0, 3.0, 6.0}) {
        for (std::size_t b : {5, 10, 20}) {
            const std::size_t m = 1000 / b;
            const auto got = sim::crossover_fraction(delta, 0.05, m, b, 1000, 1, 1);
            const auto want = oracle_scan(delta, m, b, 1000);
            CHECK(got.has_value() == want.has_value());
            if (got && want) CHECK(*got == doctest::Approx(*want).epsilon(1e-9));
        }
    }

    // non-increasing in b at fixed delta (checked on the oracle grid)
    for (double delta : {2.0, 3.0}) {
        double previous = 2.0;
        for (std::size_t b : {5, 10, 20}) {
            const auto frac = sim::crossover_fraction(delta, 0.05, 1000 / b, b, 1000, 1, 1);
            REQUIRE(frac.has_value());
            CHECK(*frac <= previous + 1e-12);
            previous = *frac;
        }
    }
}

TEST_CASE("scenario config validation") {
    sim::ScenarioConfig cfg;
    cfg.total_regions = 100;
    cfg.block_size = 7;  // does not divide 100
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg.block_size = 5;
    cfg.fully_affected_blocks = 21;  // exceeds m = 20
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg.fully_affected_blocks = 2;
    cfg.partially_affected_blocks = 3;
    cfg.affected_per_partial = 9;  // k > b
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg.affected_per_partial = 3;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.affected_regions() == 2 * 5 + 3 * 3);
}

TEST_CASE("simulate: complete null FWER matches the closed form") {
    sim::ScenarioConfig cfg;
    cfg.total_regions = 1000;
    cfg.block_size = 1;
    cfg.n_sim = 4000;
    cfg.seed = 11;
    const auto result =
        sim::simulate_scenario(cfg, sim::Strategy::srw, mtp::ProcedureKind::bonferroni);
    const double expected = 1.0 - std::pow(1.0 - 0.05 / 1000.0, 1000.0);
    CHECK(expected == doctest::Approx(0.0488).epsilon(0.01));
    CHECK(std::fabs(result.fwer - expected) <= 3.0 * result.se_fwer + 1e-12);
    CHECK(std::isnan(result.avg_power));
}

TEST_CASE("simulate: overwhelming effect saturates power") {
    sim::ScenarioConfig cfg;
    cfg.total_regions = 500;
    cfg.block_size = 5;
    cfg.delta = 5.0;
    cfg.fully_affected_blocks = 20;
    cfg.n_sim = 400;
    cfg.seed = 3;
    const auto result =
        sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bonferroni);
    CHECK(result.avg_power >= 0.999);
}

TEST_CASE("simulate: MC power tracks the analytic formulas") {
    sim::ScenarioConfig cfg;
    cfg.total_regions = 1000;
    cfg.n_sim = 2500;
    cfg.seed = 21;
    cfg.delta = 2.0;

    SUBCASE("fully affected blocks") {
        cfg.block_size = 4;
        cfg.fully_affected_blocks = 25;  // M1 = 100
        const auto mc =
            sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bonferroni);
        const double analytic = sim::analytic_power_bwa_full(2.0, 0.05, 250, 4, 1, 1);
        CHECK(std::fabs(mc.avg_power - analytic) <= 3.0 * mc.se_power);
        CHECK(mc.fwer <= 0.05 + 3.0 * (mc.se_fwer + 1e-6));
    }
    SUBCASE("partially affected blocks") {
        cfg.block_size = 20;
        cfg.partially_affected_blocks = 10;
        cfg.affected_per_partial = 10;
        const auto mc =
            sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bonferroni);
        const double analytic = sim::analytic_power_bwa_partial(2.0, 0.05, 50, 20, 10, 1, 1);
        CHECK(std::fabs(mc.avg_power - analytic) <= 3.0 * mc.se_power);
        CHECK(mc.fwer <= 0.05 + 3.0 * (mc.se_fwer + 1e-6));
    }
    SUBCASE("region-wise") {
        cfg.block_size = 1;
        cfg.fully_affected_blocks = 100;
        const auto mc =
            sim::simulate_scenario(cfg, sim::Strategy::srw, mtp::ProcedureKind::bonferroni);
        const double analytic = sim::analytic_power_srw(2.0, 0.05, 1000, 1, 1);
        CHECK(std::fabs(mc.avg_power - analytic) <= 3.0 * mc.se_power);
        CHECK(mc.fwer <= 0.05 + 3.0 * (mc.se_fwer + 1e-6));
    }
}

TEST_CASE("simulate: small blocks with bonferroni still beat region-wise bh95") {
    sim::ScenarioConfig cfg;
    cfg.total_regions = 1000;
    cfg.n_sim = 2000;
    cfg.seed = 77;
    for (double delta : {1.0, 2.5, 4.0}) {
        cfg.delta = delta;
        cfg.block_size = 2;
        cfg.fully_affected_blocks = 50;  // M1 = 100
        const auto bwa =
            sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bonferroni);
        sim::ScenarioConfig srw_cfg = cfg;
        srw_cfg.block_size = 1;
        srw_cfg.fully_affected_blocks = 100;
        const auto srw =
            sim::simulate_scenario(srw_cfg, sim::Strategy::srw, mtp::ProcedureKind::bh95);
        const double slack =
            3.0 * std::sqrt(bwa.se_power * bwa.se_power + srw.se_power * srw.se_power);
        CHECK(bwa.avg_power >= srw.avg_power - slack);
    }
}

TEST_CASE("simulate: deterministic under seed and thread count") {
    sim::ScenarioConfig cfg;
    cfg.total_regions = 200;
    cfg.block_size = 2;
    cfg.delta = 1.0;
    cfg.fully_affected_blocks = 10;
    cfg.n_sim = 500;
    cfg.seed = 88;

    const auto one =
        sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bh95, 5, 1);
    const auto four =
        sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bh95, 5, 4);
    CHECK(one.avg_power == four.avg_power);
    CHECK(one.fwer == four.fwer);
    CHECK(one.fdr == four.fdr);
    CHECK(one.se_power == four.se_power);

    const auto again =
        sim::simulate_scenario(cfg, sim::Strategy::mean_bwa, mtp::ProcedureKind::bh95, 5, 2);
    CHECK(again.avg_power == one.avg_power);
}

TEST_CASE("power sweep: table layout, analytic columns, serialization") {
    sim::SweepRequest request;
    request.base.total_regions = 200;
    request.base.n_sim = 200;
    request.base.seed = 5;
    request.deltas = {1.0, 2.0};
    request.block_sizes = {2, 4};
    request.strategies = {sim::Strategy::mean_bwa, sim::Strategy::srw};
    request.methods = {mtp::ProcedureKind::bonferroni, mtp::ProcedureKind::bh95};
    request.affected_region_target = 20;

    const auto table = sim::power_sweep(request);
    CHECK(table.cells.size() == 2 * 2 * 2 * 2);
    for (const auto& cell : table.cells) {
        if (cell.method == mtp::ProcedureKind::bonferroni) {
            REQUIRE(cell.analytic_power.has_value());
            CHECK(std::fabs(cell.mc.avg_power - *cell.analytic_power) <=
                  3.0 * cell.mc.se_power + 0.02);
        } else {
            CHECK(!cell.analytic_power.has_value());
        }
    }

    const auto tsv = table.to_tsv();
    CHECK(tsv.find("strategy\tmethod\tdelta") == 0);
    CHECK(tsv.find("mean_bwa") != std::string::npos);
    const auto json = table.to_json();
    CHECK(json.find("\"cells\"") != std::string::npos);

    // same request twice: identical tables (bit-stable serialization)
    const auto repeat = sim::power_sweep(request);
    CHECK(repeat.to_tsv() == tsv);
    CHECK(repeat.to_json() == json);
}

TEST_CASE("power sweep: monotone power in delta for every method") {
    sim::SweepRequest request;
    request.base.total_regions = 500;
    request.base.n_sim = 600;
    request.base.seed = 10;
    request.deltas = {0.5, 1.5, 3.0, 4.5};
    request.block_sizes = {5};
    request.strategies = {sim::Strategy::mean_bwa};
    request.methods = {mtp::ProcedureKind::bonferroni, mtp::ProcedureKind::bh95,
                       mtp::ProcedureKind::by01};
    request.affected_region_target = 50;
    const auto table = sim::power_sweep(request);
    for (auto method : request.methods) {
        double previous = -1.0;
        for (const auto& cell : table.cells) {
            if (cell.method != method) continue;
            CHECK(cell.mc.avg_power >= previous - 3.0 * (cell.mc.se_power + 1e-9));
            previous = cell.mc.avg_power;
        }
    }
}

TEST_CASE("example fixture: printed entries and accounting") {
    const auto& example = sim::example2_fixture();
    CHECK(example.value_at(0, 0) == 3.26);
    CHECK(example.value_at(5, 4) == -5.45);
    CHECK(example.region.values.size() == 64);
    const auto sizes = example.partition.block_sizes();
    std::size_t total = 0;
    for (auto s : sizes) total += s;
    CHECK(total == 64);
    CHECK(example.affected_regions.size() == 12);
    CHECK(example.block_names.size() == 6);
}
