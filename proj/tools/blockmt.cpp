// blockmt: block-wise multiple testing toolkit.
//
// Subcommands: adjust (p-value correction), sweep (power/FWER Monte Carlo
// sweeps with figure presets), example2 (the printed 8x8 walkthrough),
// connectome (group comparison pipeline on connectivity matrices).
//
// Exit codes: 0 success, 2 usage or parse error, 3 data error.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bwa/blockwise.hpp"
#include "bwa/connectome.hpp"
#include "bwa/mtp.hpp"
#include "bwa/simulate.hpp"
#include "bwa/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// shortest decimal that round-trips the double exactly
std::string format_full(double v) {
    char buf[40];
    const auto result = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, result.ptr);
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bwa::conn::DataError("cannot digest input file: " + path, path);
    std::uint64_t hash = 1469598103934665603ULL;
    char chunk[4096];
    while (in.read(chunk, sizeof chunk) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(chunk[i]);
            hash *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return hash;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Deterministic part of the manifest; embedded in result documents. The
// sidecar adds a timestamp on top.
json manifest_core(const std::string& command, const json& parameters,
                   const std::vector<std::string>& input_files) {
    json digests = json::object();
    for (const auto& file : input_files) digests[file] = hex64(fnv1a64_file(file));
    return json{{"command", command},
                {"version", bwa::kVersion},
                {"parameters", parameters},
                {"input_digests", digests}};
}

void write_manifest_sidecar(const json& core, const std::string& out_prefix) {
    json sidecar = core;
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    sidecar["timestamp"] = stamp;
    std::ofstream out(out_prefix + ".manifest.json");
    out << sidecar.dump(2) << "\n";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw bwa::conn::DataError("cannot write output file: " + path, path);
    out << content;
}

// ---------------------------------------------------------------------------
// JSON config: mirrors long flag names; command-line flags win.
// ---------------------------------------------------------------------------

void apply_json_config(CLI::App* cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [key, value] : doc.items()) {
        CLI::Option* option = cmd->get_option_no_throw("--" + key);
        if (option == nullptr) throw UsageError("config key '" + key + "' is not a flag of this command");
        if (option->count() > 0) continue;  // explicit flag wins
        std::vector<std::string> tokens;
        if (value.is_array()) {
            for (const auto& item : value)
                tokens.push_back(item.is_string() ? item.get<std::string>() : item.dump());
        } else if (value.is_string()) {
            tokens.push_back(value.get<std::string>());
        } else if (value.is_boolean()) {
            tokens.push_back(value.get<bool>() ? "true" : "false");
        } else {
            tokens.push_back(value.dump());
        }
        for (const auto& token : tokens) option->add_result(token);
        option->run_callback();  // push the results into the bound variable
    }
}

// ---------------------------------------------------------------------------
// Shared parsing helpers
// ---------------------------------------------------------------------------

bwa::mtp::ProcedureKind parse_method(const std::string& name) {
    const auto method = bwa::mtp::procedure_from_name(name);
    if (!method) throw UsageError("unknown method '" + name + "'");
    return *method;
}

std::vector<bwa::mtp::ProcedureKind> parse_methods(const std::vector<std::string>& names) {
    std::vector<bwa::mtp::ProcedureKind> methods;
    for (const auto& name : names) {
        if (name == "all") {
            methods.assign(std::begin(bwa::mtp::all_procedures),
                           std::end(bwa::mtp::all_procedures));
            return methods;
        }
        methods.push_back(parse_method(name));
    }
    return methods;
}

// ---------------------------------------------------------------------------
// adjust
// ---------------------------------------------------------------------------

struct AdjustArgs {
    std::string input = "-";
    std::string method = "bonferroni";
    double alpha = 0.05;
    std::string out;
};

int run_adjust(const AdjustArgs& args) {
    std::istream* in = &std::cin;
    std::ifstream file;
    if (args.input != "-") {
        file.open(args.input);
        if (!file) throw bwa::conn::DataError("cannot open input: " + args.input, args.input);
        in = &file;
    }

    std::vector<double> pvalues;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(*in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) continue;  // blank line
        std::string trailing;
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw UsageError("line " + std::to_string(line_no) + ": unparseable p-value '" +
                             token + "'");
        }
        if (ls >> trailing)
            throw UsageError("line " + std::to_string(line_no) + ": expected a single column");
        if (!(value >= 0.0 && value <= 1.0))
            throw UsageError("line " + std::to_string(line_no) + ": p-value outside [0,1]");
        pvalues.push_back(value);
    }
    if (pvalues.empty()) throw UsageError("no p-values in input");

    const auto method = parse_method(args.method);
    if (!(args.alpha > 0.0 && args.alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
    const auto adjusted = bwa::mtp::adjust_pvalues(pvalues, method);

    std::ostringstream table;
    table << "index\tp\tp_adjusted\treject\n";
    for (std::size_t j = 0; j < pvalues.size(); ++j) {
        table << j << '\t' << format_full(pvalues[j]) << '\t' << format_full(adjusted[j]) << '\t'
              << (adjusted[j] <= args.alpha ? 1 : 0) << '\n';
    }
    if (args.out.empty()) std::cout << table.str();
    else write_file(args.out, table.str());
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string figure;
    std::vector<double> deltas;
    std::vector<std::size_t> block_sizes;
    std::vector<std::size_t> k_values;
    std::size_t total_regions = 1000;
    std::size_t affected_regions = 100;
    std::size_t partial_blocks = 0;
    std::vector<std::string> strategies;
    std::vector<std::string> methods;
    double alpha = 0.05;
    std::size_t nsim = 10000;
    std::uint64_t seed = 0;
    double delta = 3.0;       // figure 2 preset
    std::size_t b = 20;       // figure 2 preset
    std::string out = "sweep";
};

bwa::sim::SweepTable run_sweep_requests(std::vector<bwa::sim::SweepRequest> requests) {
    bwa::sim::SweepTable table;
    std::uint64_t base = 0;
    for (auto& request : requests) {
        request.cell_id_base = base;
        base += 10000;  // disjoint substream ranges per request
        auto part = bwa::sim::power_sweep(request);
        if (table.cells.empty()) table.base = part.base;
        table.cells.insert(table.cells.end(), part.cells.begin(), part.cells.end());
    }
    return table;
}

int run_sweep(const SweepArgs& args) {
    using bwa::mtp::ProcedureKind;
    using bwa::sim::Strategy;

    bwa::sim::ScenarioConfig base;
    base.total_regions = args.total_regions;
    base.alpha = args.alpha;
    base.n_sim = args.nsim;
    base.seed = args.seed;

    std::vector<bwa::sim::SweepRequest> requests;
    const std::vector<double> figure1_deltas{0.0, 0.5, 1.0, 1.5, 2.0, 2.5,
                                             3.0, 3.5, 4.0, 4.5, 5.0};

    const auto bwa_request = [&](std::vector<std::size_t> sizes, ProcedureKind method,
                                 std::vector<double> deltas) {
        bwa::sim::SweepRequest request;
        request.base = base;
        request.deltas = std::move(deltas);
        request.block_sizes = std::move(sizes);
        request.strategies = {Strategy::mean_bwa};
        request.methods = {method};
        request.affected_region_target = args.affected_regions;
        return request;
    };
    const auto srw_request = [&](ProcedureKind method, std::vector<double> deltas) {
        bwa::sim::SweepRequest request;
        request.base = base;
        request.deltas = std::move(deltas);
        request.block_sizes = {1};
        request.strategies = {Strategy::srw};
        request.methods = {method};
        request.affected_region_target = args.affected_regions;
        return request;
    };

    if (args.figure == "1a") {
        requests.push_back(bwa_request({5, 4, 2}, ProcedureKind::bonferroni, figure1_deltas));
        requests.push_back(srw_request(ProcedureKind::bonferroni, figure1_deltas));
    } else if (args.figure == "1b") {
        requests.push_back(bwa_request({5, 4, 2}, ProcedureKind::bh95, figure1_deltas));
        requests.push_back(srw_request(ProcedureKind::bh95, figure1_deltas));
    } else if (args.figure == "1c" || args.figure == "1d") {
        requests.push_back(bwa_request({2}, ProcedureKind::bonferroni, figure1_deltas));
        requests.push_back(srw_request(ProcedureKind::bh95, figure1_deltas));
    } else if (args.figure == "2") {
        if (args.b < 1 || args.total_regions % args.b != 0)
            throw UsageError("figure 2 preset: --b must divide --regions");
        const std::size_t m = args.total_regions / args.b;
        bwa::sim::SweepRequest partial;
        partial.base = base;
        partial.base.delta = args.delta;
        partial.base.partially_affected_blocks = m / 5;
        partial.block_sizes = {args.b};
        for (std::size_t k = 1; k <= args.b; ++k) partial.k_values.push_back(k);
        partial.strategies = {Strategy::mean_bwa};
        partial.methods = {ProcedureKind::bonferroni};
        requests.push_back(partial);
        auto srw_bh = partial;
        srw_bh.strategies = {Strategy::srw};
        srw_bh.methods = {ProcedureKind::bh95};
        requests.push_back(srw_bh);
        auto srw_bonf = partial;
        srw_bonf.strategies = {Strategy::srw};
        srw_bonf.methods = {ProcedureKind::bonferroni};
        requests.push_back(srw_bonf);
    } else if (!args.figure.empty()) {
        throw UsageError("unknown figure preset '" + args.figure + "' (use 1a,1b,1c,1d,2)");
    } else {
        // explicit grid
        if (args.block_sizes.empty()) throw UsageError("need --b-sizes or --figure");
        if (args.strategies.empty()) throw UsageError("need --strategies or --figure");
        if (args.methods.empty()) throw UsageError("need --methods or --figure");
        bwa::sim::SweepRequest request;
        request.base = base;
        request.base.partially_affected_blocks = args.partial_blocks;
        request.deltas = args.deltas;
        request.block_sizes = args.block_sizes;
        request.k_values = args.k_values;
        for (const auto& name : args.strategies) {
            const auto strategy = bwa::sim::strategy_from_name(name);
            if (!strategy) throw UsageError("unknown strategy '" + name + "'");
            request.strategies.push_back(*strategy);
        }
        request.methods = parse_methods(args.methods);
        request.affected_region_target = args.k_values.empty() ? args.affected_regions : 0;
        requests.push_back(request);
    }

    const auto table = run_sweep_requests(std::move(requests));
    write_file(args.out + ".tsv", table.to_tsv());
    write_file(args.out + ".json", table.to_json());

    json parameters{{"figure", args.figure},
                    {"regions", args.total_regions},
                    {"affected", args.affected_regions},
                    {"partial-blocks", args.partial_blocks},
                    {"deltas", args.deltas},
                    {"b-sizes", args.block_sizes},
                    {"k", args.k_values},
                    {"strategies", args.strategies},
                    {"methods", args.methods},
                    {"alpha", args.alpha},
                    {"nsim", args.nsim},
                    {"seed", args.seed},
                    {"delta", args.delta},
                    {"b", args.b}};
    const auto core = manifest_core("sweep", parameters, {});
    write_manifest_sidecar(core, args.out);
    std::cout << "wrote " << args.out << ".tsv, " << args.out << ".json ("
              << table.cells.size() << " cells)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// example2
// ---------------------------------------------------------------------------

void print_table_and_rates(std::ostream& os, const bwa::mtp::DecisionTable& table) {
    const auto rates = bwa::mtp::empirical_rates(table);
    os << "  outcome: U=" << table.true_null_accepted << " V=" << table.true_null_rejected
       << " T=" << table.false_null_accepted << " S=" << table.false_null_rejected
       << " (m0=" << table.m0() << " m1=" << table.m1() << " R=" << table.rejections() << ")\n";
    os << "  type I rate:  " << table.true_null_rejected << "/" << table.m0();
    if (rates.type_i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " = %.4f", *rates.type_i);
        os << buf;
    }
    os << "\n  type II rate: " << table.false_null_accepted << "/" << table.m1();
    if (rates.type_ii) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " = %.4f", *rates.type_ii);
        os << buf;
    }
    os << "\n";
}

int run_example2(bool as_json) {
    const auto& example = bwa::sim::example2_fixture();
    const bwa::blockwise::NullModel null_model{0.0, 1.0};
    const double alpha = 0.05;

    // region-wise analysis via singleton blocks
    bwa::blockwise::BlockPartition singletons;
    for (std::size_t region = 0; region < 64; ++region) singletons.assign(region, region);
    const bwa::blockwise::GroundTruth region_truth = example.affected_regions;
    const auto srw = bwa::blockwise::run_block_analysis(
        example.region, singletons, bwa::blockwise::SummaryKind::mean,
        bwa::mtp::ProcedureKind::bonferroni, alpha, null_model, region_truth);

    const bwa::blockwise::GroundTruth block_truth = example.affected_blocks;
    const auto analyze = [&](bwa::blockwise::SummaryKind kind) {
        return bwa::blockwise::run_block_analysis(example.region, example.partition, kind,
                                                  bwa::mtp::ProcedureKind::bonferroni, alpha,
                                                  null_model, block_truth);
    };
    const auto mean_run = analyze(bwa::blockwise::SummaryKind::mean);
    const auto median_run = analyze(bwa::blockwise::SummaryKind::median);
    const auto huber_run = analyze(bwa::blockwise::SummaryKind::huber);

    if (as_json) {
        json doc;
        doc["alpha"] = alpha;
        doc["srw"] = {{"critical_value", bwa::blockwise::srw_critical_value(alpha, 64, 0, 1)},
                      {"rejected_cells", srw.rejected_blocks},
                      {"V", srw.table->true_null_rejected},
                      {"S", srw.table->false_null_rejected},
                      {"T", srw.table->false_null_accepted},
                      {"type_i", *srw.rates->type_i},
                      {"type_ii", *srw.rates->type_ii}};
        const auto block_doc = [&](const bwa::blockwise::BlockAnalysis& run) {
            std::vector<std::string> names;
            for (auto b : run.rejected_blocks) names.push_back(example.block_names[b]);
            json entry{{"rejected_blocks", names},
                       {"type_ii", *run.rates->type_ii},
                       {"type_i", *run.rates->type_i}};
            json values = json::array();
            for (const auto& summary : run.summaries) values.push_back(summary.value);
            entry["summaries"] = values;
            return entry;
        };
        doc["mean"] = block_doc(mean_run);
        doc["median"] = block_doc(median_run);
        doc["huber"] = block_doc(huber_run);
        std::cout << doc.dump(2) << "\n";
        return 0;
    }

    std::ostringstream os;
    os << "8x8 example, alpha = 0.05, one-sided tests against N(0,1)\n\n";
    os << "small-region-wise (SRW), bonferroni over 64 tests\n";
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  critical value: %.4f\n",
                      bwa::blockwise::srw_critical_value(alpha, 64, 0, 1));
        os << buf;
    }
    os << "  rejected cells (" << srw.rejected_blocks.size() << "):";
    for (auto j : srw.rejected_blocks) os << " (" << j / 8 + 1 << "," << j % 8 + 1 << ")";
    os << "\n";
    print_table_and_rates(os, *srw.table);

    const auto describe = [&](const char* label, const bwa::blockwise::BlockAnalysis& run) {
        os << "\nblock-wise analysis, " << label << " summary, bonferroni over 6 tests\n";
        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "  critical values: %.3f (blocks of 12), %.3f (blocks of 8)\n",
                      bwa::blockwise::bwa_critical_value(alpha, 6, 12, 0, 1),
                      bwa::blockwise::bwa_critical_value(alpha, 6, 8, 0, 1));
        os << buf;
        os << "  summaries:";
        for (const auto& summary : run.summaries) {
            std::snprintf(buf, sizeof buf, " %s=%.3f", example.block_names[summary.block].c_str(),
                          summary.value);
            os << buf;
        }
        os << "\n  rejected blocks:";
        if (run.rejected_blocks.empty()) os << " none";
        for (auto b : run.rejected_blocks) os << " " << example.block_names[b];
        os << "\n";
        print_table_and_rates(os, *run.table);
    };
    describe("mean", mean_run);
    describe("median", median_run);
    describe("huber", huber_run);
    std::cout << os.str();
    return 0;
}

// ---------------------------------------------------------------------------
// connectome
// ---------------------------------------------------------------------------

struct ConnectomeArgs {
    std::string controls_dir;
    std::string treatments_dir;
    bool synthetic_controls = false;
    bool synthesize = false;
    std::string hierarchy_file;
    std::size_t parcels = 12;
    std::size_t regions = 60;
    std::size_t subjects = 15;
    double delta = 1.5;
    std::size_t affected = 22;
    double fraction_min = 0.4;
    double fraction_max = 1.0;
    std::string affected_file;
    std::vector<std::string> strategies{"all"};
    std::string method = "bonferroni";
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::string out = "connectome";
    std::size_t replications = 0;
    bool null_baseline = false;
    bool include_diagonal = false;
    bool legacy_f_constant = false;
    std::string save_controls_dir;
    std::string save_hierarchy_file;
    double conn_near = 0.95, conn_far = 0.75, value_scale = 10.0, value_floor = 1.0,
           value_decay = 3.0, value_spread = 0.25, noise_ratio = 0.5;
};

std::vector<bwa::conn::Strategy> resolve_strategies(const std::vector<std::string>& names) {
    std::vector<bwa::conn::Strategy> strategies;
    for (const auto& name : names) {
        if (name == "all") {
            strategies.assign(std::begin(bwa::conn::all_strategies),
                              std::end(bwa::conn::all_strategies));
            return strategies;
        }
        const auto strategy = bwa::conn::strategy_from_name(name);
        if (!strategy) throw UsageError("unknown strategy '" + name + "'");
        strategies.push_back(*strategy);
    }
    return strategies;
}

int run_connectome(const ConnectomeArgs& args) {
    using namespace bwa::conn;

    SyntheticConfig synthetic;
    synthetic.regions = args.regions;
    synthetic.parcels = args.parcels;
    synthetic.subjects = args.subjects;
    synthetic.conn_near = args.conn_near;
    synthetic.conn_far = args.conn_far;
    synthetic.value_scale = args.value_scale;
    synthetic.value_floor = args.value_floor;
    synthetic.value_decay = args.value_decay;
    synthetic.value_spread = args.value_spread;
    synthetic.noise_ratio = args.noise_ratio;

    const auto methods = parse_methods({args.method});
    const auto strategies = resolve_strategies(args.strategies);
    std::vector<std::string> input_files;

    // experiment mode: replicated synthesize/compare on synthetic data
    if (args.replications > 0) {
        ExperimentConfig experiment;
        experiment.synthetic = synthetic;
        experiment.delta = args.delta;
        experiment.affected_block_count = args.affected;
        experiment.fraction_min = args.fraction_min;
        experiment.fraction_max = args.fraction_max;
        experiment.replications = args.replications;
        experiment.alpha = args.alpha;
        experiment.seed = args.seed;
        experiment.bootstrap_baseline = args.null_baseline;
        const auto cells = run_group_experiment(experiment, strategies, methods);

        std::ostringstream tsv;
        tsv << "strategy\tmethod\tavg_power\tse_power\tfwer\tse_fwer\treplications\n";
        json rows = json::array();
        for (const auto& cell : cells) {
            tsv << strategy_name(cell.strategy) << '\t' << bwa::mtp::procedure_name(cell.method)
                << '\t' << format_full(cell.avg_power) << '\t' << format_full(cell.se_power)
                << '\t' << format_full(cell.fwer) << '\t' << format_full(cell.se_fwer) << '\t'
                << cell.replications << '\n';
            rows.push_back({{"strategy", strategy_name(cell.strategy)},
                            {"method", bwa::mtp::procedure_name(cell.method)},
                            {"avg_power", std::isnan(cell.avg_power)
                                              ? json(nullptr)
                                              : json(cell.avg_power)},
                            {"se_power", std::isnan(cell.se_power) ? json(nullptr)
                                                                   : json(cell.se_power)},
                            {"fwer", cell.fwer},
                            {"se_fwer", cell.se_fwer},
                            {"replications", cell.replications}});
        }
        json parameters{{"mode", "experiment"},
                        {"delta", args.delta},
                        {"affected", args.affected},
                        {"fraction-min", args.fraction_min},
                        {"fraction-max", args.fraction_max},
                        {"replications", args.replications},
                        {"null-baseline", args.null_baseline},
                        {"strategy", args.strategies},
                        {"method", args.method},
                        {"alpha", args.alpha},
                        {"seed", args.seed},
                        {"regions", args.regions},
                        {"parcels", args.parcels},
                        {"subjects", args.subjects},
                        {"conn-near", args.conn_near},
                        {"conn-far", args.conn_far},
                        {"value-scale", args.value_scale},
                        {"value-floor", args.value_floor},
                        {"value-decay", args.value_decay},
                        {"value-spread", args.value_spread},
                        {"noise-ratio", args.noise_ratio}};
        const auto core = manifest_core("connectome", parameters, input_files);
        json doc{{"experiment", rows}, {"manifest", core}};
        write_file(args.out + ".tsv", tsv.str());
        write_file(args.out + ".json", doc.dump(2) + "\n");
        write_manifest_sidecar(core, args.out);
        std::cout << "wrote " << args.out << ".tsv, " << args.out << ".json ("
                  << cells.size() << " cells)\n";
        return 0;
    }

    // single-comparison mode
    std::vector<ConnectivityMatrix> controls;
    if (args.synthetic_controls) {
        controls = synthetic_controls(synthetic, bwa::RngStream::derive(args.seed, {1}).next_u64());
    } else if (!args.controls_dir.empty()) {
        controls = load_group(args.controls_dir);
        for (const auto& entry : fs::directory_iterator(args.controls_dir))
            if (entry.is_regular_file()) input_files.push_back(entry.path().string());
        std::sort(input_files.begin(), input_files.end());
    } else {
        throw UsageError("need --controls DIR or --synthetic");
    }
    const std::size_t n = controls.front().n;

    ParcellationHierarchy hierarchy;
    if (!args.hierarchy_file.empty()) {
        hierarchy = load_hierarchy(args.hierarchy_file);
        input_files.push_back(args.hierarchy_file);
    } else {
        if (args.parcels == 0 || args.parcels > n)
            throw UsageError("--parcels must lie in [1, matrix size] (or give --hierarchy)");
        hierarchy = uniform_hierarchy(n, args.parcels);
    }
    if (hierarchy.fine_count != n)
        throw DataError("hierarchy covers " + std::to_string(hierarchy.fine_count) +
                        " ROIs but matrices have " + std::to_string(n));
    const std::size_t coarse = hierarchy.level_sizes.empty() ? n : hierarchy.level_sizes.back();
    const auto blocks = blocks_from_hierarchy(hierarchy, n, coarse, args.include_diagonal);

    if (!args.save_controls_dir.empty()) {
        fs::create_directories(args.save_controls_dir);
        for (std::size_t s = 0; s < controls.size(); ++s) {
            char name[32];
            std::snprintf(name, sizeof name, "control_%03zu.txt", s);
            save_matrix(controls[s], (fs::path(args.save_controls_dir) / name).string());
        }
    }
    if (!args.save_hierarchy_file.empty()) save_hierarchy(hierarchy, args.save_hierarchy_file);

    std::vector<ConnectivityMatrix> treatments;
    std::optional<GroundTruth> truth;
    if (args.synthesize) {
        std::vector<std::size_t> affected_ids;
        std::vector<double> fractions;
        if (!args.affected_file.empty()) {
            auto loaded = load_affected_file(args.affected_file, blocks);
            affected_ids = std::move(loaded.first);
            fractions = std::move(loaded.second);
            input_files.push_back(args.affected_file);
        } else if (args.affected > 0) {
            if (args.affected > blocks.block_count())
                throw UsageError("--affected exceeds the number of blocks");
            bwa::RngStream select = bwa::RngStream::derive(args.seed, {3});
            std::vector<std::size_t> pool(blocks.block_count());
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            for (std::size_t i = 0; i < args.affected; ++i) {
                const std::size_t j = i + select.next_below(pool.size() - i);
                std::swap(pool[i], pool[j]);
                affected_ids.push_back(pool[i]);
            }
            std::sort(affected_ids.begin(), affected_ids.end());
            for (std::size_t i = 0; i < affected_ids.size(); ++i)
                fractions.push_back(args.fraction_min +
                                    (args.fraction_max - args.fraction_min) *
                                        select.next_uniform());
        }
        auto synthesized = synthesize_treatment_group(
            controls, blocks, affected_ids, fractions, args.delta, args.subjects,
            bwa::RngStream::derive(args.seed, {4}).next_u64());
        treatments = std::move(synthesized.subjects);
        truth = std::move(synthesized.truth);
    } else if (!args.treatments_dir.empty()) {
        treatments = load_group(args.treatments_dir);
        for (const auto& entry : fs::directory_iterator(args.treatments_dir))
            if (entry.is_regular_file()) input_files.push_back(entry.path().string());
        std::sort(input_files.begin(), input_files.end());
    } else {
        throw UsageError("need --treatments DIR or --synthesize");
    }

    CompareOptions options;
    options.alpha = args.alpha;
    options.f_constant = args.legacy_f_constant ? bwa::blockwise::FConstant::legacy
                                                : bwa::blockwise::FConstant::standard;

    json comparisons = json::array();
    std::ostringstream tsv;
    tsv << "strategy\tmethod\tunit\tparcel_p\tparcel_q\tblock_size\tp\tp_adjusted\trejected\t"
           "fallback\ttruly_affected\n";
    for (const auto strategy : strategies) {
        for (const auto method : methods) {
            const auto comparison =
                compare_groups(controls, treatments, blocks, strategy, method, options,
                               truth ? &*truth : nullptr);
            comparisons.push_back(json::parse(comparison_to_json(comparison, blocks)));

            std::vector<char> rejected(comparison.raw_p.size(), 0);
            for (auto unit : comparison.rejected) rejected[unit] = 1;
            std::vector<char> affected_mask(comparison.raw_p.size(), 0);
            if (truth) {
                if (strategy == Strategy::srw) {
                    std::vector<std::size_t> covered;
                    for (std::size_t cell = 0; cell < blocks.block_of_cell.size(); ++cell)
                        if (blocks.block_of_cell[cell] >= 0) covered.push_back(cell);
                    std::vector<char> is_affected_cell(blocks.block_of_cell.size(), 0);
                    for (auto cell : truth->affected_cells) is_affected_cell[cell] = 1;
                    for (std::size_t unit = 0; unit < covered.size(); ++unit)
                        affected_mask[unit] = is_affected_cell[covered[unit]];
                } else {
                    for (auto block : truth->affected_blocks) affected_mask[block] = 1;
                }
            }
            for (std::size_t unit = 0; unit < comparison.raw_p.size(); ++unit) {
                int parcel_p = -1, parcel_q = -1;
                std::size_t block_size = 1;
                if (strategy != Strategy::srw) {
                    parcel_p = blocks.pairs[unit].first;
                    parcel_q = blocks.pairs[unit].second;
                    block_size = blocks.cells[unit].size();
                }
                tsv << strategy_name(strategy) << '\t' << bwa::mtp::procedure_name(method)
                    << '\t' << unit << '\t' << parcel_p << '\t' << parcel_q << '\t' << block_size
                    << '\t' << format_full(comparison.raw_p[unit]) << '\t'
                    << format_full(comparison.adjusted_p[unit]) << '\t'
                    << static_cast<int>(rejected[unit]) << '\t'
                    << static_cast<int>(comparison.fallback[unit]) << '\t'
                    << static_cast<int>(affected_mask[unit]) << '\n';
            }
        }
    }

    json parameters{{"mode", "compare"},
                    {"controls", args.controls_dir},
                    {"treatments", args.treatments_dir},
                    {"synthetic", args.synthetic_controls},
                    {"synthesize", args.synthesize},
                    {"hierarchy", args.hierarchy_file},
                    {"parcels", args.parcels},
                    {"subjects", args.subjects},
                    {"delta", args.delta},
                    {"affected", args.affected},
                    {"fraction-min", args.fraction_min},
                    {"fraction-max", args.fraction_max},
                    {"affected-file", args.affected_file},
                    {"strategy", args.strategies},
                    {"method", args.method},
                    {"alpha", args.alpha},
                    {"seed", args.seed},
                    {"include-diagonal", args.include_diagonal},
                    {"legacy-f-constant", args.legacy_f_constant},
                    {"regions", args.regions},
                    {"conn-near", args.conn_near},
                    {"conn-far", args.conn_far},
                    {"value-scale", args.value_scale},
                    {"value-floor", args.value_floor},
                    {"value-decay", args.value_decay},
                    {"value-spread", args.value_spread},
                    {"noise-ratio", args.noise_ratio}};
    const auto core = manifest_core("connectome", parameters, input_files);

    json doc;
    doc["manifest"] = core;
    doc["comparisons"] = std::move(comparisons);
    doc["block_count"] = blocks.block_count();
    {
        json histogram = json::object();
        for (const auto& [size, count] : block_size_histogram(blocks))
            histogram[std::to_string(size)] = count;
        doc["block_size_histogram"] = std::move(histogram);
    }
    if (truth) {
        json ground = json::object();
        json affected = json::array();
        for (std::size_t i = 0; i < truth->affected_blocks.size(); ++i) {
            const auto& pair = blocks.pairs[truth->affected_blocks[i]];
            affected.push_back({pair.first, pair.second, truth->fractions[i]});
        }
        ground["affected_blocks"] = std::move(affected);
        ground["affected_cells"] = truth->affected_cells.size();
        ground["fraction_histogram"] = fraction_histogram(*truth);
        doc["ground_truth"] = std::move(ground);
    }

    write_file(args.out + ".json", doc.dump(2) + "\n");
    write_file(args.out + ".tsv", tsv.str());
    write_manifest_sidecar(core, args.out);
    std::cout << "wrote " << args.out << ".json, " << args.out << ".tsv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"block-wise multiple testing toolkit"};
    app.set_version_flag("--version", bwa::kVersion);
    app.require_subcommand(1);

    AdjustArgs adjust_args;
    auto* adjust = app.add_subcommand("adjust", "adjust a stream of p-values");
    adjust->add_option("--input", adjust_args.input, "input file of p-values, one per line ('-' for stdin)");
    adjust->add_option("--method", adjust_args.method,
                       "bonferroni|sidak|holm|hochberg|bh95|by01");
    adjust->add_option("--alpha", adjust_args.alpha, "rejection level");
    adjust->add_option("--out", adjust_args.out, "output file (default stdout)");

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo power/FWER sweeps");
    sweep->add_option("--figure", sweep_args.figure, "preset: 1a|1b|1c|1d|2");
    sweep->add_option("--deltas", sweep_args.deltas, "raw effect grid")->delimiter(',');
    sweep->add_option("--b-sizes", sweep_args.block_sizes, "block size grid")->delimiter(',');
    sweep->add_option("--k", sweep_args.k_values, "affected-per-block grid (partial layout)")
        ->delimiter(',');
    sweep->add_option("--regions", sweep_args.total_regions, "total small regions M");
    sweep->add_option("--affected", sweep_args.affected_regions,
                      "affected regions M1 (fully affected layout)");
    sweep->add_option("--partial-blocks", sweep_args.partial_blocks,
                      "partially affected block count m2 (with --k)");
    sweep->add_option("--strategies", sweep_args.strategies, "srw,mean_bwa")->delimiter(',');
    sweep->add_option("--methods", sweep_args.methods, "procedure list or 'all'")->delimiter(',');
    sweep->add_option("--alpha", sweep_args.alpha, "global level");
    sweep->add_option("--nsim", sweep_args.nsim, "replications per cell");
    sweep->add_option("--seed", sweep_args.seed, "master seed");
    sweep->add_option("--delta", sweep_args.delta, "raw effect (figure 2 preset)");
    sweep->add_option("--b", sweep_args.b, "block size (figure 2 preset)");
    sweep->add_option("--out", sweep_args.out, "output prefix");

    bool example_json = false;
    auto* example2 = app.add_subcommand("example2", "reproduce the printed 8x8 walkthrough");
    example2->add_flag("--json", example_json, "emit JSON instead of the report");

    ConnectomeArgs conn_args;
    auto* connectome = app.add_subcommand("connectome", "connectivity-matrix group comparison");
    connectome->add_option("--controls", conn_args.controls_dir, "directory of control matrices");
    connectome->add_option("--treatments", conn_args.treatments_dir,
                           "directory of treatment matrices");
    connectome->add_flag("--synthetic", conn_args.synthetic_controls,
                         "generate a synthetic control cohort");
    connectome->add_flag("--synthesize", conn_args.synthesize,
                         "synthesize the treatment group from the controls");
    connectome->add_option("--hierarchy", conn_args.hierarchy_file, "parcellation hierarchy file");
    connectome->add_option("--parcels", conn_args.parcels, "uniform parcel count (no hierarchy file)");
    connectome->add_option("--regions", conn_args.regions, "synthetic matrix size N");
    connectome->add_option("--subjects", conn_args.subjects, "subjects per group");
    connectome->add_option("--delta", conn_args.delta, "raw effect added to affected cells");
    connectome->add_option("--affected", conn_args.affected, "number of affected blocks");
    connectome->add_option("--fraction-min", conn_args.fraction_min, "min affected fraction");
    connectome->add_option("--fraction-max", conn_args.fraction_max, "max affected fraction");
    connectome->add_option("--affected-file", conn_args.affected_file,
                           "explicit affected blocks: 'P Q fraction' per line");
    connectome->add_option("--strategy", conn_args.strategies,
                           "srw,mean_bwa,truncated_bwa,bivariate_bwa or 'all'")
        ->delimiter(',');
    connectome->add_option("--method", conn_args.method, "correction procedure or 'all'");
    connectome->add_option("--alpha", conn_args.alpha, "global level");
    connectome->add_option("--seed", conn_args.seed, "master seed");
    connectome->add_option("--out", conn_args.out, "output prefix");
    connectome->add_option("--replications", conn_args.replications,
                           "experiment mode: synthesize/compare this many times");
    connectome->add_flag("--null-baseline", conn_args.null_baseline,
                         "compare two null bootstraps (calibration runs)");
    connectome->add_flag("--include-diagonal", conn_args.include_diagonal,
                         "keep within-parcel blocks");
    connectome->add_flag("--legacy-f-constant", conn_args.legacy_f_constant,
                         "use the n_c+n_t-1 denominator in the bivariate statistic");
    connectome->add_option("--save-controls", conn_args.save_controls_dir,
                           "write the control matrices to this directory");
    connectome->add_option("--save-hierarchy", conn_args.save_hierarchy_file,
                           "write the hierarchy file");
    connectome->add_option("--conn-near", conn_args.conn_near, "synthetic: P(connected) at d=0");
    connectome->add_option("--conn-far", conn_args.conn_far, "synthetic: P(connected) at d=1");
    connectome->add_option("--value-scale", conn_args.value_scale, "synthetic: strength scale");
    connectome->add_option("--value-floor", conn_args.value_floor, "synthetic: strength floor");
    connectome->add_option("--value-decay", conn_args.value_decay, "synthetic: strength decay");
    connectome->add_option("--value-spread", conn_args.value_spread, "synthetic: strength spread");
    connectome->add_option("--noise-ratio", conn_args.noise_ratio, "synthetic: sd/strength ratio");

    std::string config_path;
    for (auto* cmd : {adjust, sweep, connectome})
        cmd->add_option("--config", config_path, "JSON file mirroring the flags (flags win)");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
            app.exit(e);
            return kExitUsage;
        }
        CLI::App* active = app.get_subcommands().front();
        if (!config_path.empty()) apply_json_config(active, config_path);

        if (active == adjust) return run_adjust(adjust_args);
        if (active == sweep) return run_sweep(sweep_args);
        if (active == example2) return run_example2(example_json);
        if (active == connectome) return run_connectome(conn_args);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const bwa::conn::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
