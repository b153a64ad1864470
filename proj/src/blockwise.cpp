#include "bwa/blockwise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace bwa::blockwise {

std::size_t GlobalRegion::active_regions() const {
    if (mask.empty()) return values.size();
    std::size_t n = 0;
    for (std::size_t j = 0; j < values.size(); ++j)
        if (!mask[j]) ++n;
    return n;
}

void BlockPartition::assign(std::size_t region, std::size_t block) {
    records.emplace_back(region, block);
    block_count = std::max(block_count, block + 1);
}

std::vector<std::size_t> BlockPartition::block_sizes() const {
    std::vector<std::size_t> sizes(block_count, 0);
    for (const auto& [region, block] : records) {
        (void)region;
        ++sizes[block];
    }
    return sizes;
}

std::vector<std::vector<std::size_t>> BlockPartition::members() const {
    std::vector<std::vector<std::size_t>> out(block_count);
    for (const auto& [region, block] : records) out[block].push_back(region);
    return out;
}

std::string PartitionReport::message() const {
    if (ok) return "ok";
    std::ostringstream os;
    os << "partition violation:";
    auto list = [&os](const char* label, const std::vector<std::size_t>& regions) {
        if (regions.empty()) return;
        os << ' ' << label << " [";
        for (std::size_t i = 0; i < regions.size(); ++i) {
            if (i) os << ',';
            if (i == 8) { os << "..."; break; }
            os << regions[i];
        }
        os << ']';
    };
    list("duplicate", duplicate_regions);
    list("unassigned", unassigned_regions);
    list("masked-assigned", masked_assigned);
    list("empty-blocks", empty_blocks);
    return os.str();
}

PartitionReport validate_partition(const GlobalRegion& region, const BlockPartition& part) {
    PartitionReport report;
    const std::size_t total = region.total_regions();
    std::vector<int> seen(total, 0);

    for (const auto& [r, b] : part.records) {
        (void)b;
        if (r >= total) {
            report.unassigned_regions.push_back(r);  // out of range counts as a violation
            report.ok = false;
            continue;
        }
        if (region.excluded(r)) {
            report.masked_assigned.push_back(r);
            report.ok = false;
        }
        if (++seen[r] == 2) {
            report.duplicate_regions.push_back(r);
            report.ok = false;
        }
    }
    for (std::size_t r = 0; r < total; ++r) {
        if (!region.excluded(r) && seen[r] == 0) {
            report.unassigned_regions.push_back(r);
            report.ok = false;
        }
    }
    for (std::size_t b = 0; b < part.block_count; ++b) {
        bool any = false;
        for (const auto& [r, blk] : part.records) {
            (void)r;
            if (blk == b) { any = true; break; }
        }
        if (!any) {
            report.empty_blocks.push_back(b);
            report.ok = false;
        }
    }
    return report;
}

BlockPartition load_partition(const std::string& path, std::optional<std::size_t> row_width) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open partition file: " + path);
    BlockPartition part;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<long long> tokens;
        long long v;
        while (ls >> v) tokens.push_back(v);
        if (tokens.empty()) continue;
        auto fail = [&](const char* why) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + why);
        };
        for (long long t : tokens)
            if (t < 0) fail("negative index");
        if (tokens.size() == 2) {
            part.assign(static_cast<std::size_t>(tokens[0]), static_cast<std::size_t>(tokens[1]));
        } else if (tokens.size() == 3) {
            if (!row_width) fail("cell-coordinate record needs the matrix width");
            part.assign(static_cast<std::size_t>(tokens[0]) * *row_width +
                            static_cast<std::size_t>(tokens[1]),
                        static_cast<std::size_t>(tokens[2]));
        } else {
            fail("expected 2 or 3 integer tokens");
        }
    }
    return part;
}

const char* summary_name(SummaryKind kind) {
    switch (kind) {
        case SummaryKind::mean: return "mean";
        case SummaryKind::median: return "median";
        case SummaryKind::huber: return "huber";
        case SummaryKind::truncated_mean: return "truncated_mean";
        case SummaryKind::bivariate: return "bivariate";
    }
    return "?";
}

std::optional<SummaryKind> summary_from_name(const std::string& name) {
    for (SummaryKind kind : {SummaryKind::mean, SummaryKind::median, SummaryKind::huber,
                             SummaryKind::truncated_mean, SummaryKind::bivariate})
        if (name == summary_name(kind)) return kind;
    return std::nullopt;
}

double truncated_mean(std::span<const double> values, double threshold) {
    if (values.empty()) throw std::domain_error("truncated_mean: empty block");
    std::size_t above = 0;
    for (double v : values)
        if (v > threshold) ++above;
    return static_cast<double>(above) / static_cast<double>(values.size());
}

BlockSummary summarize_block(std::span<const double> values, SummaryKind kind, std::size_t block,
                             double threshold) {
    if (values.empty()) throw std::domain_error("summarize_block: empty block");
    BlockSummary summary;
    summary.block = block;
    summary.kind = kind;
    switch (kind) {
        case SummaryKind::mean: summary.value = stats::mean(values); break;
        case SummaryKind::median: summary.value = stats::median(values); break;
        case SummaryKind::huber: summary.value = stats::huber_location(values); break;
        case SummaryKind::truncated_mean: summary.value = truncated_mean(values, threshold); break;
        case SummaryKind::bivariate:
            summary.value = stats::mean(values);
            summary.second = truncated_mean(values, threshold);
            break;
    }
    return summary;
}

double srw_critical_value(double alpha, std::size_t total_regions, double mu0, double sigma0) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("srw_critical_value: alpha in (0,1)");
    if (total_regions < 1) throw std::domain_error("srw_critical_value: M >= 1");
    if (!(sigma0 > 0.0)) throw std::domain_error("srw_critical_value: sigma0 > 0");
    return mu0 + sigma0 * stats::normal_quantile(1.0 - alpha / static_cast<double>(total_regions));
}

double bwa_critical_value(double alpha, std::size_t block_count, std::size_t block_size,
                          double mu0, double sigma0) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("bwa_critical_value: alpha in (0,1)");
    if (block_count < 1 || block_size < 1)
        throw std::domain_error("bwa_critical_value: m and b must be >= 1");
    if (!(sigma0 > 0.0)) throw std::domain_error("bwa_critical_value: sigma0 > 0");
    return mu0 + sigma0 / std::sqrt(static_cast<double>(block_size)) *
                     stats::normal_quantile(1.0 - alpha / static_cast<double>(block_count));
}

double block_z_pvalue(double summary_value, std::size_t block_size, double mu0, double sigma0) {
    if (!(sigma0 > 0.0)) throw std::domain_error("block_z_pvalue: sigma0 > 0");
    if (block_size < 1) throw std::domain_error("block_z_pvalue: b >= 1");
    const double z =
        std::sqrt(static_cast<double>(block_size)) * (summary_value - mu0) / sigma0;
    return 1.0 - stats::normal_cdf(z);
}

namespace {

struct Moments2 {
    double mean1 = 0.0, mean2 = 0.0;
    double s11 = 0.0, s12 = 0.0, s22 = 0.0;  // unbiased covariance entries
};

Moments2 bivariate_moments(std::span<const BivariatePoint> sample) {
    const double n = static_cast<double>(sample.size());
    Moments2 m;
    for (const auto& p : sample) {
        m.mean1 += p.first;
        m.mean2 += p.second;
    }
    m.mean1 /= n;
    m.mean2 /= n;
    for (const auto& p : sample) {
        const double d1 = p.first - m.mean1;
        const double d2 = p.second - m.mean2;
        m.s11 += d1 * d1;
        m.s12 += d1 * d2;
        m.s22 += d2 * d2;
    }
    m.s11 /= n - 1.0;
    m.s12 /= n - 1.0;
    m.s22 /= n - 1.0;
    return m;
}

}  // namespace

BivariateResult bivariate_f_test(std::span<const BivariatePoint> control,
                                 std::span<const BivariatePoint> treatment, FConstant constant) {
    const std::size_t nc = control.size();
    const std::size_t nt = treatment.size();
    if (nc < 2 || nt < 2) throw std::domain_error("bivariate_f_test: each group needs >= 2 points");

    const Moments2 mc = bivariate_moments(control);
    const Moments2 mt = bivariate_moments(treatment);
    const double ncd = static_cast<double>(nc);
    const double ntd = static_cast<double>(nt);
    const double pool = ncd + ntd - 2.0;

    const double s11 = ((ncd - 1.0) * mc.s11 + (ntd - 1.0) * mt.s11) / pool;
    const double s12 = ((ncd - 1.0) * mc.s12 + (ntd - 1.0) * mt.s12) / pool;
    const double s22 = ((ncd - 1.0) * mc.s22 + (ntd - 1.0) * mt.s22) / pool;

    const double det = s11 * s22 - s12 * s12;
    const double scale = std::max(s11, s22);
    if (scale == 0.0 || !(det > scale * scale * 1e-14)) {
        int component = -1;
        if (s11 > 0.0 && s22 <= s11 * 1e-12) component = 1;
        else if (s22 > 0.0 && s11 <= s22 * 1e-12) component = 0;
        throw SingularCovariance(
            component, component < 0
                           ? "bivariate_f_test: pooled covariance is singular"
                           : std::string("bivariate_f_test: component '") +
                                 (component == 0 ? "mean" : "truncated mean") +
                                 "' has zero pooled variance");
    }

    const double d1 = mt.mean1 - mc.mean1;
    const double d2 = mt.mean2 - mc.mean2;
    // quadratic form d' S^-1 d via the 2x2 inverse
    const double quad = (d1 * (s22 * d1 - s12 * d2) + d2 * (s11 * d2 - s12 * d1)) / det;

    const double denom = constant == FConstant::standard ? (ncd + ntd - 2.0) : (ncd + ntd - 1.0);
    const double f = (ncd * ntd / (ncd + ntd)) * quad * (ncd + ntd - 3.0) / (2.0 * denom);
    const double p = 1.0 - stats::f_cdf(f, 2.0, ncd + ntd - 3.0);
    return BivariateResult{f, p};
}

namespace {

BlockAnalysis finish_analysis(std::vector<BlockSummary> summaries, std::vector<double> pvalues,
                              mtp::ProcedureKind method, double alpha,
                              const GroundTruth& affected_blocks) {
    BlockAnalysis analysis;
    analysis.summaries = std::move(summaries);
    analysis.pvalues = std::move(pvalues);
    analysis.adjusted = mtp::adjust_pvalues(analysis.pvalues, method);
    for (std::size_t b = 0; b < analysis.adjusted.size(); ++b)
        if (analysis.adjusted[b] <= alpha) analysis.rejected_blocks.push_back(b);
    if (affected_blocks) {
        analysis.table = mtp::tabulate(analysis.rejected_blocks, *affected_blocks,
                                       analysis.pvalues.size());
        analysis.rates = mtp::empirical_rates(*analysis.table);
    }
    return analysis;
}

std::vector<std::vector<double>> collect_block_values(const GlobalRegion& region,
                                                      const BlockPartition& part) {
    const auto report = validate_partition(region, part);
    if (!report.ok) throw std::runtime_error(report.message());
    std::vector<std::vector<double>> values(part.block_count);
    for (const auto& [r, b] : part.records) values[b].push_back(region.values[r]);
    return values;
}

}  // namespace

BlockAnalysis run_block_analysis(const GlobalRegion& region, const BlockPartition& part,
                                 SummaryKind summary, mtp::ProcedureKind method, double alpha,
                                 const NullModel& null_model,
                                 const GroundTruth& affected_blocks) {
    if (summary == SummaryKind::bivariate || summary == SummaryKind::truncated_mean)
        throw std::domain_error("run_block_analysis: one-image analysis needs a location summary");
    const auto block_values = collect_block_values(region, part);

    std::vector<BlockSummary> summaries;
    std::vector<double> pvalues;
    summaries.reserve(block_values.size());
    pvalues.reserve(block_values.size());
    for (std::size_t b = 0; b < block_values.size(); ++b) {
        const auto s = summarize_block(block_values[b], summary, b);
        summaries.push_back(s);
        // Median/huber reuse the mean's null map (conservative).
        pvalues.push_back(
            block_z_pvalue(s.value, block_values[b].size(), null_model.mu0, null_model.sigma0));
    }
    return finish_analysis(std::move(summaries), std::move(pvalues), method, alpha,
                           affected_blocks);
}

BlockAnalysis run_block_analysis(const GlobalRegion& baseline, const GlobalRegion& comparison,
                                 const BlockPartition& part, SummaryKind summary,
                                 mtp::ProcedureKind method, double alpha,
                                 const NullModel& null_model,
                                 const GroundTruth& affected_blocks) {
    if (summary == SummaryKind::bivariate || summary == SummaryKind::truncated_mean)
        throw std::domain_error("run_block_analysis: two-image analysis needs a location summary");
    if (baseline.total_regions() != comparison.total_regions())
        throw std::runtime_error("run_block_analysis: image sizes differ");
    const auto base_values = collect_block_values(baseline, part);
    const auto comp_values = collect_block_values(comparison, part);

    std::vector<BlockSummary> summaries;
    std::vector<double> pvalues;
    for (std::size_t b = 0; b < base_values.size(); ++b) {
        const auto sb = summarize_block(base_values[b], summary, b);
        const auto sc = summarize_block(comp_values[b], summary, b);
        BlockSummary diff = sc;
        diff.value = sc.value - sb.value;
        summaries.push_back(diff);
        // difference of two block means has variance 2 sigma0^2 / b
        const double z = diff.value /
                         (null_model.sigma0 * std::sqrt(2.0 / static_cast<double>(base_values[b].size())));
        pvalues.push_back(1.0 - stats::normal_cdf(z));
    }
    return finish_analysis(std::move(summaries), std::move(pvalues), method, alpha,
                           affected_blocks);
}

}  // namespace bwa::blockwise
