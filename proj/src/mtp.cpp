#include "bwa/mtp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bwa::mtp {

const char* procedure_name(ProcedureKind method) {
    switch (method) {
        case ProcedureKind::bonferroni: return "bonferroni";
        case ProcedureKind::sidak: return "sidak";
        case ProcedureKind::holm: return "holm";
        case ProcedureKind::hochberg: return "hochberg";
        case ProcedureKind::bh95: return "bh95";
        case ProcedureKind::by01: return "by01";
    }
    return "?";
}

std::optional<ProcedureKind> procedure_from_name(const std::string& name) {
    for (ProcedureKind method : all_procedures)
        if (name == procedure_name(method)) return method;
    return std::nullopt;
}

double harmonic_number(std::size_t m) {
    double h = 0.0;
    for (std::size_t i = 1; i <= m; ++i) h += 1.0 / static_cast<double>(i);
    return h;
}

namespace {

void validate_pvalues(std::span<const double> p) {
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("p-values must lie in [0,1]");
}

// indices of p sorted ascending, ties broken by original index (stable)
std::vector<std::size_t> ascending_order(std::span<const double> p) {
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    return order;
}

}  // namespace

std::vector<double> adjust_pvalues(std::span<const double> p, ProcedureKind method) {
    validate_pvalues(p);
    const std::size_t m = p.size();
    std::vector<double> adjusted(m);
    if (m == 0) return adjusted;
    const double md = static_cast<double>(m);

    switch (method) {
        case ProcedureKind::bonferroni:
            for (std::size_t j = 0; j < m; ++j) adjusted[j] = std::min(1.0, md * p[j]);
            return adjusted;
        case ProcedureKind::sidak:
            for (std::size_t j = 0; j < m; ++j)
                adjusted[j] = -std::expm1(md * std::log1p(-p[j]));
            return adjusted;
        default: break;
    }

    const auto order = ascending_order(p);

    if (method == ProcedureKind::holm) {
        // step-down: running max of (m-i+1) p_(i), capped at 1
        double running = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double q = static_cast<double>(m - i) * p[order[i]];
            running = std::max(running, q);
            adjusted[order[i]] = std::min(1.0, running);
        }
        return adjusted;
    }

    // step-up family: running min from the largest p downwards
    double scale_num = 1.0;
    if (method == ProcedureKind::by01) scale_num = harmonic_number(m);

    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        double q;
        if (method == ProcedureKind::hochberg) {
            q = static_cast<double>(m - i) * p[order[i]];
        } else {  // bh95 / by01
            q = scale_num * md * p[order[i]] / static_cast<double>(i + 1);
        }
        running = std::min(running, q);
        adjusted[order[i]] = std::min(1.0, running);
    }
    return adjusted;
}

std::vector<std::size_t> reject(std::span<const double> p, ProcedureKind method, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("reject: alpha must lie in (0,1)");
    const auto adjusted = adjust_pvalues(p, method);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < adjusted.size(); ++j)
        if (adjusted[j] <= alpha) out.push_back(j);
    return out;
}

DecisionTable tabulate(std::span<const std::size_t> rejected,
                       std::span<const std::size_t> false_nulls, std::size_t m) {
    std::vector<char> is_rejected(m, 0);
    std::vector<char> is_false_null(m, 0);
    for (std::size_t j : rejected) {
        if (j >= m) throw std::domain_error("tabulate: rejected index out of range");
        is_rejected[j] = 1;
    }
    for (std::size_t j : false_nulls) {
        if (j >= m) throw std::domain_error("tabulate: ground-truth index out of range");
        is_false_null[j] = 1;
    }

    DecisionTable table;
    for (std::size_t j = 0; j < m; ++j) {
        if (is_false_null[j]) {
            if (is_rejected[j]) ++table.false_null_rejected;
            else ++table.false_null_accepted;
        } else {
            if (is_rejected[j]) ++table.true_null_rejected;
            else ++table.true_null_accepted;
        }
    }
    return table;
}

ErrorRates empirical_rates(const DecisionTable& table) {
    ErrorRates rates;
    if (table.m0() > 0)
        rates.type_i = static_cast<double>(table.true_null_rejected) /
                       static_cast<double>(table.m0());
    if (table.m1() > 0)
        rates.type_ii = static_cast<double>(table.false_null_accepted) /
                        static_cast<double>(table.m1());
    const std::size_t r = table.rejections();
    rates.fdp = static_cast<double>(table.true_null_rejected) /
                static_cast<double>(std::max<std::size_t>(r, 1));
    rates.any_false_positive = table.true_null_rejected >= 1;
    return rates;
}

}  // namespace bwa::mtp
