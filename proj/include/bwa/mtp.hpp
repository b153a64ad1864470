#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bwa::mtp {

/// Multiple-testing procedures. The FWER family (bonferroni, sidak, holm,
/// hochberg) and the FDR family (bh95 step-up, by01 with the harmonic
/// correction factor).
enum class ProcedureKind { bonferroni, sidak, holm, hochberg, bh95, by01 };

const char* procedure_name(ProcedureKind method);
std::optional<ProcedureKind> procedure_from_name(const std::string& name);
inline constexpr ProcedureKind all_procedures[] = {
    ProcedureKind::bonferroni, ProcedureKind::sidak,  ProcedureKind::holm,
    ProcedureKind::hochberg,   ProcedureKind::bh95,   ProcedureKind::by01,
};

/// Adjusted p-values: rejecting {adjusted <= alpha} is equivalent to
/// running the method's step procedure at level alpha, for every alpha.
std::vector<double> adjust_pvalues(std::span<const double> pvalues, ProcedureKind method);

/// Indices j with adjusted p_j <= alpha.
std::vector<std::size_t> reject(std::span<const double> pvalues, ProcedureKind method,
                                double alpha);

/// Outcome counts when testing m hypotheses: the cross-tabulation of
/// true/false nulls against accepted/rejected.
struct DecisionTable {
    std::size_t true_null_accepted = 0;   // U
    std::size_t true_null_rejected = 0;   // V (type I errors)
    std::size_t false_null_accepted = 0;  // T (type II errors)
    std::size_t false_null_rejected = 0;  // S

    std::size_t m0() const { return true_null_accepted + true_null_rejected; }
    std::size_t m1() const { return false_null_accepted + false_null_rejected; }
    std::size_t m() const { return m0() + m1(); }
    std::size_t rejections() const { return true_null_rejected + false_null_rejected; }  // R
};

/// Cross-tabulate a rejection set against the ground-truth set of false
/// nulls. Both sets must be subsets of {0..m-1}.
DecisionTable tabulate(std::span<const std::size_t> rejected,
                       std::span<const std::size_t> false_nulls, std::size_t m);

struct ErrorRates {
    std::optional<double> type_i;   // V/m0, absent when m0 = 0
    std::optional<double> type_ii;  // T/m1, absent when m1 = 0
    double fdp = 0.0;               // V/max(R,1)
    bool any_false_positive = false;
};

ErrorRates empirical_rates(const DecisionTable& table);

/// Harmonic number sum_{i=1..m} 1/i (the BY01 correction factor).
double harmonic_number(std::size_t m);

}  // namespace bwa::mtp
