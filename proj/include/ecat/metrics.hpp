#pragma once

#include <cstdint>
#include <span>

namespace ecat {

/// Tie-corrected Mann–Whitney AUC:
///   (sum of positive ranks - n+(n+ + 1)/2) / (n+ n-)
/// with average ranks over tied scores. Labels must be 0 or 1; throws
/// DegenerateInputError naming the class counts when either class is empty.
double auc(std::span<const double> scores, std::span<const double> labels);

}  // namespace ecat
