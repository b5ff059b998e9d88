#pragma once

#include <span>
#include <vector>

namespace dcin {

// Probability that a random positive outranks a random negative, ties
// counted 0.5 (normalized Mann-Whitney). Requires both classes present.
double auc(std::span<const double> scores, std::span<const int> labels);

double logloss(std::span<const double> scores, std::span<const int> labels);

// ((auc_measured - 0.5) / (auc_base - 0.5) - 1) * 100. auc_base == 0.5 is a
// domain error.
double rela_impr(double auc_measured, double auc_base);

}  // namespace dcin
