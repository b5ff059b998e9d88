#include "dcin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dcin/errors.hpp"
#include "dcin/model.hpp"

namespace dcin {

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw DimensionError("auc: scores/labels length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw ContractViolation("auc: needs at least one positive and one negative label");

    // rank-sum with midranks for ties
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) pos_rank_sum += midrank;
        i = j + 1;
    }
    const double u = pos_rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double logloss(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw DimensionError("logloss: scores/labels length mismatch");
    if (scores.empty()) throw ContractViolation("logloss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) s += nll_loss(scores[i], labels[i]);
    return s / static_cast<double>(scores.size());
}

double rela_impr(double auc_measured, double auc_base) {
    if (auc_base == 0.5)
        throw ContractViolation("rela_impr: base AUC of 0.5 is outside the formula's domain");
    return ((auc_measured - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

}  // namespace dcin
