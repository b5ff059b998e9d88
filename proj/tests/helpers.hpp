#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "dcin/model.hpp"
#include "dcin/schema.hpp"

namespace dcin::testing {

inline FeatureSchema tiny_schema() {
    FeatureSchema s;
    s.item_vocab = 12;
    s.category_vocab = 5;
    s.user_vocab = 4;
    s.embed_dim = 4;
    s.max_abs_position = 15;
    s.rel_range = 6;
    return s;
}

inline ItemRef rand_item(const FeatureSchema& s, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> item(0, s.item_vocab - 1);
    std::uniform_int_distribution<std::size_t> cat(0, s.category_vocab - 1);
    return {item(rng), cat(rng)};
}

// Random well-formed session with n blocks of m displays; the click is
// planted inside its window at a valid slot.
inline Session rand_session(const FeatureSchema& s, std::size_t n, std::size_t m,
                            std::mt19937_64& rng) {
    Session sess;
    std::uniform_int_distribution<std::size_t> user(0, s.user_vocab - 1);
    sess.user_id = user(rng);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> base_pos(0, s.max_abs_position - m);
        const std::size_t base = base_pos(rng);
        std::vector<PositionedItem> displays;
        for (std::size_t j = 0; j < m; ++j) displays.push_back({rand_item(s, rng), base + j});
        std::uniform_int_distribution<std::size_t> slot(0, m - 1);
        PositionedItem click = displays[slot(rng)];
        sess.blocks.push_back(ClickContextBlock::make(click, std::move(displays)));
    }
    sess.target = rand_item(s, rng);
    std::uniform_int_distribution<int> lbl(0, 1);
    sess.label = lbl(rng);
    return sess;
}

// Triple-loop matmul, the independent oracle for the Eigen-backed kernel.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j)
                out.at(i, j) += a.at(i, k) * b.at(k, j);
    return out;
}

// O(P*N) pairwise AUC with 0.5 credit for ties.
inline double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) num += 1.0;
            else if (scores[i] == scores[j]) num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

// Central finite differences of the batch loss w.r.t. every parameter,
// compared against the tape gradient. Returns the max relative error, with
// absolute error used near zero.
inline double max_grad_rel_error(Model& model, std::span<const Session> batch,
                                 double step = 1e-5) {
    GradTape tape;
    model.store().zero_grad();
    NodeId loss = model.build_loss_graph(tape, batch);
    tape.backward(loss);

    auto loss_at = [&]() {
        GradTape t2;
        return t2.value(model.build_loss_graph(t2, batch)).data[0];
    };

    double worst = 0.0;
    for (auto& p : model.store().all()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value.data[i];
            p.value.data[i] = keep + step;
            const double up = loss_at();
            p.value.data[i] = keep - step;
            const double down = loss_at();
            p.value.data[i] = keep;
            const double fd = (up - down) / (2.0 * step);
            const double g = p.grad.data[i];
            const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
            worst = std::max(worst, std::abs(fd - g) / denom);
        }
    }
    return worst;
}

}  // namespace dcin::testing
