#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dcin {

// Dense row-major tensor of doubles, rank 1 or 2.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::size_t n);
    static Tensor zeros(std::size_t r, std::size_t c);
    static Tensor full(std::size_t r, std::size_t c, double v);
    static Tensor vec(std::vector<double> values);
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> values);
    static Tensor scalar(double v);

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }
    // 2-D view: rank-1 tensors read as a single row.
    std::size_t rows() const { return shape.size() == 2 ? shape[0] : (shape.empty() ? 0 : 1); }
    std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
    bool all_finite() const;
    void fill(double v);
};

// Cumulative floating-point work done by the numeric kernels, counted in
// multiply-accumulates for matrix products and one unit per scalar
// transcendental. Used by the serving tests to compare per-candidate cost
// of the full and cached paths without relying on wall time.
namespace flops {
extern thread_local std::uint64_t counter;
inline void add(std::uint64_t n) { counter += n; }
inline void reset() { counter = 0; }
inline std::uint64_t count() { return counter; }
}  // namespace flops

// Forward kernels. These are the single source of truth for the math; the
// tape ops wrap them and attach backward rules.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_row_bias(const Tensor& x, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// 1-D softmax with max-subtraction.
Tensor softmax(const Tensor& scores);
// Row-wise softmax of a G x M score matrix.
Tensor rowwise_softmax(const Tensor& scores);
Tensor concat_cols(const std::vector<const Tensor*>& parts);
Tensor elem_sub(const Tensor& a, const Tensor& b);
Tensor elem_mul(const Tensor& a, const Tensor& b);
Tensor elem_add(const Tensor& a, const Tensor& b);
// scores[g, j] = dot(q[g], k[g*M + j]); q is G x d, k is (G*M) x d.
Tensor group_dot(const Tensor& q, const Tensor& k, std::size_t m);
// out[g] = sum_j w[g, j] * v[g*M + j]; w is G x M, v is (G*M) x d.
Tensor group_weighted_sum(const Tensor& w, const Tensor& v);
// Row gather out[i] = table[indices[i]].
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices);

}  // namespace dcin
