#include "dcin/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "dcin/errors.hpp"

namespace dcin {

namespace flops {
thread_local std::uint64_t counter = 0;
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using CMapMat = Eigen::Map<const EMat>;

Tensor Tensor::zeros(std::size_t n) {
    Tensor t;
    t.shape = {n};
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::zeros(std::size_t r, std::size_t c) {
    Tensor t;
    t.shape = {r, c};
    t.data.assign(r * c, 0.0);
    return t;
}

Tensor Tensor::full(std::size_t r, std::size_t c, double v) {
    Tensor t = zeros(r, c);
    t.fill(v);
    return t;
}

Tensor Tensor::vec(std::vector<double> values) {
    Tensor t;
    t.shape = {values.size()};
    t.data = std::move(values);
    return t;
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c)
        throw DimensionError("matrix: " + std::to_string(values.size()) + " values for " +
                             std::to_string(r) + "x" + std::to_string(c));
    Tensor t;
    t.shape = {r, c};
    t.data = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return vec({v}); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dims disagree, " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.rows(), b.cols());
    if (out.size() == 0) return out;
    CMapMat ma(a.data.data(), a.rows(), a.cols());
    CMapMat mb(b.data.data(), b.rows(), b.cols());
    MapMat mo(out.data.data(), out.rows(), out.cols());
    mo.noalias() = ma * mb;
    flops::add(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
    if (a.rank() == 1) out.shape = {b.cols()};
    return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    if (b.size() != x.cols())
        throw DimensionError("add_row_bias: bias " + b.shape_str() + " vs " + x.shape_str());
    Tensor out = x;
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += b.data[j];
    flops::add(x.size());
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    flops::add(x.size());
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    flops::add(x.size());
    return out;
}

Tensor softmax(const Tensor& scores) {
    if (scores.size() == 0) throw ContractViolation("softmax: empty input");
    Tensor out = scores;
    double mx = *std::max_element(out.data.begin(), out.data.end());
    double sum = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : out.data) v /= sum;
    flops::add(3 * scores.size());
    return out;
}

Tensor rowwise_softmax(const Tensor& scores) {
    if (scores.rows() == 0 || scores.cols() == 0)
        throw ContractViolation("rowwise_softmax: empty input " + scores.shape_str());
    Tensor out = scores;
    const std::size_t c = out.cols();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.data.data() + i * c;
        double mx = *std::max_element(row, row + c);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
    }
    flops::add(3 * scores.size());
    return out;
}

Tensor concat_cols(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw ContractViolation("concat_cols: no parts");
    std::size_t r = parts[0]->rows(), c = 0;
    for (const Tensor* p : parts) {
        if (p->rows() != r)
            throw DimensionError("concat_cols: row mismatch " + p->shape_str());
        c += p->cols();
    }
    Tensor out = Tensor::zeros(r, c);
    std::size_t off = 0;
    for (const Tensor* p : parts) {
        const std::size_t pc = p->cols();
        for (std::size_t i = 0; i < r; ++i)
            std::copy(p->data.begin() + i * pc, p->data.begin() + (i + 1) * pc,
                      out.data.begin() + i * c + off);
        off += pc;
    }
    return out;
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

Tensor elem_sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "elem_sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    flops::add(a.size());
    return out;
}

Tensor elem_mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "elem_mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    flops::add(a.size());
    return out;
}

Tensor elem_add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "elem_add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    flops::add(a.size());
    return out;
}

Tensor group_dot(const Tensor& q, const Tensor& k, std::size_t m) {
    const std::size_t g = q.rows(), d = q.cols();
    if (k.rows() != g * m || k.cols() != d)
        throw DimensionError("group_dot: keys " + k.shape_str() + " for queries " + q.shape_str() +
                             " with group size " + std::to_string(m));
    Tensor out = Tensor::zeros(g, m);
    for (std::size_t gi = 0; gi < g; ++gi) {
        const double* qr = q.data.data() + gi * d;
        for (std::size_t j = 0; j < m; ++j) {
            const double* kr = k.data.data() + (gi * m + j) * d;
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t) s += qr[t] * kr[t];
            out.data[gi * m + j] = s;
        }
    }
    flops::add(static_cast<std::uint64_t>(g) * m * d);
    return out;
}

Tensor group_weighted_sum(const Tensor& w, const Tensor& v) {
    const std::size_t g = w.rows(), m = w.cols(), d = v.cols();
    if (v.rows() != g * m)
        throw DimensionError("group_weighted_sum: values " + v.shape_str() + " for weights " +
                             w.shape_str());
    Tensor out = Tensor::zeros(g, d);
    for (std::size_t gi = 0; gi < g; ++gi) {
        double* orow = out.data.data() + gi * d;
        for (std::size_t j = 0; j < m; ++j) {
            const double wj = w.data[gi * m + j];
            const double* vr = v.data.data() + (gi * m + j) * d;
            for (std::size_t t = 0; t < d; ++t) orow[t] += wj * vr[t];
        }
    }
    flops::add(static_cast<std::uint64_t>(g) * m * d);
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices) {
    const std::size_t d = table.cols();
    Tensor out = Tensor::zeros(indices.size(), d);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= table.rows())
            throw IndexLookupError("gather_rows: index " + std::to_string(indices[i]) +
                                   " out of range for table " + table.shape_str());
        std::copy(table.data.begin() + indices[i] * d, table.data.begin() + (indices[i] + 1) * d,
                  out.data.begin() + i * d);
    }
    return out;
}

}  // namespace dcin
