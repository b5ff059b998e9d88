#include "dcin/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "dcin/errors.hpp"

namespace dcin {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using CMapMat = Eigen::Map<const EMat>;

NodeId GradTape::push(Tensor value, bool needs_grad, std::function<void(GradTape&)> back) {
    Node n;
    n.value = std::move(value);
    if (needs_grad) {
        n.grad.shape = n.value.shape;
        n.grad.data.assign(n.value.data.size(), 0.0);
    }
    n.back = std::move(back);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId GradTape::leaf(const Tensor& value, Tensor* grad_sink) {
    NodeId id = push(value, true, nullptr);
    nodes_[id].sink = grad_sink;
    return id;
}

NodeId GradTape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

NodeId GradTape::gather_rows(NodeId table, std::vector<std::size_t> indices) {
    Tensor out = dcin::gather_rows(value(table), indices);
    bool ng = needs_grad(table);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        auto idx = std::move(indices);
        nodes_[id].back = [id, table, idx](GradTape& t) {
            const Tensor& g = t.grad(id);
            Tensor& tg = t.grad_mut(table);
            const std::size_t d = g.cols();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) tg.data[idx[i] * d + j] += g.data[i * d + j];
        };
    }
    return id;
}

NodeId GradTape::matmul(NodeId a, NodeId b) {
    Tensor out = dcin::matmul(value(a), value(b));
    bool ng = needs_grad(a) || needs_grad(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, a, b](GradTape& t) {
            const Tensor& dC = t.grad(id);
            const Tensor& va = t.value(a);
            const Tensor& vb = t.value(b);
            CMapMat mdc(dC.data.data(), dC.rows(), dC.cols());
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_mut(a);
                CMapMat mb(vb.data.data(), vb.rows(), vb.cols());
                MapMat mda(da.data.data(), da.rows(), da.cols());
                mda.noalias() += mdc * mb.transpose();
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_mut(b);
                CMapMat ma(va.data.data(), va.rows(), va.cols());
                MapMat mdb(db.data.data(), db.rows(), db.cols());
                mdb.noalias() += ma.transpose() * mdc;
            }
        };
    }
    return id;
}

NodeId GradTape::add_row_bias(NodeId x, NodeId b) {
    Tensor out = dcin::add_row_bias(value(x), value(b));
    bool ng = needs_grad(x) || needs_grad(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, x, b](GradTape& t) {
            const Tensor& g = t.grad(id);
            const std::size_t c = g.cols();
            if (t.needs_grad(x)) {
                Tensor& dx = t.grad_mut(x);
                for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] += g.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_mut(b);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < c; ++j) db.data[j] += g.data[i * c + j];
            }
        };
    }
    return id;
}

NodeId GradTape::relu(NodeId x) {
    Tensor out = dcin::relu(value(x));
    bool ng = needs_grad(x);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, x](GradTape& t) {
            const Tensor& g = t.grad(id);
            const Tensor& vx = t.value(x);
            Tensor& dx = t.grad_mut(x);
            // subgradient at 0 is 0
            for (std::size_t i = 0; i < g.size(); ++i)
                if (vx.data[i] > 0.0) dx.data[i] += g.data[i];
        };
    }
    return id;
}

NodeId GradTape::sigmoid(NodeId x) {
    Tensor out = dcin::sigmoid(value(x));
    bool ng = needs_grad(x);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, x](GradTape& t) {
            const Tensor& g = t.grad(id);
            const Tensor& s = t.value(id);
            Tensor& dx = t.grad_mut(x);
            for (std::size_t i = 0; i < g.size(); ++i)
                dx.data[i] += g.data[i] * s.data[i] * (1.0 - s.data[i]);
        };
    }
    return id;
}

NodeId GradTape::concat_cols(const std::vector<NodeId>& parts) {
    std::vector<const Tensor*> vs;
    vs.reserve(parts.size());
    bool ng = false;
    for (NodeId p : parts) {
        vs.push_back(&value(p));
        ng = ng || needs_grad(p);
    }
    Tensor out = dcin::concat_cols(vs);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        std::vector<NodeId> ps = parts;
        nodes_[id].back = [id, ps](GradTape& t) {
            const Tensor& g = t.grad(id);
            const std::size_t c = g.cols();
            std::size_t off = 0;
            for (NodeId p : ps) {
                const std::size_t pc = t.value(p).cols();
                if (t.needs_grad(p)) {
                    Tensor& dp = t.grad_mut(p);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                            dp.data[i * pc + j] += g.data[i * c + off + j];
                }
                off += pc;
            }
        };
    }
    return id;
}

NodeId GradTape::reshape(NodeId x, std::vector<std::size_t> shape) {
    Tensor out = value(x);
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    if (n != out.size())
        throw DimensionError("reshape: cannot view " + out.shape_str() + " as requested shape");
    out.shape = std::move(shape);
    bool ng = needs_grad(x);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, x](GradTape& t) {
            const Tensor& g = t.grad(id);
            Tensor& dx = t.grad_mut(x);
            for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] += g.data[i];
        };
    }
    return id;
}

NodeId GradTape::elem_add(NodeId a, NodeId b) {
    Tensor out = dcin::elem_add(value(a), value(b));
    bool ng = needs_grad(a) || needs_grad(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, a, b](GradTape& t) {
            const Tensor& g = t.grad(id);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_mut(a);
                for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_mut(b);
                for (std::size_t i = 0; i < g.size(); ++i) db.data[i] += g.data[i];
            }
        };
    }
    return id;
}

NodeId GradTape::elem_sub(NodeId a, NodeId b) {
    Tensor out = dcin::elem_sub(value(a), value(b));
    bool ng = needs_grad(a) || needs_grad(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, a, b](GradTape& t) {
            const Tensor& g = t.grad(id);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_mut(a);
                for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_mut(b);
                for (std::size_t i = 0; i < g.size(); ++i) db.data[i] -= g.data[i];
            }
        };
    }
    return id;
}

NodeId GradTape::elem_mul(NodeId a, NodeId b) {
    Tensor out = dcin::elem_mul(value(a), value(b));
    bool ng = needs_grad(a) || needs_grad(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, a, b](GradTape& t) {
            const Tensor& g = t.grad(id);
            const Tensor& va = t.value(a);
            const Tensor& vb = t.value(b);
            if (t.needs_grad(a)) {
                Tensor& da = t.grad_mut(a);
                for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * vb.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& db = t.grad_mut(b);
                for (std::size_t i = 0; i < g.size(); ++i) db.data[i] += g.data[i] * va.data[i];
            }
        };
    }
    return id;
}

NodeId GradTape::group_dot(NodeId q, NodeId k, std::size_t m) {
    Tensor out = dcin::group_dot(value(q), value(k), m);
    bool ng = needs_grad(q) || needs_grad(k);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, q, k, m](GradTape& t) {
            const Tensor& g = t.grad(id);
            const Tensor& vq = t.value(q);
            const Tensor& vk = t.value(k);
            const std::size_t gcount = vq.rows(), d = vq.cols();
            for (std::size_t gi = 0; gi < gcount; ++gi) {
                const double* qr = vq.data.data() + gi * d;
                for (std::size_t j = 0; j < m; ++j) {
                    const double gs = g.data[gi * m + j];
                    if (gs == 0.0) continue;
                    const std::size_t kr = (gi * m + j) * d;
                    if (t.needs_grad(q)) {
                        Tensor& dq = t.grad_mut(q);
                        for (std::size_t u = 0; u < d; ++u)
                            dq.data[gi * d + u] += gs * vk.data[kr + u];
                    }
                    if (t.needs_grad(k)) {
                        Tensor& dk = t.grad_mut(k);
                        for (std::size_t u = 0; u < d; ++u) dk.data[kr + u] += gs * qr[u];
                    }
                }
            }
        };
    }
    return id;
}

NodeId GradTape::rowwise_softmax(NodeId scores) {
    Tensor out = dcin::rowwise_softmax(value(scores));
    bool ng = needs_grad(scores);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, scores](GradTape& t) {
            const Tensor& g = t.grad(id);
            const Tensor& y = t.value(id);
            Tensor& dx = t.grad_mut(scores);
            const std::size_t c = y.cols();
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g.data[i * c + j] * y.data[i * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    dx.data[i * c + j] += y.data[i * c + j] * (g.data[i * c + j] - dot);
            }
        };
    }
    return id;
}

NodeId GradTape::group_weighted_sum(NodeId w, NodeId v) {
    Tensor out = dcin::group_weighted_sum(value(w), value(v));
    bool ng = needs_grad(w) || needs_grad(v);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].back = [id, w, v](GradTape& t) {
            const Tensor& g = t.grad(id);
            const Tensor& vw = t.value(w);
            const Tensor& vv = t.value(v);
            const std::size_t gcount = vw.rows(), m = vw.cols(), d = vv.cols();
            for (std::size_t gi = 0; gi < gcount; ++gi) {
                const double* grow = g.data.data() + gi * d;
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t vr = (gi * m + j) * d;
                    if (t.needs_grad(w)) {
                        double s = 0.0;
                        for (std::size_t u = 0; u < d; ++u) s += grow[u] * vv.data[vr + u];
                        t.grad_mut(w).data[gi * m + j] += s;
                    }
                    if (t.needs_grad(v)) {
                        const double wj = vw.data[gi * m + j];
                        Tensor& dv = t.grad_mut(v);
                        for (std::size_t u = 0; u < d; ++u) dv.data[vr + u] += wj * grow[u];
                    }
                }
            }
        };
    }
    return id;
}

NodeId GradTape::nll_mean(NodeId probs, std::vector<double> labels) {
    const Tensor& p = value(probs);
    if (p.size() != labels.size())
        throw DimensionError("nll_mean: " + std::to_string(labels.size()) + " labels for " +
                             p.shape_str());
    if (p.size() == 0) throw ContractViolation("nll_mean: empty batch");
    constexpr double kClamp = 1e-12;
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p.data[i];
        loss -= labels[i] * std::log(std::max(pi, kClamp)) +
                (1.0 - labels[i]) * std::log(std::max(1.0 - pi, kClamp));
    }
    loss /= static_cast<double>(p.size());
    flops::add(4 * p.size());
    bool ng = needs_grad(probs);
    NodeId id = push(Tensor::scalar(loss), ng, nullptr);
    if (ng) {
        auto y = std::move(labels);
        nodes_[id].back = [id, probs, y](GradTape& t) {
            const double g = t.grad(id).data[0];
            const Tensor& p = t.value(probs);
            Tensor& dp = t.grad_mut(probs);
            const double inv_n = 1.0 / static_cast<double>(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double pi = p.data[i];
                double d = 0.0;
                if (pi > 1e-12) d -= y[i] / pi;
                if (1.0 - pi > 1e-12) d += (1.0 - y[i]) / (1.0 - pi);
                dp.data[i] += g * d * inv_n;
            }
        };
    }
    return id;
}

void GradTape::backward(NodeId loss) {
    if (value(loss).size() != 1)
        throw ContractViolation("backward: loss must be scalar, got " + value(loss).shape_str());
    if (!nodes_[loss].needs_grad)
        throw ContractViolation("backward: loss does not depend on any leaf");
    grad_mut(loss).data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.needs_grad && n.back) n.back(*this);
    }
    for (Node& n : nodes_) {
        if (n.sink) {
            if (!n.sink->same_shape(n.grad))
                throw DimensionError("backward: grad sink shape " + n.sink->shape_str() +
                                     " vs " + n.grad.shape_str());
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.sink->data[i] += n.grad.data[i];
        }
    }
}

}  // namespace dcin
