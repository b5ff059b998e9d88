#include "dcin/model.hpp"

#include <cmath>

#include "dcin/baselines.hpp"
#include "dcin/errors.hpp"

namespace dcin {

std::string kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::dcin: return "dcin";
        case ModelKind::din: return "din";
        case ModelKind::base: return "base";
    }
    return "?";
}

ModelKind kind_from_name(const std::string& name) {
    if (name == "dcin") return ModelKind::dcin;
    if (name == "din") return ModelKind::din;
    if (name == "base") return ModelKind::base;
    throw ValidationError("unknown model kind: " + name);
}

double nll_loss(double p, int label) {
    constexpr double kClamp = 1e-12;
    return -(label * std::log(std::max(p, kClamp)) +
             (1 - label) * std::log(std::max(1.0 - p, kClamp)));
}

std::unique_ptr<Model> make_model(ModelKind kind, const FeatureSchema& schema,
                                  const ModelDims& dims, AblationFlags flags, std::uint64_t seed) {
    switch (kind) {
        case ModelKind::dcin: return std::make_unique<DcinModel>(schema, dims, flags, seed);
        case ModelKind::din: return std::make_unique<DinModel>(schema, dims, seed);
        case ModelKind::base: return std::make_unique<BaseModel>(schema, dims, seed);
    }
    throw ValidationError("make_model: bad kind");
}

DcinModel::DcinModel(const FeatureSchema& schema, const ModelDims& dims, AblationFlags flags,
                     std::uint64_t seed)
    : tables_(store_, schema, mix_seed(seed, 100)), dims_(dims), flags_(flags) {
    const std::size_t dx = x_dim();
    store_.add("pcam.W_Q", glorot_init(dx, dims.att_dim, mix_seed(seed, 10)));
    store_.add("pcam.W_K", glorot_init(dx, dims.att_dim, mix_seed(seed, 11)));
    // Identity init keeps v an interpretable mixture of the window items, so
    // the skips below see real content from the first step.
    Tensor w_v = Tensor::zeros(dx, dx);
    for (std::size_t i = 0; i < dx; ++i) w_v.at(i, i) = 1.0;
    store_.add("pcam.W_V", std::move(w_v));
    // The click skip-projection and W_T share their random init over the
    // item++category rows, so e_t . I_i starts out proportional to x_t . x_c
    // and the IMM can recognize repeated items/categories before training.
    Tensor skip = glorot_init(dx, dims.interest_dim, mix_seed(seed, 16));
    Tensor w_t = Tensor::zeros(schema.item_dim(), dims.interest_dim);
    std::copy(skip.data.begin(), skip.data.begin() + w_t.size(), w_t.data.begin());
    if (flags_.use_fcfm) {
        store_.add("fcfm.W0", glorot_init(4 * dx, dims.fcfm_hidden, mix_seed(seed, 13)));
        store_.add("fcfm.b0", Tensor::zeros(dims.fcfm_hidden));
        store_.add("fcfm.W1", glorot_init(dims.fcfm_hidden, dims.interest_dim, mix_seed(seed, 14)));
        store_.add("fcfm.b1", Tensor::zeros(dims.interest_dim));
        store_.add("fcfm.skip", skip);
        // Display exposure starts as mild negative evidence: items shown
        // around a click that were not clicked argue against interest.
        for (double& v : skip.data) v *= -0.2;
        store_.add("fcfm.skip_v", std::move(skip));
    } else {
        store_.add("fcfm.v_proj", std::move(skip));
    }
    store_.add("imm.W_T", std::move(w_t));
    std::size_t in = 5 * dims.interest_dim + schema.embed_dim;
    for (std::size_t li = 0; li < dims.head.size(); ++li) {
        store_.add("head.W" + std::to_string(li), glorot_init(in, dims.head[li], mix_seed(seed, 20 + 2 * li)));
        store_.add("head.b" + std::to_string(li), Tensor::zeros(dims.head[li]));
        in = dims.head[li];
    }
    store_.add("head.W_out", glorot_init(in, 1, mix_seed(seed, 90)));
    store_.add("head.b_out", Tensor::zeros(1));
}

Tensor DcinModel::x_repr(const PositionedItem& pi) const {
    return flags_.use_position ? tables_.build_x(pi) : tables_.embed_item(pi.item);
}

Tensor DcinModel::pcam_scores(const ClickContextBlock& block) const {
    if (block.displays.empty()) throw ContractViolation("pcam_scores: empty display window");
    if (block.displays.size() != block.rel_positions.size())
        throw DimensionError("pcam_scores: displays/rel_positions length mismatch");
    Tensor xq = x_repr(block.click);
    Tensor q = matmul(xq, store_.named("pcam.W_Q").value);
    Tensor alpha = Tensor::zeros(block.displays.size());
    const Tensor& wk = store_.named("pcam.W_K").value;
    for (std::size_t j = 0; j < block.displays.size(); ++j) {
        Tensor k = matmul(x_repr(block.displays[j]), wk);
        double s = 0.0;
        for (std::size_t t = 0; t < k.size(); ++t) s += q.data[t] * k.data[t];
        if (flags_.use_position) s += tables_.embed_rel_position(block.rel_positions[j]);
        alpha.data[j] = s;
    }
    return alpha;
}

Tensor DcinModel::pcam_aggregate(const ClickContextBlock& block, Tensor* weights_out) const {
    if (block.displays.empty()) throw ContractViolation("pcam_aggregate: M == 0");
    Tensor mu = softmax(pcam_scores(block));
    if (weights_out) *weights_out = mu;
    const Tensor& wv = store_.named("pcam.W_V").value;
    Tensor v = Tensor::zeros(wv.cols());
    for (std::size_t j = 0; j < block.displays.size(); ++j) {
        Tensor vj = matmul(x_repr(block.displays[j]), wv);
        for (std::size_t t = 0; t < v.size(); ++t) v.data[t] += mu.data[j] * vj.data[t];
    }
    return v;
}

Tensor DcinModel::fcfm_fuse(const Tensor& x_click, const Tensor& v) const {
    if (!x_click.same_shape(v))
        throw DimensionError("fcfm_fuse: x " + x_click.shape_str() + " vs v " + v.shape_str());
    if (!flags_.use_fcfm) {
        Tensor i = matmul(v, store_.named("fcfm.v_proj").value);
        return i;
    }
    Tensor d = elem_sub(x_click, v);
    Tensor m = elem_mul(x_click, v);
    Tensor f0 = concat_cols({&x_click, &v, &d, &m});
    f0.shape = {f0.size()};
    Tensor h = relu(add_row_bias(matmul(f0, store_.named("fcfm.W0").value),
                                 store_.named("fcfm.b0").value));
    Tensor out = relu(add_row_bias(matmul(h, store_.named("fcfm.W1").value),
                                   store_.named("fcfm.b1").value));
    // linear skips from the click and its display context (constructor note)
    out = elem_add(out, matmul(x_click, store_.named("fcfm.skip").value));
    return elem_add(out, matmul(v, store_.named("fcfm.skip_v").value));
}

Tensor DcinModel::compute_interests(std::span<const ClickContextBlock> blocks,
                                    Tensor* pcam_weights_out) const {
    if (blocks.empty()) throw ContractViolation("compute_interests: no behavior blocks");
    Tensor interests = Tensor::zeros(blocks.size(), dims_.interest_dim);
    if (pcam_weights_out)
        *pcam_weights_out = Tensor::zeros(blocks.size(), blocks[0].displays.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        Tensor mu;
        Tensor v = pcam_aggregate(blocks[i], &mu);
        if (pcam_weights_out) {
            if (mu.size() != pcam_weights_out->cols())
                throw DimensionError("compute_interests: ragged display windows");
            for (std::size_t j = 0; j < mu.size(); ++j) pcam_weights_out->at(i, j) = mu.data[j];
        }
        Tensor ii = fcfm_fuse(x_repr(blocks[i].click), v);
        for (std::size_t t = 0; t < ii.size(); ++t) interests.at(i, t) = ii.data[t];
    }
    return interests;
}

Tensor DcinModel::imm_match(const Tensor& interests, const Tensor& target_emb,
                            Tensor* weights_out) {
    if (interests.rows() == 0) throw ContractViolation("imm_match: N == 0");
    if (interests.cols() != target_emb.size())
        throw DimensionError("imm_match: interests " + interests.shape_str() + " vs target " +
                             target_emb.shape_str());
    const std::size_t n = interests.rows(), d = interests.cols();
    Tensor scores = Tensor::zeros(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += target_emb.data[t] * interests.at(i, t);
        scores.data[i] = s;
    }
    flops::add(n * d);
    Tensor w = softmax(scores);
    if (weights_out) *weights_out = w;
    Tensor u = Tensor::zeros(d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < d; ++t) u.data[t] += w.data[i] * interests.at(i, t);
    flops::add(n * d);
    return u;
}

Tensor DcinModel::target_embedding(const ItemRef& target) const {
    return matmul(tables_.embed_item(target), store_.named("imm.W_T").value);
}

std::vector<double> DcinModel::score_from_interests(const Tensor& interests, std::size_t user_id,
                                                    std::span<const ItemRef> targets) const {
    const std::size_t k = targets.size();
    if (k == 0) throw ContractViolation("score_from_interests: no targets");
    Tensor user = tables_.embed_user(user_id);
    const std::size_t d_i = dims_.interest_dim, d_e = tables_.schema().embed_dim;
    // The attended match u is paired with the unweighted interest mean, so
    // evidence the attention down-weights still reaches the head.
    Tensor ubar = Tensor::zeros(d_i);
    for (std::size_t i = 0; i < interests.rows(); ++i)
        for (std::size_t t = 0; t < d_i; ++t) ubar.data[t] += interests.at(i, t);
    for (double& x : ubar.data) x /= static_cast<double>(interests.rows());
    Tensor head_in = Tensor::zeros(k, 5 * d_i + d_e);
    for (std::size_t c = 0; c < k; ++c) {
        Tensor et = target_embedding(targets[c]);
        Tensor u = imm_match(interests, et);
        double* row = head_in.data.data() + c * head_in.cols();
        std::copy(u.data.begin(), u.data.end(), row);
        std::copy(et.data.begin(), et.data.end(), row + d_i);
        // the ⊙ products let the head read interest/target matches directly
        for (std::size_t t = 0; t < d_i; ++t) row[2 * d_i + t] = u.data[t] * et.data[t];
        std::copy(ubar.data.begin(), ubar.data.end(), row + 3 * d_i);
        for (std::size_t t = 0; t < d_i; ++t) row[4 * d_i + t] = ubar.data[t] * et.data[t];
        std::copy(user.data.begin(), user.data.end(), row + 5 * d_i);
    }
    Tensor h = head_in;
    for (std::size_t li = 0; li < dims_.head.size(); ++li) {
        h = relu(add_row_bias(matmul(h, store_.named("head.W" + std::to_string(li)).value),
                              store_.named("head.b" + std::to_string(li)).value));
    }
    Tensor logit = add_row_bias(matmul(h, store_.named("head.W_out").value),
                                store_.named("head.b_out").value);
    Tensor p = sigmoid(logit);
    return {p.data.begin(), p.data.end()};
}

double DcinModel::predict(const Session& s) const {
    if (s.blocks.empty()) throw ValidationError("predict: session has no behavior blocks");
    Tensor interests = compute_interests(s.blocks);
    ItemRef t = s.target;
    return score_from_interests(interests, s.user_id, std::span<const ItemRef>(&t, 1))[0];
}

NodeId DcinModel::build_loss_graph(GradTape& tape, std::span<const Session> batch) const {
    if (batch.empty()) throw ContractViolation("build_loss_graph: empty batch");
    const std::size_t b = batch.size();
    const std::size_t n = batch[0].blocks.size();
    const std::size_t m = batch[0].blocks[0].displays.size();
    std::vector<PositionedItem> clicks;
    std::vector<PositionedItem> displays;
    std::vector<long> rels;
    std::vector<ItemRef> targets;
    std::vector<std::size_t> users;
    std::vector<double> labels;
    clicks.reserve(b * n);
    displays.reserve(b * n * m);
    rels.reserve(b * n * m);
    for (const Session& s : batch) {
        if (s.blocks.size() != n)
            throw ValidationError("build_loss_graph: ragged batch (block counts differ)");
        for (const ClickContextBlock& blk : s.blocks) {
            if (blk.displays.size() != m)
                throw ValidationError("build_loss_graph: ragged batch (window sizes differ)");
            clicks.push_back(blk.click);
            displays.insert(displays.end(), blk.displays.begin(), blk.displays.end());
            rels.insert(rels.end(), blk.rel_positions.begin(), blk.rel_positions.end());
        }
        targets.push_back(s.target);
        users.push_back(s.user_id);
        labels.push_back(static_cast<double>(s.label));
    }

    auto& st = const_cast<ParameterStore&>(store_);
    auto leaf = [&](const char* name) {
        auto& p = st.named(name);
        return tape.leaf(p.value, &p.grad);
    };

    NodeId x_c = tables_.gather_x(tape, clicks, flags_.use_position);
    NodeId x_d = tables_.gather_x(tape, displays, flags_.use_position);
    NodeId q = tape.matmul(x_c, leaf("pcam.W_Q"));
    NodeId kk = tape.matmul(x_d, leaf("pcam.W_K"));
    NodeId scores = tape.group_dot(q, kk, m);
    if (flags_.use_position) scores = tape.elem_add(scores, tables_.gather_rel(tape, rels, m));
    NodeId mu = tape.rowwise_softmax(scores);
    NodeId vmat = tape.matmul(x_d, leaf("pcam.W_V"));
    NodeId v = tape.group_weighted_sum(mu, vmat);

    NodeId interests;
    if (flags_.use_fcfm) {
        NodeId diff = tape.elem_sub(x_c, v);
        NodeId prod = tape.elem_mul(x_c, v);
        NodeId f0 = tape.concat_cols({x_c, v, diff, prod});
        NodeId h0 = tape.relu(tape.add_row_bias(tape.matmul(f0, leaf("fcfm.W0")), leaf("fcfm.b0")));
        interests = tape.relu(tape.add_row_bias(tape.matmul(h0, leaf("fcfm.W1")), leaf("fcfm.b1")));
        interests = tape.elem_add(interests, tape.matmul(x_c, leaf("fcfm.skip")));
        interests = tape.elem_add(interests, tape.matmul(v, leaf("fcfm.skip_v")));
    } else {
        interests = tape.matmul(v, leaf("fcfm.v_proj"));
    }

    NodeId e_t = tape.matmul(tables_.gather_items(tape, targets), leaf("imm.W_T"));
    NodeId imm_scores = tape.group_dot(e_t, interests, n);
    NodeId imm_w = tape.rowwise_softmax(imm_scores);
    NodeId u = tape.group_weighted_sum(imm_w, interests);

    NodeId user_emb = tables_.gather_users(tape, users);
    NodeId mean_w = tape.constant(Tensor::full(batch.size(), n, 1.0 / static_cast<double>(n)));
    NodeId ubar = tape.group_weighted_sum(mean_w, interests);
    NodeId h = tape.concat_cols(
        {u, e_t, tape.elem_mul(u, e_t), ubar, tape.elem_mul(ubar, e_t), user_emb});
    for (std::size_t li = 0; li < dims_.head.size(); ++li) {
        std::string ws = "head.W" + std::to_string(li), bs = "head.b" + std::to_string(li);
        h = tape.relu(tape.add_row_bias(tape.matmul(h, leaf(ws.c_str())), leaf(bs.c_str())));
    }
    NodeId logit = tape.add_row_bias(tape.matmul(h, leaf("head.W_out")), leaf("head.b_out"));
    NodeId p = tape.sigmoid(logit);
    return tape.nll_mean(p, std::move(labels));
}

}  // namespace dcin
