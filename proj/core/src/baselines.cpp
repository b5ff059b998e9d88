#include "dcin/baselines.hpp"

#include "dcin/errors.hpp"

namespace dcin {

namespace {

void add_head(ParameterStore& store, std::size_t in, const ModelDims& dims, std::uint64_t seed) {
    for (std::size_t li = 0; li < dims.head.size(); ++li) {
        store.add("head.W" + std::to_string(li), glorot_init(in, dims.head[li], mix_seed(seed, 20 + 2 * li)));
        store.add("head.b" + std::to_string(li), Tensor::zeros(dims.head[li]));
        in = dims.head[li];
    }
    store.add("head.W_out", glorot_init(in, 1, mix_seed(seed, 90)));
    store.add("head.b_out", Tensor::zeros(1));
}

double head_forward(const ParameterStore& store, const ModelDims& dims, Tensor h) {
    for (std::size_t li = 0; li < dims.head.size(); ++li) {
        h = relu(add_row_bias(matmul(h, store.named("head.W" + std::to_string(li)).value),
                              store.named("head.b" + std::to_string(li)).value));
    }
    Tensor logit = add_row_bias(matmul(h, store.named("head.W_out").value),
                                store.named("head.b_out").value);
    return sigmoid(logit).data[0];
}

NodeId head_graph(GradTape& tape, ParameterStore& store, const ModelDims& dims, NodeId h) {
    auto leaf = [&](const std::string& name) {
        auto& p = store.named(name);
        return tape.leaf(p.value, &p.grad);
    };
    for (std::size_t li = 0; li < dims.head.size(); ++li) {
        h = tape.relu(tape.add_row_bias(tape.matmul(h, leaf("head.W" + std::to_string(li))),
                                        leaf("head.b" + std::to_string(li))));
    }
    NodeId logit = tape.add_row_bias(tape.matmul(h, leaf("head.W_out")), leaf("head.b_out"));
    return tape.sigmoid(logit);
}

struct BatchView {
    std::vector<PositionedItem> clicks;
    std::vector<ItemRef> click_items;
    std::vector<ItemRef> targets;
    std::vector<std::size_t> users;
    std::vector<double> labels;
    std::size_t n = 0;
};

BatchView flatten(std::span<const Session> batch) {
    if (batch.empty()) throw ContractViolation("build_loss_graph: empty batch");
    BatchView v;
    v.n = batch[0].blocks.size();
    for (const Session& s : batch) {
        if (s.blocks.size() != v.n)
            throw ValidationError("build_loss_graph: ragged batch (block counts differ)");
        for (const ClickContextBlock& b : s.blocks) {
            v.clicks.push_back(b.click);
            v.click_items.push_back(b.click.item);
        }
        v.targets.push_back(s.target);
        v.users.push_back(s.user_id);
        v.labels.push_back(static_cast<double>(s.label));
    }
    return v;
}

}  // namespace

DinModel::DinModel(const FeatureSchema& schema, const ModelDims& dims, std::uint64_t seed)
    : tables_(store_, schema, mix_seed(seed, 100)), dims_(dims) {
    // behavior-sequence baseline: click items only, no display context and no
    // position features.
    // proj and W_T share their random init over the item++category rows, so
    // e_t . I_i starts out proportional to x_t . x_c and the attention can
    // recognize repeated items/categories before any training.
    Tensor proj = glorot_init(schema.x_dim(false), dims.interest_dim, mix_seed(seed, 10));
    Tensor w_t = Tensor::zeros(schema.item_dim(), dims.interest_dim);
    std::copy(proj.data.begin(), proj.data.begin() + w_t.size(), w_t.data.begin());
    store_.add("din.proj", std::move(proj));
    store_.add("imm.W_T", std::move(w_t));
    add_head(store_, 3 * dims.interest_dim + schema.embed_dim, dims, seed);
}

Tensor DinModel::click_interests(std::span<const ClickContextBlock> blocks) const {
    if (blocks.empty()) throw ContractViolation("click_interests: no behavior blocks");
    Tensor out = Tensor::zeros(blocks.size(), dims_.interest_dim);
    const Tensor& proj = store_.named("din.proj").value;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        Tensor x = tables_.embed_item(blocks[i].click.item);
        Tensor j = matmul(x, proj);
        for (std::size_t t = 0; t < j.size(); ++t) out.at(i, t) = j.data[t];
    }
    return out;
}

double DinModel::predict(const Session& s) const {
    if (s.blocks.empty()) throw ValidationError("predict: session has no behavior blocks");
    Tensor interests = click_interests(s.blocks);
    Tensor et = matmul(tables_.embed_item(s.target), store_.named("imm.W_T").value);
    Tensor u = DcinModel::imm_match(interests, et);
    Tensor user = tables_.embed_user(s.user_id);
    Tensor uet = elem_mul(u, et);
    Tensor h = concat_cols({&u, &et, &uet, &user});
    return head_forward(store_, dims_, h);
}

Tensor DinModel::attention_weights(const Session& s) const {
    Tensor interests = click_interests(s.blocks);
    Tensor et = matmul(tables_.embed_item(s.target), store_.named("imm.W_T").value);
    Tensor w;
    DcinModel::imm_match(interests, et, &w);
    return w;
}

NodeId DinModel::build_loss_graph(GradTape& tape, std::span<const Session> batch) const {
    BatchView bv = flatten(batch);
    auto& st = const_cast<ParameterStore&>(store_);
    auto leaf = [&](const std::string& name) {
        auto& p = st.named(name);
        return tape.leaf(p.value, &p.grad);
    };
    NodeId x_c = tables_.gather_x(tape, bv.clicks, false);
    NodeId interests = tape.matmul(x_c, leaf("din.proj"));
    NodeId e_t = tape.matmul(tables_.gather_items(tape, bv.targets), leaf("imm.W_T"));
    NodeId w = tape.rowwise_softmax(tape.group_dot(e_t, interests, bv.n));
    NodeId u = tape.group_weighted_sum(w, interests);
    NodeId user_emb = tables_.gather_users(tape, bv.users);
    NodeId p = head_graph(tape, st, dims_, tape.concat_cols({u, e_t, tape.elem_mul(u, e_t), user_emb}));
    return tape.nll_mean(p, std::move(bv.labels));
}

BaseModel::BaseModel(const FeatureSchema& schema, const ModelDims& dims, std::uint64_t seed)
    : tables_(store_, schema, mix_seed(seed, 100)), dims_(dims) {
    add_head(store_, 2 * schema.item_dim() + schema.embed_dim, dims, seed);
}

double BaseModel::predict(const Session& s) const {
    if (s.blocks.empty()) throw ValidationError("predict: session has no behavior blocks");
    Tensor pooled = Tensor::zeros(tables_.schema().item_dim());
    for (const ClickContextBlock& b : s.blocks) {
        Tensor e = tables_.embed_item(b.click.item);
        for (std::size_t t = 0; t < e.size(); ++t) pooled.data[t] += e.data[t];
    }
    for (double& v : pooled.data) v /= static_cast<double>(s.blocks.size());
    Tensor et = tables_.embed_item(s.target);
    Tensor user = tables_.embed_user(s.user_id);
    Tensor h = concat_cols({&pooled, &et, &user});
    return head_forward(store_, dims_, h);
}

NodeId BaseModel::build_loss_graph(GradTape& tape, std::span<const Session> batch) const {
    BatchView bv = flatten(batch);
    auto& st = const_cast<ParameterStore&>(store_);
    NodeId clicks = tables_.gather_items(tape, bv.click_items);  // (B*N) x item_dim
    NodeId mean_w = tape.constant(
        Tensor::full(batch.size(), bv.n, 1.0 / static_cast<double>(bv.n)));
    NodeId pooled = tape.group_weighted_sum(mean_w, clicks);
    NodeId e_t = tables_.gather_items(tape, bv.targets);
    NodeId user_emb = tables_.gather_users(tape, bv.users);
    NodeId p = head_graph(tape, st, dims_, tape.concat_cols({pooled, e_t, user_emb}));
    return tape.nll_mean(p, std::move(bv.labels));
}

}  // namespace dcin
