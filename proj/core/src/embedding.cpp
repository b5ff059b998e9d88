#include "dcin/embedding.hpp"

#include <cmath>
#include <random>

#include "dcin/errors.hpp"

namespace dcin {

void FeatureSchema::validate() const {
    if (item_vocab < 1 || category_vocab < 1 || user_vocab < 1)
        throw ValidationError("FeatureSchema: vocabulary sizes must be >= 1");
    if (embed_dim < 1) throw ValidationError("FeatureSchema: embed_dim must be >= 1");
    if (pos_dim < 1) throw ValidationError("FeatureSchema: pos_dim must be >= 1");
}

ClickContextBlock ClickContextBlock::make(PositionedItem click,
                                          std::vector<PositionedItem> displays) {
    ClickContextBlock b;
    b.click = click;
    b.rel_positions.reserve(displays.size());
    for (const PositionedItem& d : displays)
        b.rel_positions.push_back(static_cast<long>(click.abs_position) -
                                  static_cast<long>(d.abs_position));
    b.displays = std::move(displays);
    return b;
}

void validate_session(const Session& s, const FeatureSchema& schema, std::size_t n_clicks,
                      std::size_t m_displays) {
    if (s.blocks.size() != n_clicks)
        throw ValidationError("session " + std::to_string(s.user_id) + ": expected " +
                              std::to_string(n_clicks) + " blocks, got " +
                              std::to_string(s.blocks.size()));
    if (s.user_id >= schema.user_vocab)
        throw ValidationError("session: user_id " + std::to_string(s.user_id) + " out of vocab");
    auto check_item = [&](const ItemRef& it, const char* what) {
        if (it.item_id >= schema.item_vocab || it.category >= schema.category_vocab)
            throw ValidationError(std::string("session: ") + what + " item (" +
                                  std::to_string(it.item_id) + "," + std::to_string(it.category) +
                                  ") out of vocab");
    };
    check_item(s.target, "target");
    if (s.label != 0 && s.label != 1)
        throw ValidationError("session: label " + std::to_string(s.label) + " is not 0/1");
    for (const ClickContextBlock& b : s.blocks) {
        if (b.displays.size() != m_displays || b.rel_positions.size() != m_displays)
            throw ValidationError("session: block has " + std::to_string(b.displays.size()) +
                                  " displays, expected " + std::to_string(m_displays));
        check_item(b.click.item, "click");
        if (b.click.abs_position > schema.max_abs_position)
            throw ValidationError("session: abs_position " +
                                  std::to_string(b.click.abs_position) + " exceeds max " +
                                  std::to_string(schema.max_abs_position));
        for (std::size_t j = 0; j < m_displays; ++j) {
            check_item(b.displays[j].item, "display");
            const long r = static_cast<long>(b.click.abs_position) -
                           static_cast<long>(b.displays[j].abs_position);
            if (b.rel_positions[j] != r)
                throw ValidationError("session: rel_position[" + std::to_string(j) +
                                      "] != click_pos - display_pos");
            if (std::abs(r) > static_cast<long>(schema.rel_range))
                throw ValidationError("session: |rel_position| " + std::to_string(std::abs(r)) +
                                      " exceeds range " + std::to_string(schema.rel_range));
        }
    }
}

ModelDims ModelDims::tiny() {
    ModelDims d;
    d.att_dim = 4;
    d.fcfm_hidden = 6;
    d.interest_dim = 4;
    d.head = {8, 5};
    return d;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor uniform_init(std::size_t r, std::size_t c, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    Tensor t = Tensor::zeros(r, c);
    for (double& v : t.data) v = dist(rng);
    return t;
}

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    const double scale = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_init(fan_in, fan_out, seed, scale);
}

EmbeddingTables::EmbeddingTables(ParameterStore& store, const FeatureSchema& schema,
                                 std::uint64_t seed, const std::string& prefix)
    : store_(store), schema_(schema) {
    schema_.validate();
    const double s = 0.05;
    const std::size_t d = schema.embed_dim;
    item_ = store_.add(prefix + ".item",
                       uniform_init(schema.item_vocab, d, mix_seed(seed, 1), s));
    category_ = store_.add(prefix + ".category",
                           uniform_init(schema.category_vocab, d, mix_seed(seed, 2), s));
    // Zero-init so users never seen in training contribute a neutral vector
    // instead of arbitrary noise.
    user_ = store_.add(prefix + ".user", Tensor::zeros(schema.user_vocab, d));
    // Positional tables start at zero: they act like biases, contributing
    // nothing until training finds a positional effect worth encoding.
    abs_pos_ = store_.add(prefix + ".abs_pos",
                          Tensor::zeros(schema.max_abs_position + 1, schema.pos_dim));
    rel_pos_ = store_.add(prefix + ".rel_pos", Tensor::zeros(2 * schema.rel_range + 1, 1));
}

void EmbeddingTables::check_item(const ItemRef& item) const {
    if (item.item_id >= schema_.item_vocab)
        throw IndexLookupError("embed_item: item_id " + std::to_string(item.item_id) +
                               " out of vocabulary " + std::to_string(schema_.item_vocab));
    if (item.category >= schema_.category_vocab)
        throw IndexLookupError("embed_item: category " + std::to_string(item.category) +
                               " out of vocabulary " + std::to_string(schema_.category_vocab));
}

Tensor EmbeddingTables::embed_item(const ItemRef& item) const {
    check_item(item);
    const std::size_t d = schema_.embed_dim;
    Tensor out = Tensor::zeros(2 * d);
    const Tensor& ti = item_table().value;
    const Tensor& tc = category_table().value;
    std::copy(ti.data.begin() + item.item_id * d, ti.data.begin() + (item.item_id + 1) * d,
              out.data.begin());
    std::copy(tc.data.begin() + item.category * d, tc.data.begin() + (item.category + 1) * d,
              out.data.begin() + d);
    return out;
}

Tensor EmbeddingTables::build_x(const PositionedItem& pi) const {
    if (pi.abs_position > schema_.max_abs_position)
        throw IndexLookupError("build_x: abs_position " + std::to_string(pi.abs_position) +
                               " exceeds max " + std::to_string(schema_.max_abs_position));
    Tensor item = embed_item(pi.item);
    const std::size_t dp = schema_.pos_dim;
    Tensor out = Tensor::zeros(schema_.x_dim(true));
    std::copy(item.data.begin(), item.data.end(), out.data.begin());
    const Tensor& tp = abs_pos_table().value;
    std::copy(tp.data.begin() + pi.abs_position * dp, tp.data.begin() + (pi.abs_position + 1) * dp,
              out.data.begin() + item.size());
    return out;
}

std::size_t EmbeddingTables::rel_index(long r) const {
    const long range = static_cast<long>(schema_.rel_range);
    if (r < -range || r > range)
        throw IndexLookupError("embed_rel_position: r=" + std::to_string(r) +
                               " outside [-" + std::to_string(range) + "," +
                               std::to_string(range) + "]");
    return static_cast<std::size_t>(r + range);
}

double EmbeddingTables::embed_rel_position(long r) const {
    return rel_pos_table().value.data[rel_index(r)];
}

Tensor EmbeddingTables::embed_user(std::size_t user_id) const {
    if (user_id >= schema_.user_vocab)
        throw IndexLookupError("embed_user: user_id " + std::to_string(user_id) +
                               " out of vocabulary " + std::to_string(schema_.user_vocab));
    const std::size_t d = schema_.embed_dim;
    Tensor out = Tensor::zeros(d);
    const Tensor& tu = user_table().value;
    std::copy(tu.data.begin() + user_id * d, tu.data.begin() + (user_id + 1) * d,
              out.data.begin());
    return out;
}

NodeId EmbeddingTables::gather_items(GradTape& tape, const std::vector<ItemRef>& items) const {
    std::vector<std::size_t> ids, cats;
    ids.reserve(items.size());
    cats.reserve(items.size());
    for (const ItemRef& it : items) {
        check_item(it);
        ids.push_back(it.item_id);
        cats.push_back(it.category);
    }
    auto& self = const_cast<EmbeddingTables&>(*this);
    NodeId t_item = tape.leaf(self.item_table().value, &self.item_table().grad);
    NodeId t_cat = tape.leaf(self.category_table().value, &self.category_table().grad);
    NodeId a = tape.gather_rows(t_item, std::move(ids));
    NodeId b = tape.gather_rows(t_cat, std::move(cats));
    return tape.concat_cols({a, b});
}

NodeId EmbeddingTables::gather_x(GradTape& tape, const std::vector<PositionedItem>& items,
                                 bool use_position) const {
    std::vector<ItemRef> refs;
    refs.reserve(items.size());
    for (const PositionedItem& pi : items) refs.push_back(pi.item);
    NodeId e = gather_items(tape, refs);
    if (!use_position) return e;
    std::vector<std::size_t> pos;
    pos.reserve(items.size());
    for (const PositionedItem& pi : items) {
        if (pi.abs_position > schema_.max_abs_position)
            throw IndexLookupError("gather_x: abs_position " + std::to_string(pi.abs_position) +
                                   " exceeds max " + std::to_string(schema_.max_abs_position));
        pos.push_back(pi.abs_position);
    }
    auto& self = const_cast<EmbeddingTables&>(*this);
    NodeId t_pos = tape.leaf(self.abs_pos_table().value, &self.abs_pos_table().grad);
    NodeId p = tape.gather_rows(t_pos, std::move(pos));
    return tape.concat_cols({e, p});
}

NodeId EmbeddingTables::gather_rel(GradTape& tape, const std::vector<long>& rels,
                                   std::size_t group_cols) const {
    std::vector<std::size_t> idx;
    idx.reserve(rels.size());
    for (long r : rels) idx.push_back(rel_index(r));
    auto& self = const_cast<EmbeddingTables&>(*this);
    NodeId t_rel = tape.leaf(self.rel_pos_table().value, &self.rel_pos_table().grad);
    NodeId g = tape.gather_rows(t_rel, std::move(idx));  // n x 1
    return tape.reshape(g, {rels.size() / group_cols, group_cols});
}

NodeId EmbeddingTables::gather_users(GradTape& tape,
                                     const std::vector<std::size_t>& user_ids) const {
    for (std::size_t u : user_ids)
        if (u >= schema_.user_vocab)
            throw IndexLookupError("gather_users: user_id " + std::to_string(u) +
                                   " out of vocabulary");
    auto& self = const_cast<EmbeddingTables&>(*this);
    NodeId t_user = tape.leaf(self.user_table().value, &self.user_table().grad);
    return tape.gather_rows(t_user, user_ids);
}

}  // namespace dcin
