#pragma once

#include <cstdint>
#include <string>

#include "dcin/optimizer.hpp"
#include "dcin/schema.hpp"
#include "dcin/tape.hpp"

namespace dcin {

// Embedding tables registered in a ParameterStore: one per categorical field
// (item_id, category, user_id), an absolute-position table, and the
// one-dimensional relative-position table.
class EmbeddingTables {
public:
    // Registers all tables under `prefix` in `store`, initialized uniform in
    // [-0.05, 0.05] from per-table seeds derived from `seed`.
    EmbeddingTables(ParameterStore& store, const FeatureSchema& schema, std::uint64_t seed,
                    const std::string& prefix = "emb");

    const FeatureSchema& schema() const { return schema_; }

    // item_id embedding ++ category embedding, width 2*embed_dim.
    Tensor embed_item(const ItemRef& item) const;
    // embed_item ++ absolute-position embedding, width 3*embed_dim.
    Tensor build_x(const PositionedItem& pi) const;
    // Scalar lookup at index r + rel_range. |r| > rel_range is a range error.
    double embed_rel_position(long r) const;
    Tensor embed_user(std::size_t user_id) const;

    // Tape-recorded batched lookups.
    NodeId gather_items(GradTape& tape, const std::vector<ItemRef>& items) const;
    NodeId gather_x(GradTape& tape, const std::vector<PositionedItem>& items,
                    bool use_position) const;
    NodeId gather_rel(GradTape& tape, const std::vector<long>& rels,
                      std::size_t group_cols) const;  // -> (n/group_cols) x group_cols
    NodeId gather_users(GradTape& tape, const std::vector<std::size_t>& user_ids) const;

    ParameterStore::Param& item_table() { return store_.at(item_); }
    ParameterStore::Param& category_table() { return store_.at(category_); }
    ParameterStore::Param& user_table() { return store_.at(user_); }
    ParameterStore::Param& abs_pos_table() { return store_.at(abs_pos_); }
    ParameterStore::Param& rel_pos_table() { return store_.at(rel_pos_); }
    const ParameterStore::Param& item_table() const { return store_.at(item_); }
    const ParameterStore::Param& category_table() const { return store_.at(category_); }
    const ParameterStore::Param& user_table() const { return store_.at(user_); }
    const ParameterStore::Param& abs_pos_table() const { return store_.at(abs_pos_); }
    const ParameterStore::Param& rel_pos_table() const { return store_.at(rel_pos_); }

private:
    void check_item(const ItemRef& item) const;
    std::size_t rel_index(long r) const;

    ParameterStore& store_;
    FeatureSchema schema_;
    std::size_t item_, category_, user_, abs_pos_, rel_pos_;
};

// Uniform [-scale, scale] tensor from a dedicated generator.
Tensor uniform_init(std::size_t r, std::size_t c, std::uint64_t seed, double scale);
// Glorot-uniform init for dense layers.
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);
// Cheap stateless seed mixing for deriving per-table/per-shard streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dcin
