#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dcin {

// Vocabulary sizes and embedding geometry shared by all models.
struct FeatureSchema {
    std::size_t item_vocab = 5000;
    std::size_t category_vocab = 50;
    std::size_t user_vocab = 2000;
    std::size_t embed_dim = 16;       // per-field embedding width
    std::size_t pos_dim = 4;          // absolute-position embedding width
    std::size_t max_abs_position = 1023;
    std::size_t rel_range = 20;       // relative positions live in [-rel_range, rel_range]

    std::size_t item_dim() const { return 2 * embed_dim; }              // id ++ category
    std::size_t x_dim(bool use_position) const {
        return item_dim() + (use_position ? pos_dim : 0);
    }
    void validate() const;
};

struct ItemRef {
    std::size_t item_id = 0;
    std::size_t category = 0;
    bool operator==(const ItemRef&) const = default;
};

struct PositionedItem {
    ItemRef item;
    std::size_t abs_position = 0;
    bool operator==(const PositionedItem&) const = default;
};

// One click together with its display window and relative positions
// r[j] = click position - display position.
struct ClickContextBlock {
    PositionedItem click;
    std::vector<PositionedItem> displays;
    std::vector<long> rel_positions;

    static ClickContextBlock make(PositionedItem click, std::vector<PositionedItem> displays);
};

struct Session {
    std::size_t user_id = 0;
    std::vector<ClickContextBlock> blocks;
    ItemRef target;
    int label = 0;
};

// Throws ValidationError naming the violated invariant.
void validate_session(const Session& s, const FeatureSchema& schema, std::size_t n_clicks,
                      std::size_t m_displays);

struct AblationFlags {
    bool use_position = true;
    bool use_fcfm = true;
};

// Layer widths for the DCIN/DIN/base heads. Defaults follow the reference
// configuration (attention width 16, FCFM 64/16, head 1024/512/128).
struct ModelDims {
    std::size_t att_dim = 16;
    std::size_t fcfm_hidden = 64;
    std::size_t interest_dim = 16;
    // desk-scale head; large MLPs only memorize at this dataset size
    std::vector<std::size_t> head = {64, 32};

    static ModelDims tiny();  // scaled-down dims for gradient-check tests
};

}  // namespace dcin
