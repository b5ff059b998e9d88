#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dcin/embedding.hpp"
#include "dcin/optimizer.hpp"
#include "dcin/schema.hpp"
#include "dcin/tape.hpp"

namespace dcin {

enum class ModelKind { dcin, din, base };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);

// Binary cross-entropy for one prediction, log arguments clamped at 1e-12.
double nll_loss(double p, int label);

// Common surface the trainer and checkpoint code work against.
class Model {
public:
    virtual ~Model() = default;
    virtual ModelKind kind() const = 0;
    virtual AblationFlags flags() const { return {}; }
    virtual const FeatureSchema& schema() const = 0;
    virtual const ModelDims& dims() const = 0;
    virtual ParameterStore& store() = 0;
    virtual const ParameterStore& store() const = 0;
    // Click probability for one session (inference path, no tape).
    virtual double predict(const Session& s) const = 0;
    // Batched training graph; returns the scalar mean-NLL node.
    virtual NodeId build_loss_graph(GradTape& tape, std::span<const Session> batch) const = 0;
};

std::unique_ptr<Model> make_model(ModelKind kind, const FeatureSchema& schema,
                                  const ModelDims& dims, AblationFlags flags, std::uint64_t seed);

// DCIN: position-aware context aggregation over each click's display window,
// feedback-context fusion into per-click interests, and target-conditioned
// interest matching.
class DcinModel : public Model {
public:
    DcinModel(const FeatureSchema& schema, const ModelDims& dims, AblationFlags flags,
              std::uint64_t seed);

    ModelKind kind() const override { return ModelKind::dcin; }
    AblationFlags flags() const override { return flags_; }
    const FeatureSchema& schema() const override { return tables_.schema(); }
    const ModelDims& dims() const override { return dims_; }
    ParameterStore& store() override { return store_; }
    const ParameterStore& store() const override { return store_; }

    // Attention logits alpha over one click's display window.
    Tensor pcam_scores(const ClickContextBlock& block) const;
    // Softmax-weighted aggregation of the window; optionally returns the
    // attention weights mu.
    Tensor pcam_aggregate(const ClickContextBlock& block, Tensor* weights_out = nullptr) const;
    // Fuses a click representation with its aggregated context into one
    // interest vector. With use_fcfm=false this is a learned projection of v.
    Tensor fcfm_fuse(const Tensor& x_click, const Tensor& v) const;
    // Target-independent interests for a behavior sequence, one row per
    // click; optionally exports the per-click PCAM weight rows.
    Tensor compute_interests(std::span<const ClickContextBlock> blocks,
                             Tensor* pcam_weights_out = nullptr) const;
    // Target-conditioned softmax aggregation of interests (one row each).
    static Tensor imm_match(const Tensor& interests, const Tensor& target_emb,
                            Tensor* weights_out = nullptr);
    // Projected target representation e_t.
    Tensor target_embedding(const ItemRef& target) const;
    // IMM + head over already-computed interests; the cached serving path.
    // Scores all targets against one interest matrix in a single head pass.
    std::vector<double> score_from_interests(const Tensor& interests, std::size_t user_id,
                                             std::span<const ItemRef> targets) const;

    double predict(const Session& s) const override;
    NodeId build_loss_graph(GradTape& tape, std::span<const Session> batch) const override;

    const EmbeddingTables& tables() const { return tables_; }
    EmbeddingTables& tables() { return tables_; }
    std::size_t x_dim() const { return tables_.schema().x_dim(flags_.use_position); }

private:
    Tensor x_repr(const PositionedItem& pi) const;  // respects use_position

    ParameterStore store_;
    EmbeddingTables tables_;
    ModelDims dims_;
    AblationFlags flags_;
};

}  // namespace dcin
