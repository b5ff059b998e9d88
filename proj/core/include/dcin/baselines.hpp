#pragma once

#include "dcin/model.hpp"

namespace dcin {

// DIN baseline: target attention over projected click representations only;
// display windows are never consumed.
class DinModel : public Model {
public:
    DinModel(const FeatureSchema& schema, const ModelDims& dims, std::uint64_t seed);

    ModelKind kind() const override { return ModelKind::din; }
    const FeatureSchema& schema() const override { return tables_.schema(); }
    const ModelDims& dims() const override { return dims_; }
    ParameterStore& store() override { return store_; }
    const ParameterStore& store() const override { return store_; }

    // Per-click representation fed to the attention, one row per click.
    Tensor click_interests(std::span<const ClickContextBlock> blocks) const;
    double predict(const Session& s) const override;
    // Attention weights over clicks for a given target (case-study export).
    Tensor attention_weights(const Session& s) const;
    NodeId build_loss_graph(GradTape& tape, std::span<const Session> batch) const override;

    const EmbeddingTables& tables() const { return tables_; }

private:
    ParameterStore store_;
    EmbeddingTables tables_;
    ModelDims dims_;
};

// Deep base model: mean-pooled click embeddings, no attention. RelaImpr
// denominator.
class BaseModel : public Model {
public:
    BaseModel(const FeatureSchema& schema, const ModelDims& dims, std::uint64_t seed);

    ModelKind kind() const override { return ModelKind::base; }
    const FeatureSchema& schema() const override { return tables_.schema(); }
    const ModelDims& dims() const override { return dims_; }
    ParameterStore& store() override { return store_; }
    const ParameterStore& store() const override { return store_; }

    double predict(const Session& s) const override;
    NodeId build_loss_graph(GradTape& tape, std::span<const Session> batch) const override;

private:
    ParameterStore store_;
    EmbeddingTables tables_;
    ModelDims dims_;
};

}  // namespace dcin
