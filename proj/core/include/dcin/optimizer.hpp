#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcin/tensor.hpp"

namespace dcin {

struct AdamState {
    Tensor m;  // first moment, same shape as the parameter
    Tensor v;  // second moment
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update. Increments state.step.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state, double lr);

// Named parameter collection: value, gradient accumulator and Adam state per
// tensor, with a stable registration order so updates and checkpoints are
// deterministic.
class ParameterStore {
public:
    struct Param {
        std::string name;
        Tensor value;
        Tensor grad;
        AdamState adam;
    };

    // Registers a parameter and returns a stable handle to it.
    std::size_t add(const std::string& name, Tensor init);
    Param& at(std::size_t idx) { return params_[idx]; }
    const Param& at(std::size_t idx) const { return params_[idx]; }
    Param& named(const std::string& name);
    const Param& named(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t count() const { return params_.size(); }
    void zero_grad();
    void apply_adam(double lr);
    double max_abs_grad() const;
    std::size_t scalar_count() const;

    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }

private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace dcin
