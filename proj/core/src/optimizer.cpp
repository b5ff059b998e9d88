#include "dcin/optimizer.hpp"

#include <cmath>

#include "dcin/errors.hpp"

namespace dcin {

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, double lr) {
    if (!params.same_shape(grads))
        throw DimensionError("adam_step: params " + params.shape_str() + " vs grads " +
                             grads.shape_str());
    if (state.m.size() == 0) {
        state.m.shape = params.shape;
        state.m.data.assign(params.size(), 0.0);
        state.v = state.m;
    }
    if (!state.m.same_shape(params))
        throw DimensionError("adam_step: moment " + state.m.shape_str() + " vs params " +
                             params.shape_str());
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads.data[i];
        state.m.data[i] = b1 * state.m.data[i] + (1.0 - b1) * g;
        state.v.data[i] = b2 * state.v.data[i] + (1.0 - b2) * g * g;
        const double mhat = state.m.data[i] / bc1;
        const double vhat = state.v.data[i] / bc2;
        params.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    flops::add(8 * params.size());
}

std::size_t ParameterStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ValidationError("ParameterStore: duplicate parameter " + name);
    Param p;
    p.name = name;
    p.grad.shape = init.shape;
    p.grad.data.assign(init.size(), 0.0);
    p.value = std::move(init);
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return params_.size() - 1;
}

ParameterStore::Param& ParameterStore::named(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("ParameterStore: no parameter named " + name);
    return params_[it->second];
}

const ParameterStore::Param& ParameterStore::named(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("ParameterStore: no parameter named " + name);
    return params_[it->second];
}

void ParameterStore::zero_grad() {
    for (Param& p : params_) p.grad.fill(0.0);
}

void ParameterStore::apply_adam(double lr) {
    for (Param& p : params_) adam_step(p.value, p.grad, p.adam, lr);
}

double ParameterStore::max_abs_grad() const {
    double mx = 0.0;
    for (const Param& p : params_)
        for (double g : p.grad.data) mx = std::max(mx, std::abs(g));
    return mx;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
}

}  // namespace dcin
