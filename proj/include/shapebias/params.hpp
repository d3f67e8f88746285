#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "shapebias/rng.hpp"
#include "shapebias/tensor.hpp"

namespace shapebias {

// Parameter groups: convolutional feature extractor, classification head,
// jigsaw head.
enum class ParamGroup : uint8_t { feature = 0, classifier = 1, jigsaw = 2 };

struct Parameter {
    std::string name;
    ParamGroup group;
    Tensor value;
    Tensor grad;          // same shape as value
    bool grad_set = false; // populated since the last optimizer step
};

class ParamSet {
  public:
    Parameter& add(const std::string& name, ParamGroup group, Tensor init) {
        if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
        index_[name] = params_.size();
        Tensor grad(init.shape());
        params_.push_back(Parameter{name, group, std::move(init), std::move(grad), false});
        return params_.back();
    }

    Parameter& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamSet: unknown name " + name);
        return params_[it->second];
    }
    const Parameter& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamSet: unknown name " + name);
        return params_[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    size_t size() const { return params_.size(); }

    void set_grad(const std::string& name, Tensor g) {
        Parameter& p = at(name);
        if (!g.same_shape(p.value)) {
            throw std::invalid_argument("ParamSet: gradient shape mismatch for " + name);
        }
        p.grad = std::move(g);
        p.grad_set = true;
    }

    void zero_grads() {
        for (Parameter& p : params_) {
            p.grad = Tensor(p.value.shape());
            p.grad_set = false;
        }
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const Parameter& p : params_) n += p.value.numel();
        return n;
    }

  private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, size_t> index_;
};

// Fan-in-scaled uniform init, bound sqrt(6 / fan_in).
inline Tensor init_uniform(std::vector<int64_t> shape, int64_t fan_in, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -bound, bound);
}

// SGD with momentum and L2 weight decay:
//   v <- momentum * v + grad + wd * param
//   param <- param - lr * v
struct OptState {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 5e-5;
    std::unordered_map<std::string, Tensor> velocity;

    void validate() const {
        if (lr < 0 || momentum < 0 || weight_decay < 0) {
            throw std::invalid_argument("OptState: hyperparameters must be non-negative");
        }
    }
};

inline void sgd_step(ParamSet& params, OptState& state) {
    state.validate();
    for (Parameter& p : params.all()) {
        if (!p.grad_set) {
            throw std::runtime_error("sgd_step: missing gradient for parameter " + p.name);
        }
        auto [it, inserted] = state.velocity.try_emplace(p.name, Tensor(p.value.shape()));
        Tensor& v = it->second;
        if (!v.same_shape(p.value)) {
            throw std::runtime_error("sgd_step: velocity shape mismatch for " + p.name);
        }
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            v[i] = state.momentum * v[i] + p.grad[i] + state.weight_decay * p.value[i];
            p.value[i] -= state.lr * v[i];
        }
    }
    params.zero_grads();
}

} // namespace shapebias
