#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "shapebias/kernels.hpp"
#include "shapebias/tensor.hpp"

namespace shapebias {

// Reverse-mode tape. Records one node per executed primitive in execution
// order (inputs always precede users), so the backward pass is a single
// reverse sweep that visits each node at most once. The tape is rebuilt on
// every forward pass; gradients accumulate by summation across fan-out.
template <typename T>
class TapeT {
  public:
    struct Var {
        int32_t idx = -1;
        bool valid() const { return idx >= 0; }
    };

    using BackpropFn = std::function<void(TapeT&, int32_t)>;

    Var leaf(TensorT<T> value, bool requires_grad = false) {
        return push("leaf", std::move(value), requires_grad, nullptr);
    }

    Var constant(TensorT<T> value) { return leaf(std::move(value), false); }

    // Extension point for new primitives: `backprop` reads grad(self) and
    // accumulates into parents. `requires` must be true iff any parent
    // requires a gradient.
    Var record(const std::string& op, TensorT<T> value, bool requires, BackpropFn backprop) {
        if (!value.all_finite()) {
            throw std::domain_error("autodiff: op '" + op + "' produced non-finite values");
        }
        return push(op, std::move(value), requires, std::move(backprop));
    }

    const TensorT<T>& value(Var v) const { return nodes_[check(v)].value; }
    bool requires_grad(Var v) const { return nodes_[check(v)].requires; }

    // Gradient of the last backward() target w.r.t. v; zeros if v was not
    // reached.
    TensorT<T> grad(Var v) const {
        const Node& n = nodes_[check(v)];
        if (n.grad.empty()) return TensorT<T>(n.value.shape());
        return n.grad;
    }

    void accum_grad(Var v, const TensorT<T>& g) { accum(check(v), g); }

    void backward(Var loss) {
        const size_t li = check(loss);
        if (nodes_[li].value.numel() != 1) {
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        nodes_[li].value.shape_str());
        }
        for (Node& n : nodes_) n.grad = TensorT<T>();
        nodes_[li].grad = TensorT<T>::full(nodes_[li].value.shape(), T(1));
        for (int32_t i = static_cast<int32_t>(li); i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.grad.empty() && n.backprop) n.backprop(*this, i);
        }
    }

    size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        std::string op;
        TensorT<T> value;
        TensorT<T> grad;
        bool requires = false;
        BackpropFn backprop;
    };

    size_t check(Var v) const {
        if (!v.valid() || static_cast<size_t>(v.idx) >= nodes_.size()) {
            throw std::invalid_argument("autodiff: invalid tape handle");
        }
        return static_cast<size_t>(v.idx);
    }

    Var push(const std::string& op, TensorT<T> value, bool requires, BackpropFn backprop) {
        nodes_.push_back(Node{op, std::move(value), TensorT<T>(), requires, std::move(backprop)});
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    void accum(size_t idx, const TensorT<T>& g) {
        Node& n = nodes_[idx];
        if (n.grad.empty()) {
            n.grad = g;
            return;
        }
        for (int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
    }

    friend void accum_raw(TapeT& t, int32_t idx, const TensorT<T>& g) { t.accum(static_cast<size_t>(idx), g); }

    std::vector<Node> nodes_;
};

using Tape = TapeT<double>;
using Var = Tape::Var;

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------
namespace ad {

template <typename T>
using VarOf = typename TapeT<T>::Var;

template <typename T>
VarOf<T> conv2d(TapeT<T>& tape, VarOf<T> x, VarOf<T> w, int64_t stride, int64_t pad) {
    const auto dims = kernels::conv2d_dims(tape.value(x), tape.value(w), stride, pad);
    TensorT<T> y = kernels::conv2d_forward(tape.value(x), tape.value(w), stride, pad);
    const bool req = tape.requires_grad(x) || tape.requires_grad(w);
    return tape.record("conv2d", std::move(y), req, [x, w, dims](TapeT<T>& t, int32_t self) {
        const TensorT<T> go = t.grad({self});
        if (t.requires_grad(x)) t.accum_grad(x, kernels::conv2d_grad_input(go, t.value(w), dims));
        if (t.requires_grad(w)) t.accum_grad(w, kernels::conv2d_grad_kernel(t.value(x), go, dims));
    });
}

template <typename T>
VarOf<T> bias_channels(TapeT<T>& tape, VarOf<T> x, VarOf<T> b) {
    TensorT<T> y = kernels::bias_channels_forward(tape.value(x), tape.value(b));
    const bool req = tape.requires_grad(x) || tape.requires_grad(b);
    return tape.record("bias_channels", std::move(y), req, [x, b](TapeT<T>& t, int32_t self) {
        const TensorT<T> go = t.grad({self});
        if (t.requires_grad(x)) t.accum_grad(x, go);
        if (t.requires_grad(b)) t.accum_grad(b, kernels::bias_channels_grad_bias(go));
    });
}

template <typename T>
VarOf<T> dense(TapeT<T>& tape, VarOf<T> x, VarOf<T> w, VarOf<T> b) {
    TensorT<T> y = kernels::dense_forward(tape.value(x), tape.value(w), tape.value(b));
    const bool req = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b);
    return tape.record("dense", std::move(y), req, [x, w, b](TapeT<T>& t, int32_t self) {
        const TensorT<T> go = t.grad({self});
        if (t.requires_grad(x)) t.accum_grad(x, kernels::dense_grad_x(go, t.value(w)));
        if (t.requires_grad(w)) t.accum_grad(w, kernels::dense_grad_w(t.value(x), go));
        if (t.requires_grad(b)) t.accum_grad(b, kernels::dense_grad_b(go));
    });
}

template <typename T>
VarOf<T> relu(TapeT<T>& tape, VarOf<T> x) {
    TensorT<T> y = kernels::relu_forward(tape.value(x));
    return tape.record("relu", std::move(y), tape.requires_grad(x), [x](TapeT<T>& t, int32_t self) {
        if (t.requires_grad(x)) t.accum_grad(x, kernels::relu_backward(t.value(x), t.grad({self})));
    });
}

template <typename T>
VarOf<T> maxpool2d(TapeT<T>& tape, VarOf<T> x, int64_t window, int64_t stride) {
    const auto dims = kernels::maxpool2d_dims(tape.value(x), window, stride);
    auto argmax = std::make_shared<std::vector<int32_t>>();
    TensorT<T> y = kernels::maxpool2d_forward(tape.value(x), dims, *argmax);
    return tape.record("maxpool2d", std::move(y), tape.requires_grad(x),
                       [x, dims, argmax](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(x)) return;
                           t.accum_grad(x, kernels::maxpool2d_backward(t.grad({self}), dims, *argmax));
                       });
}

template <typename T>
VarOf<T> reshape(TapeT<T>& tape, VarOf<T> x, std::vector<int64_t> shape) {
    const auto orig = tape.value(x).shape();
    TensorT<T> y = tape.value(x).reshaped(std::move(shape));
    return tape.record("reshape", std::move(y), tape.requires_grad(x),
                       [x, orig](TapeT<T>& t, int32_t self) {
                           if (t.requires_grad(x)) t.accum_grad(x, t.grad({self}).reshaped(orig));
                       });
}

// NCHW -> N x (C*H*W)
template <typename T>
VarOf<T> flatten2(TapeT<T>& tape, VarOf<T> x) {
    const auto& s = tape.value(x).shape();
    if (s.size() != 4) throw std::invalid_argument("flatten2: expected rank-4 input");
    return reshape(tape, x, {s[0], s[1] * s[2] * s[3]});
}

template <typename T>
VarOf<T> slice_rows(TapeT<T>& tape, VarOf<T> x, int64_t begin, int64_t end) {
    const TensorT<T>& v = tape.value(x);
    if (v.rank() != 2 || begin < 0 || end > v.dim(0) || begin >= end) {
        throw std::invalid_argument("slice_rows: bad range");
    }
    const int64_t cols = v.dim(1);
    TensorT<T> y({end - begin, cols});
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = v[begin * cols + i];
    return tape.record("slice_rows", std::move(y), tape.requires_grad(x),
                       [x, begin, cols](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(x)) return;
                           const TensorT<T> go = t.grad({self});
                           TensorT<T> gx(t.value(x).shape());
                           for (int64_t i = 0; i < go.numel(); ++i) gx[begin * cols + i] = go[i];
                           t.accum_grad(x, gx);
                       });
}

template <typename T>
VarOf<T> softmax_cross_entropy(TapeT<T>& tape, VarOf<T> logits, std::vector<int32_t> labels) {
    auto probs = std::make_shared<TensorT<T>>();
    const T loss = kernels::softmax_xent_forward(tape.value(logits), labels, *probs);
    auto labels_p = std::make_shared<std::vector<int32_t>>(std::move(labels));
    return tape.record("softmax_cross_entropy", TensorT<T>({1}, {loss}), tape.requires_grad(logits),
                       [logits, probs, labels_p](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(logits)) return;
                           const T g = t.grad({self})[0];
                           t.accum_grad(logits, kernels::softmax_xent_backward(*probs, *labels_p, g));
                       });
}

template <typename T>
VarOf<T> add(TapeT<T>& tape, VarOf<T> a, VarOf<T> b) {
    const TensorT<T>& va = tape.value(a);
    const TensorT<T>& vb = tape.value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
    TensorT<T> y = va;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += vb[i];
    const bool req = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.record("add", std::move(y), req, [a, b](TapeT<T>& t, int32_t self) {
        const TensorT<T> go = t.grad({self});
        if (t.requires_grad(a)) t.accum_grad(a, go);
        if (t.requires_grad(b)) t.accum_grad(b, go);
    });
}

template <typename T>
VarOf<T> sub(TapeT<T>& tape, VarOf<T> a, VarOf<T> b) {
    const TensorT<T>& va = tape.value(a);
    const TensorT<T>& vb = tape.value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape mismatch");
    TensorT<T> y = va;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] -= vb[i];
    const bool req = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.record("sub", std::move(y), req, [a, b](TapeT<T>& t, int32_t self) {
        const TensorT<T> go = t.grad({self});
        if (t.requires_grad(a)) t.accum_grad(a, go);
        if (t.requires_grad(b)) {
            TensorT<T> neg = go;
            for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
            t.accum_grad(b, neg);
        }
    });
}

template <typename T>
VarOf<T> mul(TapeT<T>& tape, VarOf<T> a, VarOf<T> b) {
    const TensorT<T>& va = tape.value(a);
    const TensorT<T>& vb = tape.value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
    TensorT<T> y = va;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= vb[i];
    const bool req = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.record("mul", std::move(y), req, [a, b](TapeT<T>& t, int32_t self) {
        const TensorT<T> go = t.grad({self});
        if (t.requires_grad(a)) {
            TensorT<T> ga = go;
            const TensorT<T>& vb2 = t.value(b);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= vb2[i];
            t.accum_grad(a, ga);
        }
        if (t.requires_grad(b)) {
            TensorT<T> gb = go;
            const TensorT<T>& va2 = t.value(a);
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] *= va2[i];
            t.accum_grad(b, gb);
        }
    });
}

template <typename T>
VarOf<T> scale(TapeT<T>& tape, VarOf<T> x, T s) {
    TensorT<T> y = tape.value(x);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= s;
    return tape.record("scale", std::move(y), tape.requires_grad(x), [x, s](TapeT<T>& t, int32_t self) {
        if (!t.requires_grad(x)) return;
        TensorT<T> gx = t.grad({self});
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] *= s;
        t.accum_grad(x, gx);
    });
}

template <typename T>
VarOf<T> sum(TapeT<T>& tape, VarOf<T> x) {
    T acc = 0;
    const TensorT<T>& v = tape.value(x);
    for (int64_t i = 0; i < v.numel(); ++i) acc += v[i];
    return tape.record("sum", TensorT<T>({1}, {acc}), tape.requires_grad(x),
                       [x](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(x)) return;
                           const T g = t.grad({self})[0];
                           t.accum_grad(x, TensorT<T>::full(t.value(x).shape(), g));
                       });
}

// Euclidean norm; subgradient at the origin is 0.
template <typename T>
VarOf<T> l2norm(TapeT<T>& tape, VarOf<T> x) {
    const TensorT<T>& v = tape.value(x);
    T ss = 0;
    for (int64_t i = 0; i < v.numel(); ++i) ss += v[i] * v[i];
    const T norm = std::sqrt(ss);
    return tape.record("l2norm", TensorT<T>({1}, {norm}), tape.requires_grad(x),
                       [x, norm](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(x) || norm == T(0)) return;
                           const T g = t.grad({self})[0] / norm;
                           TensorT<T> gx = t.value(x);
                           for (int64_t i = 0; i < gx.numel(); ++i) gx[i] *= g;
                           t.accum_grad(x, gx);
                       });
}

// Per-sample per-channel spatial mean, shape NxC (CHW treated as N=1).
template <typename T>
VarOf<T> channel_mean(TapeT<T>& tape, VarOf<T> x) {
    TensorT<T> mean, stdev;
    kernels::channel_stats(tape.value(x), mean, stdev);
    const auto xshape = tape.value(x).shape();
    const int64_t hw = xshape[xshape.size() - 1] * xshape[xshape.size() - 2];
    return tape.record("channel_mean", std::move(mean), tape.requires_grad(x),
                       [x, hw](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(x)) return;
                           const TensorT<T> go = t.grad({self});
                           TensorT<T> gx(t.value(x).shape());
                           for (int64_t nc = 0; nc < go.numel(); ++nc) {
                               const T g = go[nc] / static_cast<T>(hw);
                               for (int64_t k = 0; k < hw; ++k) gx[nc * hw + k] = g;
                           }
                           t.accum_grad(x, gx);
                       });
}

// Per-sample per-channel spatial population std, shape NxC. Gradient of a
// constant channel (std 0) is defined as 0.
template <typename T>
VarOf<T> channel_std(TapeT<T>& tape, VarOf<T> x) {
    auto mean = std::make_shared<TensorT<T>>();
    auto stdev = std::make_shared<TensorT<T>>();
    kernels::channel_stats(tape.value(x), *mean, *stdev);
    const auto xshape = tape.value(x).shape();
    const int64_t hw = xshape[xshape.size() - 1] * xshape[xshape.size() - 2];
    TensorT<T> out = *stdev;
    return tape.record("channel_std", std::move(out), tape.requires_grad(x),
                       [x, mean, stdev, hw](TapeT<T>& t, int32_t self) {
                           if (!t.requires_grad(x)) return;
                           const TensorT<T> go = t.grad({self});
                           const TensorT<T>& v = t.value(x);
                           TensorT<T> gx(v.shape());
                           for (int64_t nc = 0; nc < go.numel(); ++nc) {
                               const T s = (*stdev)[nc];
                               if (s == T(0)) continue;
                               const T g = go[nc] / (static_cast<T>(hw) * s);
                               const T mu = (*mean)[nc];
                               for (int64_t k = 0; k < hw; ++k) {
                                   gx[nc * hw + k] = g * (v[nc * hw + k] - mu);
                               }
                           }
                           t.accum_grad(x, gx);
                       });
}

} // namespace ad

} // namespace shapebias
