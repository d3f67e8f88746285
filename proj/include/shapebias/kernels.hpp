#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shapebias/tensor.hpp"

// Dense numeric kernels, NCHW layout.
//
// Parallelization contract: every `omp parallel for` iterates over disjoint
// output slots, and the accumulation order inside one output element never
// depends on the thread count. Results are therefore bit-identical for any
// number of threads, which is what the reproducibility guarantees lean on.
//
// kernels::ref holds plain serial loop-nest versions of the same math. They
// are the comparison baseline for the unit tests and the bench tool.

namespace shapebias::kernels {

struct Conv2dDims {
    int64_t n, cin, h, w;       // input
    int64_t cout, kh, kw;       // kernel (OIHW)
    int64_t stride, pad;
    int64_t oh, ow;             // output spatial
};

template <typename T>
Conv2dDims conv2d_dims(const TensorT<T>& input, const TensorT<T>& kernel, int64_t stride,
                       int64_t pad) {
    if (input.rank() != 4 || kernel.rank() != 4) {
        throw std::invalid_argument("conv2d: expected NCHW input and OIHW kernel, got " +
                                    input.shape_str() + " and " + kernel.shape_str());
    }
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
    Conv2dDims d{};
    d.n = input.dim(0);
    d.cin = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.cout = kernel.dim(0);
    d.kh = kernel.dim(2);
    d.kw = kernel.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (kernel.dim(1) != d.cin) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(d.cin) +
                                    " channels but kernel expects " +
                                    std::to_string(kernel.dim(1)));
    }
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw || d.oh < 1 || d.ow < 1) {
        throw std::invalid_argument("conv2d: kernel " + kernel.shape_str() +
                                    " does not fit input " + input.shape_str());
    }
    return d;
}

namespace detail {

// Valid output range [lo, hi) so that iw = ow*stride + kw - pad stays in [0, w).
inline void valid_out_range(int64_t k, int64_t pad, int64_t stride, int64_t in_dim,
                            int64_t out_dim, int64_t& lo, int64_t& hi) {
    int64_t shift = k - pad;
    lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    int64_t last = in_dim - 1 - shift;
    hi = last < 0 ? 0 : std::min(out_dim, last / stride + 1);
    if (lo > hi) lo = hi;
}

} // namespace detail

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& kernel, int64_t stride,
                          int64_t pad) {
    const Conv2dDims d = conv2d_dims(input, kernel, stride, pad);
    TensorT<T> out({d.n, d.cout, d.oh, d.ow});
    const T* in = input.raw();
    const T* kw_ = kernel.raw();
    T* o = out.raw();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t oc = 0; oc < d.cout; ++oc) {
            T* oplane = o + (n * d.cout + oc) * d.oh * d.ow;
            for (int64_t ic = 0; ic < d.cin; ++ic) {
                const T* iplane = in + (n * d.cin + ic) * d.h * d.w;
                const T* kplane = kw_ + (oc * d.cin + ic) * d.kh * d.kw;
                for (int64_t kh = 0; kh < d.kh; ++kh) {
                    int64_t oh_lo, oh_hi;
                    detail::valid_out_range(kh, d.pad, d.stride, d.h, d.oh, oh_lo, oh_hi);
                    for (int64_t kw = 0; kw < d.kw; ++kw) {
                        const T wv = kplane[kh * d.kw + kw];
                        int64_t ow_lo, ow_hi;
                        detail::valid_out_range(kw, d.pad, d.stride, d.w, d.ow, ow_lo, ow_hi);
                        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const int64_t ih = oh * d.stride + kh - d.pad;
                            const T* irow = iplane + ih * d.w + kw - d.pad;
                            T* orow = oplane + oh * d.ow;
                            if (d.stride == 1) {
                                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    orow[ow] += wv * irow[ow];
                                }
                            } else {
                                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    orow[ow] += wv * irow[ow * d.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> conv2d_grad_input(const TensorT<T>& grad_out, const TensorT<T>& kernel,
                             const Conv2dDims& d) {
    TensorT<T> grad_in({d.n, d.cin, d.h, d.w});
    const T* go = grad_out.raw();
    const T* kw_ = kernel.raw();
    T* gi = grad_in.raw();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t ic = 0; ic < d.cin; ++ic) {
            T* giplane = gi + (n * d.cin + ic) * d.h * d.w;
            for (int64_t oc = 0; oc < d.cout; ++oc) {
                const T* goplane = go + (n * d.cout + oc) * d.oh * d.ow;
                const T* kplane = kw_ + (oc * d.cin + ic) * d.kh * d.kw;
                for (int64_t kh = 0; kh < d.kh; ++kh) {
                    int64_t oh_lo, oh_hi;
                    detail::valid_out_range(kh, d.pad, d.stride, d.h, d.oh, oh_lo, oh_hi);
                    for (int64_t kw = 0; kw < d.kw; ++kw) {
                        const T wv = kplane[kh * d.kw + kw];
                        int64_t ow_lo, ow_hi;
                        detail::valid_out_range(kw, d.pad, d.stride, d.w, d.ow, ow_lo, ow_hi);
                        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const int64_t ih = oh * d.stride + kh - d.pad;
                            T* girow = giplane + ih * d.w + kw - d.pad;
                            const T* gorow = goplane + oh * d.ow;
                            if (d.stride == 1) {
                                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    girow[ow] += wv * gorow[ow];
                                }
                            } else {
                                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    girow[ow * d.stride] += wv * gorow[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

template <typename T>
TensorT<T> conv2d_grad_kernel(const TensorT<T>& input, const TensorT<T>& grad_out,
                              const Conv2dDims& d) {
    TensorT<T> grad_k({d.cout, d.cin, d.kh, d.kw});
    const T* in = input.raw();
    const T* go = grad_out.raw();
    T* gk = grad_k.raw();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t oc = 0; oc < d.cout; ++oc) {
        for (int64_t ic = 0; ic < d.cin; ++ic) {
            for (int64_t kh = 0; kh < d.kh; ++kh) {
                int64_t oh_lo, oh_hi;
                detail::valid_out_range(kh, d.pad, d.stride, d.h, d.oh, oh_lo, oh_hi);
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                    int64_t ow_lo, ow_hi;
                    detail::valid_out_range(kw, d.pad, d.stride, d.w, d.ow, ow_lo, ow_hi);
                    T acc = 0;
                    for (int64_t n = 0; n < d.n; ++n) {
                        const T* iplane = in + (n * d.cin + ic) * d.h * d.w;
                        const T* goplane = go + (n * d.cout + oc) * d.oh * d.ow;
                        for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const int64_t ih = oh * d.stride + kh - d.pad;
                            const T* irow = iplane + ih * d.w + kw - d.pad;
                            const T* gorow = goplane + oh * d.ow;
                            if (d.stride == 1) {
                                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    acc += irow[ow] * gorow[ow];
                                }
                            } else {
                                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    acc += irow[ow * d.stride] * gorow[ow];
                                }
                            }
                        }
                    }
                    gk[((oc * d.cin + ic) * d.kh + kh) * d.kw + kw] = acc;
                }
            }
        }
    }
    return grad_k;
}

// out[n,c,h,w] = in[n,c,h,w] + bias[c]
template <typename T>
TensorT<T> bias_channels_forward(const TensorT<T>& input, const TensorT<T>& bias) {
    if (input.rank() != 4 || bias.rank() != 1 || bias.dim(0) != input.dim(1)) {
        throw std::invalid_argument("bias_channels: bias " + bias.shape_str() +
                                    " does not match input " + input.shape_str());
    }
    TensorT<T> out = input;
    const int64_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    T* o = out.raw();
    const T* b = bias.raw();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            T* row = o + (i * c + j) * hw;
            const T bv = b[j];
            for (int64_t k = 0; k < hw; ++k) row[k] += bv;
        }
    }
    return out;
}

template <typename T>
TensorT<T> bias_channels_grad_bias(const TensorT<T>& grad_out) {
    const int64_t n = grad_out.dim(0), c = grad_out.dim(1);
    const int64_t hw = grad_out.dim(2) * grad_out.dim(3);
    TensorT<T> gb({c});
    const T* g = grad_out.raw();
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < c; ++j) {
        T acc = 0;
        for (int64_t i = 0; i < n; ++i) {
            const T* row = g + (i * c + j) * hw;
            for (int64_t k = 0; k < hw; ++k) acc += row[k];
        }
        gb[j] = acc;
    }
    return gb;
}

// y = x * w + b, x: NxD, w: DxM, b: M
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
        throw std::invalid_argument("dense: expected x NxD, w DxM, b M");
    }
    if (x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0)) {
        throw std::invalid_argument("dense: inner dimensions disagree: x " + x.shape_str() +
                                    ", w " + w.shape_str() + ", b " + b.shape_str());
    }
    const int64_t n = x.dim(0), dD = x.dim(1), m = w.dim(1);
    TensorT<T> y({n, m});
    const T* xp = x.raw();
    const T* wp = w.raw();
    const T* bp = b.raw();
    T* yp = y.raw();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        T* yrow = yp + i * m;
        for (int64_t j = 0; j < m; ++j) yrow[j] = bp[j];
        const T* xrow = xp + i * dD;
        for (int64_t k = 0; k < dD; ++k) {
            const T xv = xrow[k];
            const T* wrow = wp + k * m;
            for (int64_t j = 0; j < m; ++j) yrow[j] += xv * wrow[j];
        }
    }
    return y;
}

template <typename T>
TensorT<T> dense_grad_x(const TensorT<T>& grad_y, const TensorT<T>& w) {
    const int64_t n = grad_y.dim(0), m = grad_y.dim(1), dD = w.dim(0);
    TensorT<T> gx({n, dD});
    const T* gy = grad_y.raw();
    const T* wp = w.raw();
    T* gxp = gx.raw();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const T* gyrow = gy + i * m;
        T* gxrow = gxp + i * dD;
        for (int64_t k = 0; k < dD; ++k) {
            const T* wrow = wp + k * m;
            T acc = 0;
            for (int64_t j = 0; j < m; ++j) acc += gyrow[j] * wrow[j];
            gxrow[k] = acc;
        }
    }
    return gx;
}

template <typename T>
TensorT<T> dense_grad_w(const TensorT<T>& x, const TensorT<T>& grad_y) {
    const int64_t n = x.dim(0), dD = x.dim(1), m = grad_y.dim(1);
    TensorT<T> gw({dD, m});
    const T* xp = x.raw();
    const T* gy = grad_y.raw();
    T* gwp = gw.raw();
#pragma omp parallel for schedule(static)
    for (int64_t k = 0; k < dD; ++k) {
        T* gwrow = gwp + k * m;
        for (int64_t i = 0; i < n; ++i) {
            const T xv = xp[i * dD + k];
            const T* gyrow = gy + i * m;
            for (int64_t j = 0; j < m; ++j) gwrow[j] += xv * gyrow[j];
        }
    }
    return gw;
}

template <typename T>
TensorT<T> dense_grad_b(const TensorT<T>& grad_y) {
    const int64_t n = grad_y.dim(0), m = grad_y.dim(1);
    TensorT<T> gb({m});
    const T* gy = grad_y.raw();
    for (int64_t i = 0; i < n; ++i) {
        const T* gyrow = gy + i * m;
        for (int64_t j = 0; j < m; ++j) gb[j] += gyrow[j];
    }
    return gb;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y = x;
    T* p = y.raw();
    const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
    return y;
}

// Subgradient at exactly 0 is 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& grad_y) {
    TensorT<T> gx(x.shape());
    const T* xp = x.raw();
    const T* gy = grad_y.raw();
    T* gxp = gx.raw();
    const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gxp[i] = xp[i] > T(0) ? gy[i] : T(0);
    return gx;
}

struct Pool2dDims {
    int64_t n, c, h, w, window, stride, oh, ow;
};

template <typename T>
Pool2dDims maxpool2d_dims(const TensorT<T>& input, int64_t window, int64_t stride) {
    if (input.rank() != 4) throw std::invalid_argument("maxpool2d: expected NCHW input");
    if (window < 1 || stride < 1) throw std::invalid_argument("maxpool2d: window/stride must be positive");
    Pool2dDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3), window, stride, 0, 0};
    if (d.h < window || d.w < window) {
        throw std::invalid_argument("maxpool2d: window " + std::to_string(window) +
                                    " larger than input " + input.shape_str());
    }
    d.oh = (d.h - window) / stride + 1;
    d.ow = (d.w - window) / stride + 1;
    return d;
}

// argmax: flat index into the HxW plane, first occurrence wins on ties.
template <typename T>
TensorT<T> maxpool2d_forward(const TensorT<T>& input, const Pool2dDims& d,
                             std::vector<int32_t>& argmax) {
    TensorT<T> out({d.n, d.c, d.oh, d.ow});
    argmax.assign(static_cast<size_t>(out.numel()), 0);
    const T* in = input.raw();
    T* o = out.raw();
    int32_t* am = argmax.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t c = 0; c < d.c; ++c) {
            const T* plane = in + (n * d.c + c) * d.h * d.w;
            const int64_t obase = (n * d.c + c) * d.oh * d.ow;
            for (int64_t oh = 0; oh < d.oh; ++oh) {
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                    const int64_t h0 = oh * d.stride, w0 = ow * d.stride;
                    T best = plane[h0 * d.w + w0];
                    int32_t besti = static_cast<int32_t>(h0 * d.w + w0);
                    for (int64_t i = 0; i < d.window; ++i) {
                        for (int64_t j = 0; j < d.window; ++j) {
                            const int64_t idx = (h0 + i) * d.w + (w0 + j);
                            if (plane[idx] > best) {
                                best = plane[idx];
                                besti = static_cast<int32_t>(idx);
                            }
                        }
                    }
                    o[obase + oh * d.ow + ow] = best;
                    am[obase + oh * d.ow + ow] = besti;
                }
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> maxpool2d_backward(const TensorT<T>& grad_out, const Pool2dDims& d,
                              const std::vector<int32_t>& argmax) {
    TensorT<T> gx({d.n, d.c, d.h, d.w});
    const T* go = grad_out.raw();
    T* g = gx.raw();
    const int32_t* am = argmax.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t c = 0; c < d.c; ++c) {
            T* plane = g + (n * d.c + c) * d.h * d.w;
            const int64_t obase = (n * d.c + c) * d.oh * d.ow;
            for (int64_t k = 0; k < d.oh * d.ow; ++k) {
                plane[am[obase + k]] += go[obase + k];
            }
        }
    }
    return gx;
}

// Mean of -log softmax(logits)[label] over the batch. Saves the softmax for
// the backward pass. Max-subtraction keeps exp in range.
template <typename T>
T softmax_xent_forward(const TensorT<T>& logits, const std::vector<int32_t>& labels,
                       TensorT<T>& probs_out) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax_xent: logits must be NxC");
    const int64_t n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw std::invalid_argument("softmax_xent: expected " + std::to_string(n) + " labels");
    }
    for (int32_t l : labels) {
        if (l < 0 || l >= c) {
            throw std::invalid_argument("softmax_xent: label " + std::to_string(l) +
                                        " out of range [0, " + std::to_string(c) + ")");
        }
    }
    probs_out = TensorT<T>({n, c});
    std::vector<T> row_loss(static_cast<size_t>(n));
    const T* lp = logits.raw();
    T* pp = probs_out.raw();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const T* row = lp + i * c;
        T* prow = pp + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int64_t j = 0; j < c; ++j) {
            prow[j] = std::exp(row[j] - mx);
            sum += prow[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < c; ++j) prow[j] *= inv;
        row_loss[static_cast<size_t>(i)] = std::log(sum) - (row[labels[static_cast<size_t>(i)]] - mx);
    }
    T total = 0;
    for (int64_t i = 0; i < n; ++i) total += row_loss[static_cast<size_t>(i)];
    return total / static_cast<T>(n);
}

template <typename T>
TensorT<T> softmax_xent_backward(const TensorT<T>& probs, const std::vector<int32_t>& labels,
                                 T grad_scale) {
    const int64_t n = probs.dim(0), c = probs.dim(1);
    TensorT<T> gx({n, c});
    const T* pp = probs.raw();
    T* gp = gx.raw();
    const T s = grad_scale / static_cast<T>(n);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const T* prow = pp + i * c;
        T* grow = gp + i * c;
        for (int64_t j = 0; j < c; ++j) grow[j] = prow[j] * s;
        grow[labels[static_cast<size_t>(i)]] -= s;
    }
    return gx;
}

// Per-sample per-channel mean and population std over spatial positions.
// Accepts NCHW or CHW (treated as N=1). Two-pass.
template <typename T>
void channel_stats(const TensorT<T>& x, TensorT<T>& mean, TensorT<T>& stdev) {
    int64_t n, c, hw;
    if (x.rank() == 4) {
        n = x.dim(0);
        c = x.dim(1);
        hw = x.dim(2) * x.dim(3);
    } else if (x.rank() == 3) {
        n = 1;
        c = x.dim(0);
        hw = x.dim(1) * x.dim(2);
    } else {
        throw std::invalid_argument("channel_stats: expected NCHW or CHW, got " + x.shape_str());
    }
    mean = TensorT<T>({n, c});
    stdev = TensorT<T>({n, c});
    const T* xp = x.raw();
    T* mp = mean.raw();
    T* sp = stdev.raw();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            const T* plane = xp + (i * c + j) * hw;
            T sum = 0;
            for (int64_t k = 0; k < hw; ++k) sum += plane[k];
            const T mu = sum / static_cast<T>(hw);
            T ss = 0;
            for (int64_t k = 0; k < hw; ++k) {
                const T dlt = plane[k] - mu;
                ss += dlt * dlt;
            }
            mp[i * c + j] = mu;
            sp[i * c + j] = std::sqrt(ss / static_cast<T>(hw));
        }
    }
}

// ---------------------------------------------------------------------------
// Serial reference implementations. Plain loop nests, no pragmas, written for
// obviousness rather than speed.
// ---------------------------------------------------------------------------
namespace ref {

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& kernel, int64_t stride,
                          int64_t pad) {
    const Conv2dDims d = conv2d_dims(input, kernel, stride, pad);
    TensorT<T> out({d.n, d.cout, d.oh, d.ow});
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t oc = 0; oc < d.cout; ++oc)
            for (int64_t oh = 0; oh < d.oh; ++oh)
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                    T acc = 0;
                    for (int64_t ic = 0; ic < d.cin; ++ic)
                        for (int64_t kh = 0; kh < d.kh; ++kh)
                            for (int64_t kw = 0; kw < d.kw; ++kw) {
                                const int64_t ih = oh * stride + kh - pad;
                                const int64_t iw = ow * stride + kw - pad;
                                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                                acc += input[((n * d.cin + ic) * d.h + ih) * d.w + iw] *
                                       kernel[((oc * d.cin + ic) * d.kh + kh) * d.kw + kw];
                            }
                    out[((n * d.cout + oc) * d.oh + oh) * d.ow + ow] = acc;
                }
    return out;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    const int64_t n = x.dim(0), dD = x.dim(1), m = w.dim(1);
    TensorT<T> y({n, m});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
            T acc = b[j];
            for (int64_t k = 0; k < dD; ++k) acc += x[i * dD + k] * w[k * m + j];
            y[i * m + j] = acc;
        }
    return y;
}

template <typename T>
TensorT<T> maxpool2d_forward(const TensorT<T>& input, int64_t window, int64_t stride) {
    const Pool2dDims d = maxpool2d_dims(input, window, stride);
    TensorT<T> out({d.n, d.c, d.oh, d.ow});
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t c = 0; c < d.c; ++c)
            for (int64_t oh = 0; oh < d.oh; ++oh)
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                    T best = input[((n * d.c + c) * d.h + oh * stride) * d.w + ow * stride];
                    for (int64_t i = 0; i < window; ++i)
                        for (int64_t j = 0; j < window; ++j) {
                            const T v = input[((n * d.c + c) * d.h + oh * stride + i) * d.w +
                                              ow * stride + j];
                            if (v > best) best = v;
                        }
                    out[((n * d.c + c) * d.oh + oh) * d.ow + ow] = best;
                }
    return out;
}

template <typename T>
void channel_stats(const TensorT<T>& x, TensorT<T>& mean, TensorT<T>& stdev) {
    int64_t n, c, hw;
    if (x.rank() == 4) {
        n = x.dim(0);
        c = x.dim(1);
        hw = x.dim(2) * x.dim(3);
    } else {
        n = 1;
        c = x.dim(0);
        hw = x.dim(1) * x.dim(2);
    }
    mean = TensorT<T>({n, c});
    stdev = TensorT<T>({n, c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            T sum = 0;
            for (int64_t k = 0; k < hw; ++k) sum += x[(i * c + j) * hw + k];
            const T mu = sum / static_cast<T>(hw);
            T ss = 0;
            for (int64_t k = 0; k < hw; ++k) {
                const T dlt = x[(i * c + j) * hw + k] - mu;
                ss += dlt * dlt;
            }
            mean[i * c + j] = mu;
            stdev[i * c + j] = std::sqrt(ss / static_cast<T>(hw));
        }
}

template <typename T>
T softmax_xent_forward(const TensorT<T>& logits, const std::vector<int32_t>& labels) {
    const int64_t n = logits.dim(0), c = logits.dim(1);
    T total = 0;
    for (int64_t i = 0; i < n; ++i) {
        T mx = logits[i * c];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
        T sum = 0;
        for (int64_t j = 0; j < c; ++j) sum += std::exp(logits[i * c + j] - mx);
        total += std::log(sum) - (logits[i * c + labels[static_cast<size_t>(i)]] - mx);
    }
    return total / static_cast<T>(n);
}

} // namespace ref

} // namespace shapebias::kernels
