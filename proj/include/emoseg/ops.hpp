#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "emoseg/tensor.hpp"

// Forward and backward kernels for the handful of dense operations the model
// needs. Everything is plain row-major loops over [C,H,W] tensors; the tape in
// autodiff.hpp composes these into a differentiable graph.
namespace emoseg::ops {

// out[o,i,j] = b[o] + sum_c w[o,c] * x[c,i,j]
template <typename S>
Tensor<S> conv1x1(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (x.rank() != 3 || w.rank() != 2) throw ShapeError("conv1x1: expects x[C,H,W], w[Cout,Cin]");
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0);
    if (w.dim(1) != cin || b.numel() != cout)
        throw ShapeError("conv1x1: weight/bias mismatch with input channels");
    Tensor<S> out({cout, h, wd});
    const long hw = static_cast<long>(h) * wd;
    for (int o = 0; o < cout; ++o) {
        S* op = &out.data[static_cast<size_t>(o) * hw];
        for (long p = 0; p < hw; ++p) op[p] = b[o];
        for (int c = 0; c < cin; ++c) {
            const S wv = w[static_cast<long>(o) * cin + c];
            const S* xp = &x.data[static_cast<size_t>(c) * hw];
            for (long p = 0; p < hw; ++p) op[p] += wv * xp[p];
        }
    }
    return out;
}

template <typename S>
void conv1x1_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& g,
                      Tensor<S>& gx, Tensor<S>& gw, Tensor<S>& gb) {
    const int cin = x.dim(0), cout = w.dim(0);
    const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
    for (int o = 0; o < cout; ++o) {
        const S* gp = &g.data[static_cast<size_t>(o) * hw];
        for (long p = 0; p < hw; ++p) gb[o] += gp[p];
        for (int c = 0; c < cin; ++c) {
            const S wv = w[static_cast<long>(o) * cin + c];
            const S* xp = &x.data[static_cast<size_t>(c) * hw];
            S* gxp = &gx.data[static_cast<size_t>(c) * hw];
            S acc = 0;
            for (long p = 0; p < hw; ++p) {
                gxp[p] += wv * gp[p];
                acc += gp[p] * xp[p];
            }
            gw[static_cast<long>(o) * cin + c] += acc;
        }
    }
}

// General 3x3 convolution, zero padding 1, stride 1 or 2. w is [Cout,Cin,3,3].
template <typename S>
Tensor<S> conv3x3(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError("conv3x3: expects x[C,H,W], w[Cout,Cin,3,3]");
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0);
    if (w.dim(1) != cin || b.numel() != cout) throw ShapeError("conv3x3: weight/bias mismatch");
    const int ho = (h + 2 - 3) / stride + 1;
    const int wo = (wd + 2 - 3) / stride + 1;
    Tensor<S> out({cout, ho, wo});
    for (int o = 0; o < cout; ++o)
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
                S acc = b[o];
                const int si = i * stride - 1, sj = j * stride - 1;
                for (int c = 0; c < cin; ++c)
                    for (int ki = 0; ki < 3; ++ki) {
                        const int y = si + ki;
                        if (y < 0 || y >= h) continue;
                        for (int kj = 0; kj < 3; ++kj) {
                            const int xx = sj + kj;
                            if (xx < 0 || xx >= wd) continue;
                            acc += w.data[((static_cast<size_t>(o) * cin + c) * 3 + ki) * 3 + kj] *
                                   x.at3(c, y, xx);
                        }
                    }
                out.at3(o, i, j) = acc;
            }
    return out;
}

template <typename S>
void conv3x3_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& g, int stride,
                      Tensor<S>& gx, Tensor<S>& gw, Tensor<S>& gb) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), ho = g.dim(1), wo = g.dim(2);
    for (int o = 0; o < cout; ++o)
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
                const S gv = g.at3(o, i, j);
                gb[o] += gv;
                const int si = i * stride - 1, sj = j * stride - 1;
                for (int c = 0; c < cin; ++c)
                    for (int ki = 0; ki < 3; ++ki) {
                        const int y = si + ki;
                        if (y < 0 || y >= h) continue;
                        for (int kj = 0; kj < 3; ++kj) {
                            const int xx = sj + kj;
                            if (xx < 0 || xx >= wd) continue;
                            const size_t wi = ((static_cast<size_t>(o) * cin + c) * 3 + ki) * 3 + kj;
                            gx.at3(c, y, xx) += w.data[wi] * gv;
                            gw.data[wi] += x.at3(c, y, xx) * gv;
                        }
                    }
            }
}

// Depthwise 3x3, zero padding 1, stride 1; channel c sees only kernel c.
template <typename S>
Tensor<S> depthwise_conv3x3(const Tensor<S>& x, const Tensor<S>& w) {
    if (x.rank() != 3) throw ShapeError("depthwise_conv3x3: expects x[C,H,W]");
    if (w.rank() != 3 || w.dim(0) != x.dim(0) || w.dim(1) != 3 || w.dim(2) != 3)
        throw ShapeError("depthwise_conv3x3: kernel must be [C,3,3]");
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    Tensor<S> out({c, h, wd});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < wd; ++j) {
                S acc = 0;
                for (int ki = 0; ki < 3; ++ki) {
                    const int y = i + ki - 1;
                    if (y < 0 || y >= h) continue;
                    for (int kj = 0; kj < 3; ++kj) {
                        const int xx = j + kj - 1;
                        if (xx < 0 || xx >= wd) continue;
                        acc += w.at3(ch, ki, kj) * x.at3(ch, y, xx);
                    }
                }
                out.at3(ch, i, j) = acc;
            }
    return out;
}

template <typename S>
void depthwise_conv3x3_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& g,
                                Tensor<S>& gx, Tensor<S>& gw) {
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < wd; ++j) {
                const S gv = g.at3(ch, i, j);
                for (int ki = 0; ki < 3; ++ki) {
                    const int y = i + ki - 1;
                    if (y < 0 || y >= h) continue;
                    for (int kj = 0; kj < 3; ++kj) {
                        const int xx = j + kj - 1;
                        if (xx < 0 || xx >= wd) continue;
                        gx.at3(ch, y, xx) += w.at3(ch, ki, kj) * gv;
                        gw.at3(ch, ki, kj) += x.at3(ch, y, xx) * gv;
                    }
                }
            }
}

// Softmax over spatial positions, per channel, max-stabilized. Each channel of
// the output sums to 1 over all H*W positions.
template <typename S>
Tensor<S> softmax_spatial(const Tensor<S>& x) {
    if (x.rank() != 3) throw ShapeError("softmax_spatial: expects x[C,H,W]");
    const int c = x.dim(0);
    const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
    Tensor<S> out(x.shape);
    for (int ch = 0; ch < c; ++ch) {
        const S* xp = &x.data[static_cast<size_t>(ch) * hw];
        S* op = &out.data[static_cast<size_t>(ch) * hw];
        S mx = xp[0];
        for (long p = 1; p < hw; ++p) mx = std::max(mx, xp[p]);
        S sum = 0;
        for (long p = 0; p < hw; ++p) {
            op[p] = std::exp(xp[p] - mx);
            sum += op[p];
        }
        for (long p = 0; p < hw; ++p) op[p] /= sum;
    }
    return out;
}

template <typename S>
void softmax_spatial_backward(const Tensor<S>& y, const Tensor<S>& g, Tensor<S>& gx) {
    const int c = y.dim(0);
    const long hw = static_cast<long>(y.dim(1)) * y.dim(2);
    for (int ch = 0; ch < c; ++ch) {
        const S* yp = &y.data[static_cast<size_t>(ch) * hw];
        const S* gp = &g.data[static_cast<size_t>(ch) * hw];
        S* gxp = &gx.data[static_cast<size_t>(ch) * hw];
        S dot = 0;
        for (long p = 0; p < hw; ++p) dot += yp[p] * gp[p];
        for (long p = 0; p < hw; ++p) gxp[p] += yp[p] * (gp[p] - dot);
    }
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw ShapeError("concat_channels: spatial shapes differ");
    Tensor<S> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
    return out;
}

template <typename S>
Tensor<S> hadamard(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "hadamard");
    Tensor<S> out(a.shape);
    for (long i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "add");
    Tensor<S> out(a.shape);
    for (long i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out(x.shape);
    for (long i = 0; i < x.numel(); ++i) out[i] = x[i] > S(0) ? x[i] : S(0);
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> out(x.shape);
    for (long i = 0; i < x.numel(); ++i) {
        const S z = x[i];
        out[i] = z >= S(0) ? S(1) / (S(1) + std::exp(-z))
                           : std::exp(z) / (S(1) + std::exp(z));
    }
    return out;
}

// Bilinear resize with half-pixel centers: src = (dst+0.5)*scale - 0.5, clamped.
// Identity (bitwise) when the size is unchanged.
template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& x, int h2, int w2) {
    if (x.rank() != 3) throw ShapeError("bilinear_resize: expects x[C,H,W]");
    if (h2 < 1 || w2 < 1) throw ShapeError("bilinear_resize: zero target size");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h2 == h && w2 == w) return x;
    Tensor<S> out({c, h2, w2});
    const double sy = static_cast<double>(h) / h2;
    const double sx = static_cast<double>(w) / w2;
    for (int i = 0; i < h2; ++i) {
        double fy = (i + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const S wy = static_cast<S>(fy - y0);
        for (int j = 0; j < w2; ++j) {
            double fx = (j + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const S wx = static_cast<S>(fx - x0);
            for (int ch = 0; ch < c; ++ch) {
                const S v00 = x.at3(ch, y0, x0), v01 = x.at3(ch, y0, x1);
                const S v10 = x.at3(ch, y1, x0), v11 = x.at3(ch, y1, x1);
                out.at3(ch, i, j) = (S(1) - wy) * ((S(1) - wx) * v00 + wx * v01) +
                                    wy * ((S(1) - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

template <typename S>
void bilinear_resize_backward(const std::vector<int>& xshape, const Tensor<S>& g, Tensor<S>& gx) {
    const int c = xshape[0], h = xshape[1], w = xshape[2];
    const int h2 = g.dim(1), w2 = g.dim(2);
    if (h2 == h && w2 == w) {
        for (long i = 0; i < g.numel(); ++i) gx[i] += g[i];
        return;
    }
    const double sy = static_cast<double>(h) / h2;
    const double sx = static_cast<double>(w) / w2;
    for (int i = 0; i < h2; ++i) {
        double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const S wy = static_cast<S>(fy - y0);
        for (int j = 0; j < w2; ++j) {
            double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const S wx = static_cast<S>(fx - x0);
            for (int ch = 0; ch < c; ++ch) {
                const S gv = g.at3(ch, i, j);
                gx.at3(ch, y0, x0) += (S(1) - wy) * (S(1) - wx) * gv;
                gx.at3(ch, y0, x1) += (S(1) - wy) * wx * gv;
                gx.at3(ch, y1, x0) += wy * (S(1) - wx) * gv;
                gx.at3(ch, y1, x1) += wy * wx * gv;
            }
        }
    }
}

// Max pooling to an exact target size; window = (H/h, W/w). Argmax ties go to
// the first position in row-major scan order (the convention the backward pass
// relies on).
template <typename S>
Tensor<S> maxpool_to(const Tensor<S>& x, int h, int w, std::vector<long>* argmax = nullptr) {
    if (x.rank() != 3) throw ShapeError("maxpool_to: expects x[C,H,W]");
    const int c = x.dim(0), hh = x.dim(1), ww = x.dim(2);
    if (h < 1 || w < 1 || hh % h != 0 || ww % w != 0)
        throw ShapeError("maxpool_to: target does not divide input size");
    const int kh = hh / h, kw = ww / w;
    Tensor<S> out({c, h, w});
    if (argmax) argmax->assign(static_cast<size_t>(out.numel()), 0);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                S best = -std::numeric_limits<S>::infinity();
                long best_idx = 0;
                for (int di = 0; di < kh; ++di)
                    for (int dj = 0; dj < kw; ++dj) {
                        const long idx = (static_cast<long>(ch) * hh + i * kh + di) * ww + j * kw + dj;
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                out.at3(ch, i, j) = best;
                if (argmax) (*argmax)[(static_cast<size_t>(ch) * h + i) * w + j] = best_idx;
            }
    return out;
}

template <typename S>
S mse(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "mse");
    S acc = 0;
    for (long i = 0; i < a.numel(); ++i) {
        const S d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<S>(a.numel());
}

// Stable binary cross-entropy on logits: max(z,0) - z*t + log(1+exp(-|z|)),
// averaged over all elements.
template <typename S>
S bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets) {
    require_same_shape(logits, targets, "bce_with_logits");
    S acc = 0;
    for (long i = 0; i < logits.numel(); ++i) {
        const S z = logits[i], t = targets[i];
        if (t < S(0) || t > S(1)) throw NumericError("bce_with_logits: target outside [0,1]");
        acc += std::max(z, S(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    return acc / static_cast<S>(logits.numel());
}

}  // namespace emoseg::ops
