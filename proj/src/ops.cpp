#include "derain/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace derain {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;

template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvSpec& s) {
    return s.kh == 1 && s.kw == 1 && s.stride == 1 && s.dilation == 1 && s.pad_top == 0 &&
           s.pad_bottom == 0 && s.pad_left == 0 && s.pad_right == 0;
}

// Unfolds one batch item (C, H, W) into a (C*kh*kw, Ho*Wo) matrix.
template <typename T>
void im2col(const T* x, const Shape& in, const Shape& out, const ConvSpec& s, T* col) {
    const std::int64_t ho = out.h;
    const std::int64_t wo = out.w;
    for (std::int64_t c = 0; c < in.c; ++c) {
        const T* plane = x + c * in.plane();
        for (std::int64_t ky = 0; ky < s.kh; ++ky) {
            for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                T* row = col + ((c * s.kh + ky) * s.kw + kx) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * s.stride - s.pad_top + ky * s.dilation;
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= in.h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = plane + iy * in.w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix = ox * s.stride - s.pad_left + kx * s.dilation;
                        dst[ox] = (ix >= 0 && ix < in.w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back onto the input plane.
template <typename T>
void col2im(const T* col, const Shape& in, const Shape& out, const ConvSpec& s, T* dx) {
    const std::int64_t ho = out.h;
    const std::int64_t wo = out.w;
    for (std::int64_t c = 0; c < in.c; ++c) {
        T* plane = dx + c * in.plane();
        for (std::int64_t ky = 0; ky < s.kh; ++ky) {
            for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                const T* row = col + ((c * s.kh + ky) * s.kw + kx) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * s.stride - s.pad_top + ky * s.dilation;
                    if (iy < 0 || iy >= in.h) continue;
                    const T* src = row + oy * wo;
                    T* dst = plane + iy * in.w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix = ox * s.stride - s.pad_left + kx * s.dilation;
                        if (ix >= 0 && ix < in.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.ptr();
    const T* s = src.ptr();
    for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace

ConvSpec ConvSpec::same(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t dilation,
                        std::int64_t stride) {
    if (k % 2 == 0) throw std::invalid_argument("ConvSpec::same: kernel size must be odd");
    const std::int64_t pad = dilation * (k - 1) / 2;
    return {in, out, k, k, stride, dilation, pad, pad, pad, pad};
}

Shape ConvSpec::output_shape(const Shape& x) const {
    if (in_channels <= 0 || out_channels <= 0 || kh <= 0 || kw <= 0 || stride <= 0 ||
        dilation <= 0) {
        throw std::invalid_argument("conv2d: non-positive ConvSpec field");
    }
    if (x.c != in_channels) {
        throw std::invalid_argument("conv2d: input " + x.str() + " does not match weight " +
                                    weight_shape().str());
    }
    const std::int64_t span_h = x.h + pad_top + pad_bottom - dilation * (kh - 1) - 1;
    const std::int64_t span_w = x.w + pad_left + pad_right - dilation * (kw - 1) - 1;
    if (span_h < 0 || span_w < 0 || x.n == 0) {
        throw std::invalid_argument("conv2d: zero-size output for input " + x.str() +
                                    " and weight " + weight_shape().str());
    }
    return {x.n, out_channels, span_h / stride + 1, span_w / stride + 1};
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, const ConvSpec& spec) {
    Tape<T>& tape = *x.tape;
    const Shape in = x.shape();
    if (weight.shape() != spec.weight_shape()) {
        throw std::invalid_argument("conv2d: weight shape " + weight.shape().str() +
                                    " does not match spec " + spec.weight_shape().str());
    }
    if (bias.shape() != spec.bias_shape()) {
        throw std::invalid_argument("conv2d: bias shape " + bias.shape().str() +
                                    " does not match spec " + spec.bias_shape().str());
    }
    const Shape out = spec.output_shape(in);
    const std::int64_t k = spec.fan_in();
    const std::int64_t p = out.h * out.w;
    const bool pointwise = is_pointwise(spec);

    Tensor<T> y(out);
    {
        const Tensor<T>& xv = x.value();
        ConstMatMap<T> w(weight.value().ptr(), spec.out_channels, k);
        const T* b = bias.value().ptr();
        AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(k * p));
        for (std::int64_t n = 0; n < in.n; ++n) {
            const T* xn = xv.ptr() + n * in.c * in.plane();
            if (!pointwise) im2col(xn, in, out, spec, col.data());
            ConstMatMap<T> cm(pointwise ? xn : col.data(), k, p);
            MatMap<T> yn(y.ptr() + n * out.c * p, out.c, p);
            yn.noalias() = w * cm;
            for (std::int64_t o = 0; o < out.c; ++o) yn.row(o).array() += b[o];
        }
    }

    const std::size_t xi = x.id, wi = weight.id, bi = bias.id;
    return tape.record(
        OpKind::Conv2d, std::move(y), {xi, wi, bi},
        [spec, in, out, k, p, pointwise, xi, wi, bi](Tape<T>& t, std::size_t self) {
            const Tensor<T>& gy = t.grad(self);
            const Tensor<T>& xv = t.value(xi);
            ConstMatMap<T> w(t.value(wi).ptr(), spec.out_channels, k);
            AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(k * p));
            RowMat<T> dcol;
            for (std::int64_t n = 0; n < in.n; ++n) {
                ConstMatMap<T> gn(gy.ptr() + n * out.c * p, out.c, p);
                const T* xn = xv.ptr() + n * in.c * in.plane();
                if (t.requires_grad(wi)) {
                    if (!pointwise) im2col(xn, in, out, spec, col.data());
                    ConstMatMap<T> cm(pointwise ? xn : col.data(), k, p);
                    MatMap<T> gw(t.grad_buffer(wi).ptr(), spec.out_channels, k);
                    gw.noalias() += gn * cm.transpose();
                }
                if (t.requires_grad(bi)) {
                    T* gb = t.grad_buffer(bi).ptr();
                    for (std::int64_t o = 0; o < out.c; ++o) gb[o] += gn.row(o).sum();
                }
                if (t.requires_grad(xi)) {
                    T* gx = t.grad_buffer(xi).ptr() + n * in.c * in.plane();
                    if (pointwise) {
                        MatMap<T> gxm(gx, k, p);
                        gxm.noalias() += w.transpose() * gn;
                    } else {
                        dcol.noalias() = w.transpose() * gn;
                        col2im(dcol.data(), in, out, spec, gx);
                    }
                }
            }
        });
}

template <typename T>
Var<T> avg_pool(Var<T> x, std::int64_t k) {
    if (k <= 0) throw std::invalid_argument("avg_pool: kernel must be positive");
    if (k == 1) return x;
    const Shape in = x.shape();
    if (in.h % k != 0 || in.w % k != 0) {
        throw std::invalid_argument("avg_pool: spatial size of " + in.str() +
                                    " is not divisible by " + std::to_string(k));
    }
    const Shape out{in.n, in.c, in.h / k, in.w / k};
    const T inv = T(1) / static_cast<T>(k * k);
    Tensor<T> y(out);
    const Tensor<T>& xv = x.value();
    for (std::int64_t nc = 0; nc < in.n * in.c; ++nc) {
        const T* src = xv.ptr() + nc * in.plane();
        T* dst = y.ptr() + nc * out.plane();
        for (std::int64_t oy = 0; oy < out.h; ++oy)
            for (std::int64_t ox = 0; ox < out.w; ++ox) {
                T acc = 0;
                for (std::int64_t dy = 0; dy < k; ++dy)
                    for (std::int64_t dx = 0; dx < k; ++dx)
                        acc += src[(oy * k + dy) * in.w + ox * k + dx];
                dst[oy * out.w + ox] = acc * inv;
            }
    }
    const std::size_t xi = x.id;
    return x.tape->record(OpKind::AvgPool, std::move(y), {xi},
                          [in, out, k, inv, xi](Tape<T>& t, std::size_t self) {
                              const T* gy = t.grad(self).ptr();
                              T* gx = t.grad_buffer(xi).ptr();
                              for (std::int64_t nc = 0; nc < in.n * in.c; ++nc) {
                                  const T* g = gy + nc * out.plane();
                                  T* d = gx + nc * in.plane();
                                  for (std::int64_t iy = 0; iy < in.h; ++iy)
                                      for (std::int64_t ix = 0; ix < in.w; ++ix)
                                          d[iy * in.w + ix] += g[(iy / k) * out.w + ix / k] * inv;
                              }
                          });
}

template <typename T>
Var<T> max_pool(Var<T> x, std::int64_t k) {
    if (k <= 0) throw std::invalid_argument("max_pool: kernel must be positive");
    if (k == 1) return x;
    const Shape in = x.shape();
    if (in.h % k != 0 || in.w % k != 0) {
        throw std::invalid_argument("max_pool: spatial size of " + in.str() +
                                    " is not divisible by " + std::to_string(k));
    }
    const Shape out{in.n, in.c, in.h / k, in.w / k};
    Tensor<T> y(out);
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    const Tensor<T>& xv = x.value();
    for (std::int64_t nc = 0; nc < in.n * in.c; ++nc) {
        for (std::int64_t oy = 0; oy < out.h; ++oy)
            for (std::int64_t ox = 0; ox < out.w; ++ox) {
                std::int64_t best = nc * in.plane() + (oy * k) * in.w + ox * k;
                for (std::int64_t dy = 0; dy < k; ++dy)
                    for (std::int64_t dx = 0; dx < k; ++dx) {
                        const std::int64_t idx = nc * in.plane() + (oy * k + dy) * in.w + ox * k + dx;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                const std::int64_t o = nc * out.plane() + oy * out.w + ox;
                y[o] = xv[best];
                argmax[static_cast<std::size_t>(o)] = best;
            }
    }
    const std::size_t xi = x.id;
    return x.tape->record(OpKind::MaxPool, std::move(y), {xi},
                          [argmax = std::move(argmax), xi](Tape<T>& t, std::size_t self) {
                              const T* gy = t.grad(self).ptr();
                              T* gx = t.grad_buffer(xi).ptr();
                              for (std::size_t o = 0; o < argmax.size(); ++o)
                                  gx[argmax[o]] += gy[o];
                          });
}

template <typename T>
Var<T> pool(Var<T> x, std::int64_t k, PoolKind kind) {
    return kind == PoolKind::Average ? avg_pool(x, k) : max_pool(x, k);
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, std::int64_t s) {
    if (s <= 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
    if (s == 1) return x;
    const Shape in = x.shape();
    const Shape out{in.n, in.c, in.h * s, in.w * s};
    Tensor<T> y(out);
    const Tensor<T>& xv = x.value();
    for (std::int64_t nc = 0; nc < in.n * in.c; ++nc) {
        const T* src = xv.ptr() + nc * in.plane();
        T* dst = y.ptr() + nc * out.plane();
        for (std::int64_t oy = 0; oy < out.h; ++oy)
            for (std::int64_t ox = 0; ox < out.w; ++ox)
                dst[oy * out.w + ox] = src[(oy / s) * in.w + ox / s];
    }
    const std::size_t xi = x.id;
    return x.tape->record(OpKind::Upsample, std::move(y), {xi},
                          [in, out, s, xi](Tape<T>& t, std::size_t self) {
                              const T* gy = t.grad(self).ptr();
                              T* gx = t.grad_buffer(xi).ptr();
                              for (std::int64_t nc = 0; nc < in.n * in.c; ++nc) {
                                  const T* g = gy + nc * out.plane();
                                  T* d = gx + nc * in.plane();
                                  for (std::int64_t oy = 0; oy < out.h; ++oy)
                                      for (std::int64_t ox = 0; ox < out.w; ++ox)
                                          d[(oy / s) * in.w + ox / s] += g[oy * out.w + ox];
                              }
                          });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    if (xs.size() == 1) return xs.front();
    const Shape first = xs.front().shape();
    std::int64_t channels = 0;
    for (const Var<T>& v : xs) {
        const Shape& s = v.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw std::invalid_argument("concat_channels: shape mismatch " + first.str() +
                                        " vs " + s.str());
        }
        channels += s.c;
    }
    const Shape out{first.n, channels, first.h, first.w};
    Tensor<T> y(out);
    std::vector<std::size_t> ids;
    std::vector<std::int64_t> widths;
    const std::int64_t plane = first.plane();
    for (std::int64_t n = 0; n < first.n; ++n) {
        T* dst = y.ptr() + n * channels * plane;
        for (const Var<T>& v : xs) {
            const std::int64_t span = v.shape().c * plane;
            const T* src = v.value().ptr() + n * span;
            dst = std::copy(src, src + span, dst);
        }
    }
    for (const Var<T>& v : xs) {
        ids.push_back(v.id);
        widths.push_back(v.shape().c);
    }
    return xs.front().tape->record(
        OpKind::Concat, std::move(y), ids,
        [ids, widths, first, channels, plane](Tape<T>& t, std::size_t self) {
            const T* gy = t.grad(self).ptr();
            for (std::int64_t n = 0; n < first.n; ++n) {
                const T* src = gy + n * channels * plane;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const std::int64_t span = widths[i] * plane;
                    if (t.requires_grad(ids[i])) {
                        T* dst = t.grad_buffer(ids[i]).ptr() + n * span;
                        for (std::int64_t j = 0; j < span; ++j) dst[j] += src[j];
                    }
                    src += span;
                }
            }
        });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
    const Tensor<T>& xv = x.value();
    Tensor<T> y(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] >= T(0) ? xv[i] : slope * xv[i];
    const std::size_t xi = x.id;
    return x.tape->record(OpKind::LeakyRelu, std::move(y), {xi},
                          [slope, xi](Tape<T>& t, std::size_t self) {
                              const Tensor<T>& xv = t.value(xi);
                              const T* gy = t.grad(self).ptr();
                              T* gx = t.grad_buffer(xi).ptr();
                              for (std::int64_t i = 0; i < xv.numel(); ++i)
                                  gx[i] += xv[i] >= T(0) ? gy[i] : slope * gy[i];
                          });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> y = a.value();
    const T* bv = b.value().ptr();
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(OpKind::Add, std::move(y), {ai, bi},
                          [ai, bi](Tape<T>& t, std::size_t self) {
                              const Tensor<T>& g = t.grad(self);
                              if (t.requires_grad(ai)) accumulate(t.grad_buffer(ai), g);
                              if (t.requires_grad(bi)) accumulate(t.grad_buffer(bi), g);
                          });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> y = a.value();
    const T* bv = b.value().ptr();
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(OpKind::Sub, std::move(y), {ai, bi},
                          [ai, bi](Tape<T>& t, std::size_t self) {
                              const Tensor<T>& g = t.grad(self);
                              if (t.requires_grad(ai)) accumulate(t.grad_buffer(ai), g);
                              if (t.requires_grad(bi)) {
                                  T* d = t.grad_buffer(bi).ptr();
                                  for (std::int64_t i = 0; i < g.numel(); ++i) d[i] -= g[i];
                              }
                          });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
    Tensor<T> y = x.value();
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= factor;
    const std::size_t xi = x.id;
    return x.tape->record(OpKind::Scale, std::move(y), {xi},
                          [factor, xi](Tape<T>& t, std::size_t self) {
                              const T* g = t.grad(self).ptr();
                              Tensor<T>& d = t.grad_buffer(xi);
                              for (std::int64_t i = 0; i < d.numel(); ++i) d[i] += factor * g[i];
                          });
}

template <typename T>
Var<T> mean(Var<T> x) {
    const Tensor<T>& xv = x.value();
    if (xv.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    T acc = 0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    const T inv = T(1) / static_cast<T>(xv.numel());
    const std::size_t xi = x.id;
    return x.tape->record(OpKind::Mean, Tensor<T>({1, 1, 1, 1}, acc * inv), {xi},
                          [inv, xi](Tape<T>& t, std::size_t self) {
                              const T g = t.grad(self)[0] * inv;
                              Tensor<T>& d = t.grad_buffer(xi);
                              for (std::int64_t i = 0; i < d.numel(); ++i) d[i] += g;
                          });
}

template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "l1_loss");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.numel() == 0) throw std::invalid_argument("l1_loss: empty tensors");
    T acc = 0;
    for (std::int64_t i = 0; i < av.numel(); ++i) acc += std::abs(av[i] - bv[i]);
    const T inv = T(1) / static_cast<T>(av.numel());
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(
        OpKind::L1Loss, Tensor<T>({1, 1, 1, 1}, acc * inv), {ai, bi},
        [inv, ai, bi](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv;
            const Tensor<T>& av = t.value(ai);
            const Tensor<T>& bv = t.value(bi);
            T* ga = t.requires_grad(ai) ? t.grad_buffer(ai).ptr() : nullptr;
            T* gb = t.requires_grad(bi) ? t.grad_buffer(bi).ptr() : nullptr;
            for (std::int64_t i = 0; i < av.numel(); ++i) {
                const T d = av[i] - bv[i];
                const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
                if (ga) ga[i] += s;
                if (gb) gb[i] -= s;
            }
        });
}

template <typename T>
T scalar(Var<T> v) {
    const Tensor<T>& t = v.value();
    if (t.numel() != 1) throw std::invalid_argument("scalar: shape " + t.shape().str());
    return t[0];
}

#define DERAIN_INSTANTIATE_OPS(T)                                                   \
    template Var<T> conv2d(Var<T>, Var<T>, Var<T>, const ConvSpec&);                \
    template Var<T> avg_pool(Var<T>, std::int64_t);                                 \
    template Var<T> max_pool(Var<T>, std::int64_t);                                 \
    template Var<T> pool(Var<T>, std::int64_t, PoolKind);                           \
    template Var<T> upsample_nearest(Var<T>, std::int64_t);                         \
    template Var<T> concat_channels(std::span<const Var<T>>);                       \
    template Var<T> leaky_relu(Var<T>, T);                                          \
    template Var<T> add(Var<T>, Var<T>);                                            \
    template Var<T> sub(Var<T>, Var<T>);                                            \
    template Var<T> scale(Var<T>, T);                                               \
    template Var<T> mean(Var<T>);                                                   \
    template Var<T> l1_loss(Var<T>, Var<T>);                                        \
    template T scalar(Var<T>);

DERAIN_INSTANTIATE_OPS(float)
DERAIN_INSTANTIATE_OPS(double)

#undef DERAIN_INSTANTIATE_OPS

}  // namespace derain
