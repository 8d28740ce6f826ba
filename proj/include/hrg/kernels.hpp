#pragma once

// Forward and backward kernels for the operator set of the network. Every
// function is a pure function of its arguments; backward kernels accumulate
// into the gradient tensors they are handed.

#include "hrg/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrg::kernels {

inline Index conv_output_size(Index in, Index kernel, Index stride, Index padding) {
  const Index span = in + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

namespace detail {

// Elements of scratch used by one im2col chunk.
inline constexpr Index kColumnBudget = Index{1} << 21;

template <typename Scalar>
void im2col(const Scalar* plane, Index channels, Index height, Index width, Index kernel, Index stride,
            Index padding, Index out_width, Index row_begin, Index row_end, Scalar* cols) {
  const Index pixels = (row_end - row_begin) * out_width;
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < kernel; ++ky) {
      for (Index kx = 0; kx < kernel; ++kx) {
        Scalar* dst = cols + ((c * kernel + ky) * kernel + kx) * pixels;
        for (Index oy = row_begin; oy < row_end; ++oy) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_width, Scalar(0));
            dst += out_width;
            continue;
          }
          const Scalar* src = plane + (c * height + iy) * width;
          for (Index ox = 0; ox < out_width; ++ox) {
            const Index ix = ox * stride - padding + kx;
            *dst++ = (ix >= 0 && ix < width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* cols, Index channels, Index height, Index width, Index kernel, Index stride,
            Index padding, Index out_width, Index row_begin, Index row_end, Scalar* plane) {
  const Index pixels = (row_end - row_begin) * out_width;
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < kernel; ++ky) {
      for (Index kx = 0; kx < kernel; ++kx) {
        const Scalar* src = cols + ((c * kernel + ky) * kernel + kx) * pixels;
        for (Index oy = row_begin; oy < row_end; ++oy) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) {
            src += out_width;
            continue;
          }
          Scalar* dst = plane + (c * height + iy) * width;
          for (Index ox = 0; ox < out_width; ++ox) {
            const Index ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
          src += out_width;
        }
      }
    }
  }
}

struct ConvPlan {
  Index cin, cout, kernel, stride, padding;
  Index height, width, out_height, out_width;
  Index depth() const { return cin * kernel * kernel; }
  bool pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
  Index rows_per_chunk() const {
    return std::clamp<Index>(kColumnBudget / std::max<Index>(1, depth() * out_width), 1, out_height);
  }
};

template <typename Scalar>
ConvPlan plan_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                   Index stride, Index padding) {
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
    throw std::invalid_argument("conv2d: kernel must be 1x1 or 3x3, weight shape " + ws.str());
  }
  if (ws.c != in.c) {
    throw std::invalid_argument("conv2d: input channels do not match weight: input " + in.str() + ", weight " +
                                ws.str());
  }
  if (bias.size() != ws.n) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias.size()) + " for weight " + ws.str());
  }
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be positive and padding non-negative");
  }
  ConvPlan p{in.c, ws.n, ws.h, stride, padding, in.h, in.w,
             conv_output_size(in.h, ws.h, stride, padding), conv_output_size(in.w, ws.w, stride, padding)};
  if (p.out_height < 1 || p.out_width < 1) {
    throw std::invalid_argument("conv2d: non-positive output size for input " + in.str() + ", weight " + ws.str());
  }
  return p;
}

}  // namespace detail

/// 2-D cross-correlation with zero padding. Weight is (Cout, Cin, k, k), bias
/// holds Cout values.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      Index stride, Index padding) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  using Strided = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
  const auto p = detail::plan_conv(input, weight, bias, stride, padding);
  const Index batch = input.shape().n;
  const Index out_plane = p.out_height * p.out_width;
  Tensor<Scalar> out(Shape{batch, p.cout, p.out_height, p.out_width});
  Eigen::Map<const RowMatrix> w(weight.data(), p.cout, p.depth());
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> b(bias.data(), p.cout);

  if (p.pointwise()) {
    for (Index n = 0; n < batch; ++n) {
      auto o = out.matrix(n);
      o.noalias() = w * input.matrix(n);
      o.colwise() += b;
    }
    return out;
  }

  const Index rows = p.rows_per_chunk();
  std::vector<Scalar> cols(static_cast<std::size_t>(p.depth() * rows * p.out_width));
  for (Index n = 0; n < batch; ++n) {
    const Scalar* plane = input.data() + n * p.cin * p.height * p.width;
    for (Index r0 = 0; r0 < p.out_height; r0 += rows) {
      const Index r1 = std::min(p.out_height, r0 + rows);
      const Index pixels = (r1 - r0) * p.out_width;
      detail::im2col(plane, p.cin, p.height, p.width, p.kernel, p.stride, p.padding, p.out_width, r0, r1,
                     cols.data());
      Eigen::Map<const RowMatrix> c(cols.data(), p.depth(), pixels);
      Strided o(out.data() + n * p.cout * out_plane + r0 * p.out_width, p.cout, pixels,
                Eigen::OuterStride<>(out_plane));
      o.noalias() = w * c;
      o.colwise() += b;
    }
  }
  return out;
}

/// Accumulates the gradients of conv2d. Any of the output pointers may be null.
template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                     Index stride, Index padding, const Tensor<Scalar>& grad_out, Tensor<Scalar>* grad_input,
                     Tensor<Scalar>* grad_weight, Tensor<Scalar>* grad_bias) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  using ConstStrided = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
  const auto p = detail::plan_conv(input, weight, bias, stride, padding);
  const Index batch = input.shape().n;
  const Index out_plane = p.out_height * p.out_width;
  Eigen::Map<const RowMatrix> w(weight.data(), p.cout, p.depth());

  if (grad_bias) {
    for (Index n = 0; n < batch; ++n) {
      grad_bias->values() += grad_out.matrix(n).rowwise().sum();
    }
  }
  if (!grad_input && !grad_weight) return;

  if (p.pointwise()) {
    for (Index n = 0; n < batch; ++n) {
      if (grad_weight) {
        Eigen::Map<RowMatrix> gw(grad_weight->data(), p.cout, p.depth());
        gw.noalias() += grad_out.matrix(n) * input.matrix(n).transpose();
      }
      if (grad_input) grad_input->matrix(n).noalias() += w.transpose() * grad_out.matrix(n);
    }
    return;
  }

  const Index rows = p.rows_per_chunk();
  std::vector<Scalar> cols(static_cast<std::size_t>(p.depth() * rows * p.out_width));
  std::vector<Scalar> grad_cols(grad_input ? cols.size() : 0);
  for (Index n = 0; n < batch; ++n) {
    const Scalar* plane = input.data() + n * p.cin * p.height * p.width;
    for (Index r0 = 0; r0 < p.out_height; r0 += rows) {
      const Index r1 = std::min(p.out_height, r0 + rows);
      const Index pixels = (r1 - r0) * p.out_width;
      ConstStrided go(grad_out.data() + n * p.cout * out_plane + r0 * p.out_width, p.cout, pixels,
                      Eigen::OuterStride<>(out_plane));
      if (grad_weight) {
        detail::im2col(plane, p.cin, p.height, p.width, p.kernel, p.stride, p.padding, p.out_width, r0, r1,
                       cols.data());
        Eigen::Map<const RowMatrix> c(cols.data(), p.depth(), pixels);
        Eigen::Map<RowMatrix> gw(grad_weight->data(), p.cout, p.depth());
        gw.noalias() += go * c.transpose();
      }
      if (grad_input) {
        Eigen::Map<RowMatrix> gc(grad_cols.data(), p.depth(), pixels);
        gc.noalias() = w.transpose() * go;
        detail::col2im(grad_cols.data(), p.cin, p.height, p.width, p.kernel, p.stride, p.padding, p.out_width,
                       r0, r1, grad_input->data() + n * p.cin * p.height * p.width);
      }
    }
  }
}

namespace detail {

// Align-corners sampling positions for an integer upscale along one axis.
struct AxisSampling {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

inline AxisSampling axis_sampling(Index in, Index out) {
  AxisSampling s;
  s.lo.resize(out);
  s.hi.resize(out);
  s.frac.resize(out);
  for (Index i = 0; i < out; ++i) {
    if (out == 1 || in == 1) {
      s.lo[i] = s.hi[i] = 0;
      s.frac[i] = 0.0;
      continue;
    }
    const Index num = i * (in - 1);
    s.lo[i] = num / (out - 1);
    s.hi[i] = std::min(s.lo[i] + 1, in - 1);
    s.frac[i] = static_cast<double>(num % (out - 1)) / static_cast<double>(out - 1);
  }
  return s;
}

}  // namespace detail

/// Align-corners bilinear upsampling by an integer factor.
template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& input, Index scale) {
  if (scale < 1) throw std::invalid_argument("bilinear_upsample: scale must be >= 1");
  if (scale == 1) return input;
  const Shape& s = input.shape();
  const Index oh = s.h * scale, ow = s.w * scale;
  Tensor<Scalar> out(Shape{s.n, s.c, oh, ow});
  const auto ys = detail::axis_sampling(s.h, oh);
  const auto xs = detail::axis_sampling(s.w, ow);
  for (Index nc = 0; nc < s.n * s.c; ++nc) {
    const Scalar* in = input.data() + nc * s.h * s.w;
    Scalar* o = out.data() + nc * oh * ow;
    for (Index y = 0; y < oh; ++y) {
      const Scalar* r0 = in + ys.lo[y] * s.w;
      const Scalar* r1 = in + ys.hi[y] * s.w;
      const Scalar ly = static_cast<Scalar>(ys.frac[y]);
      for (Index x = 0; x < ow; ++x) {
        const Scalar lx = static_cast<Scalar>(xs.frac[x]);
        const Scalar top = (Scalar(1) - lx) * r0[xs.lo[x]] + lx * r0[xs.hi[x]];
        const Scalar bottom = (Scalar(1) - lx) * r1[xs.lo[x]] + lx * r1[xs.hi[x]];
        o[y * ow + x] = (Scalar(1) - ly) * top + ly * bottom;
      }
    }
  }
  return out;
}

template <typename Scalar>
void bilinear_upsample_backward(const Tensor<Scalar>& grad_out, Index scale, Tensor<Scalar>& grad_input) {
  if (scale == 1) {
    grad_input.values() += grad_out.values();
    return;
  }
  const Shape& s = grad_input.shape();
  const Index oh = s.h * scale, ow = s.w * scale;
  const auto ys = detail::axis_sampling(s.h, oh);
  const auto xs = detail::axis_sampling(s.w, ow);
  for (Index nc = 0; nc < s.n * s.c; ++nc) {
    Scalar* gi = grad_input.data() + nc * s.h * s.w;
    const Scalar* go = grad_out.data() + nc * oh * ow;
    for (Index y = 0; y < oh; ++y) {
      Scalar* r0 = gi + ys.lo[y] * s.w;
      Scalar* r1 = gi + ys.hi[y] * s.w;
      const Scalar ly = static_cast<Scalar>(ys.frac[y]);
      for (Index x = 0; x < ow; ++x) {
        const Scalar lx = static_cast<Scalar>(xs.frac[x]);
        const Scalar g = go[y * ow + x];
        const Scalar gt = (Scalar(1) - ly) * g, gb = ly * g;
        r0[xs.lo[x]] += (Scalar(1) - lx) * gt;
        r0[xs.hi[x]] += lx * gt;
        r1[xs.lo[x]] += (Scalar(1) - lx) * gb;
        r1[xs.hi[x]] += lx * gb;
      }
    }
  }
}

enum class NormMode { train, eval };

/// Running statistics of one batch-norm layer. Empty tensors mean the
/// statistics were never initialized.
template <typename Scalar>
struct RunningStats {
  Tensor<Scalar> mean;
  Tensor<Scalar> var;
  bool initialized() const { return !mean.empty() && !var.empty(); }
};

/// Values kept from the forward pass for the backward pass.
template <typename Scalar>
struct NormCache {
  Tensor<Scalar> normalized;
  std::vector<Scalar> inv_std;
};

template <typename Scalar>
Tensor<Scalar> batchnorm2d(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                           RunningStats<Scalar>& running, Scalar momentum, Scalar epsilon, NormMode mode,
                           NormCache<Scalar>* cache = nullptr) {
  const Shape& s = input.shape();
  if (gamma.size() != s.c || beta.size() != s.c) {
    throw std::invalid_argument("batchnorm2d: per-channel parameters do not match input " + s.str());
  }
  if (!(epsilon > Scalar(0))) throw std::invalid_argument("batchnorm2d: epsilon must be positive");
  if (mode == NormMode::eval && !running.initialized()) {
    throw std::invalid_argument("batchnorm2d: eval mode requires initialized running statistics");
  }
  if (running.initialized() && (running.mean.size() != s.c || running.var.size() != s.c)) {
    throw std::invalid_argument("batchnorm2d: running statistics do not match input " + s.str());
  }
  const Index plane = s.plane();
  const double count = static_cast<double>(s.n * plane);
  Tensor<Scalar> out(s);
  Tensor<Scalar> normalized(s);
  std::vector<Scalar> inv_std(s.c);
  for (Index c = 0; c < s.c; ++c) {
    Scalar mean, var;
    if (mode == NormMode::train) {
      double sum = 0.0;
      for (Index n = 0; n < s.n; ++n) sum += input.matrix(n).row(c).template cast<double>().sum();
      const double mu = sum / count;
      double sq = 0.0;
      for (Index n = 0; n < s.n; ++n) {
        sq += (input.matrix(n).row(c).template cast<double>().array() - mu).square().sum();
      }
      mean = static_cast<Scalar>(mu);
      var = static_cast<Scalar>(sq / count);
      if (running.initialized()) {
        running.mean[c] = (Scalar(1) - momentum) * running.mean[c] + momentum * mean;
        running.var[c] = (Scalar(1) - momentum) * running.var[c] + momentum * var;
      }
    } else {
      mean = running.mean[c];
      var = running.var[c];
    }
    const Scalar istd = Scalar(1) / std::sqrt(var + epsilon);
    inv_std[c] = istd;
    for (Index n = 0; n < s.n; ++n) {
      auto xn = normalized.matrix(n).row(c);
      xn = (input.matrix(n).row(c).array() - mean) * istd;
      out.matrix(n).row(c) = (xn.array() * gamma[c] + beta[c]).matrix();
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename Scalar>
void batchnorm2d_backward(const NormCache<Scalar>& cache, const Tensor<Scalar>& gamma, NormMode mode,
                          const Tensor<Scalar>& grad_out, Tensor<Scalar>* grad_input, Tensor<Scalar>* grad_gamma,
                          Tensor<Scalar>* grad_beta) {
  const Shape& s = grad_out.shape();
  const Scalar count = static_cast<Scalar>(s.n * s.plane());
  for (Index c = 0; c < s.c; ++c) {
    Scalar sum_g = 0, sum_gx = 0;
    for (Index n = 0; n < s.n; ++n) {
      const auto g = grad_out.matrix(n).row(c);
      sum_g += g.sum();
      sum_gx += g.dot(cache.normalized.matrix(n).row(c));
    }
    if (grad_gamma) (*grad_gamma)[c] += sum_gx;
    if (grad_beta) (*grad_beta)[c] += sum_g;
    if (!grad_input) continue;
    const Scalar scale = gamma[c] * cache.inv_std[c];
    for (Index n = 0; n < s.n; ++n) {
      auto gi = grad_input->matrix(n).row(c);
      const auto g = grad_out.matrix(n).row(c);
      if (mode == NormMode::eval) {
        gi += scale * g;
      } else {
        const auto xh = cache.normalized.matrix(n).row(c);
        gi += (scale / count) * (count * g.array() - sum_g - xh.array() * sum_gx).matrix();
      }
    }
  }
}

/// Concatenates tensors along the channel axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape first = inputs.front()->shape();
  Index channels = 0;
  for (const auto* t : inputs) {
    const Shape& s = t->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw std::invalid_argument("concat_channels: shape " + s.str() + " incompatible with " + first.str());
    }
    channels += s.c;
  }
  Tensor<Scalar> out(Shape{first.n, channels, first.h, first.w});
  for (Index n = 0; n < first.n; ++n) {
    Index c0 = 0;
    for (const auto* t : inputs) {
      out.matrix(n).middleRows(c0, t->shape().c) = t->matrix(n);
      c0 += t->shape().c;
    }
  }
  return out;
}

/// Sums a stack of shifted planes: channel `o * k * k + t` of the input holds
/// the contribution of kernel tap `t` to output channel `o`. Equivalent to the
/// tap accumulation of a k x k convolution with padding k / 2.
template <typename Scalar>
Tensor<Scalar> tap_sum(const Tensor<Scalar>& input, const Tensor<Scalar>& bias, Index kernel) {
  const Shape& s = input.shape();
  const Index taps = kernel * kernel;
  if (s.c % taps != 0) throw std::invalid_argument("tap_sum: channels not a multiple of kernel taps " + s.str());
  const Index outc = s.c / taps;
  if (bias.size() != outc) throw std::invalid_argument("tap_sum: bias length does not match output channels");
  const Index half = kernel / 2;
  Tensor<Scalar> out(Shape{s.n, outc, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    for (Index o = 0; o < outc; ++o) {
      auto dst = out.channel(n, o);
      dst.setConstant(bias[o]);
      for (Index ky = 0; ky < kernel; ++ky) {
        for (Index kx = 0; kx < kernel; ++kx) {
          const auto src = input.channel(n, o * taps + ky * kernel + kx);
          // out(y, x) += src(y + dy, x + dx) where the sample stays in range.
          const Index dy = ky - half, dx = kx - half;
          const Index y0 = std::max<Index>(0, -dy), y1 = std::min(s.h, s.h - dy);
          const Index x0 = std::max<Index>(0, -dx), x1 = std::min(s.w, s.w - dx);
          if (y1 <= y0 || x1 <= x0) continue;
          dst.block(y0, x0, y1 - y0, x1 - x0) += src.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0);
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
void tap_sum_backward(const Tensor<Scalar>& grad_out, Index kernel, Tensor<Scalar>* grad_input,
                      Tensor<Scalar>* grad_bias) {
  const Shape& s = grad_out.shape();
  const Index taps = kernel * kernel;
  const Index half = kernel / 2;
  for (Index n = 0; n < s.n; ++n) {
    for (Index o = 0; o < s.c; ++o) {
      const auto g = grad_out.channel(n, o);
      if (grad_bias) (*grad_bias)[o] += g.sum();
      if (!grad_input) continue;
      for (Index ky = 0; ky < kernel; ++ky) {
        for (Index kx = 0; kx < kernel; ++kx) {
          auto dst = grad_input->channel(n, o * taps + ky * kernel + kx);
          const Index dy = ky - half, dx = kx - half;
          const Index y0 = std::max<Index>(0, -dy), y1 = std::min(s.h, s.h - dy);
          const Index x0 = std::max<Index>(0, -dx), x1 = std::min(s.w, s.w - dx);
          if (y1 <= y0 || x1 <= x0) continue;
          dst.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0) += g.block(y0, x0, y1 - y0, x1 - x0);
        }
      }
    }
  }
}

/// Reorders a (Cout, Cin, k, k) weight into (Cout * k * k, Cin, 1, 1) so that
/// row `o * k * k + t` holds tap `t` of output channel `o`.
template <typename Scalar>
Tensor<Scalar> taps_as_pointwise(const Tensor<Scalar>& weight) {
  const Shape& s = weight.shape();
  const Index taps = s.h * s.w;
  Tensor<Scalar> out(Shape{s.n * taps, s.c, 1, 1});
  for (Index o = 0; o < s.n; ++o)
    for (Index i = 0; i < s.c; ++i)
      for (Index t = 0; t < taps; ++t) out[(o * taps + t) * s.c + i] = weight[(o * s.c + i) * taps + t];
  return out;
}

template <typename Scalar>
void taps_as_pointwise_backward(const Tensor<Scalar>& grad_out, Tensor<Scalar>& grad_weight) {
  const Shape& s = grad_weight.shape();
  const Index taps = s.h * s.w;
  for (Index o = 0; o < s.n; ++o)
    for (Index i = 0; i < s.c; ++i)
      for (Index t = 0; t < taps; ++t) grad_weight[(o * s.c + i) * taps + t] += grad_out[(o * taps + t) * s.c + i];
}

}  // namespace hrg::kernels
