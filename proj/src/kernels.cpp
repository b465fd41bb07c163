#include "dfmcam/kernels.hpp"

#include <algorithm>
#include <cmath>
#if defined(__AVX512F__)
#include <immintrin.h>
#endif
#include <sstream>

#include "dfmcam/error.hpp"
#include "dfmcam/parallel.hpp"

namespace dfmcam {

std::string to_string(const Shape5& s) {
  std::ostringstream os;
  os << '(' << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ',' << s[4] << ')';
  return os.str();
}

Shape5 conv3d_output_shape(const Shape5& in, const Conv3dGeometry& g) {
  if (g.kernel < 1 || g.padding < 0 || g.in_channels < 1 || g.out_channels < 1)
    throw ShapeError("conv3d: invalid geometry");
  if (in[1] != g.in_channels)
    throw ShapeError("conv3d: input has " + std::to_string(in[1]) + " channels, layer expects " +
                     std::to_string(g.in_channels));
  Shape5 out{in[0], g.out_channels, 0, 0, 0};
  for (int a = 2; a < 5; ++a) {
    out[a] = in[a] + 2 * g.padding - g.kernel + 1;
    if (out[a] < 1) throw ShapeError("conv3d: kernel larger than padded input " + to_string(in));
  }
  return out;
}

namespace {

std::size_t kernel_volume(const Conv3dGeometry& g) {
  return static_cast<std::size_t>(g.kernel) * g.kernel * g.kernel;
}

template <typename Real>
void check_conv_params(const Shape5& in, std::span<const Real> weights, std::size_t bias_size,
                       const Conv3dGeometry& g) {
  conv3d_output_shape(in, g);
  const std::size_t expect = static_cast<std::size_t>(g.out_channels) * g.in_channels * kernel_volume(g);
  if (weights.size() != expect)
    throw ShapeError("conv3d: weight count " + std::to_string(weights.size()) + " != " + std::to_string(expect));
  if (bias_size != static_cast<std::size_t>(g.out_channels)) throw ShapeError("conv3d: bias count mismatch");
}

// Zero-padded copy of one sample, [C][D+2p][H+2p][W+2p].
template <typename Real>
void pad_sample(const Real* src, const Shape5& s, int p, std::vector<Real>& dst) {
  const int C = s[1], D = s[2], H = s[3], W = s[4];
  const int Dp = D + 2 * p, Hp = H + 2 * p, Wp = W + 2 * p;
  dst.assign(static_cast<std::size_t>(C) * Dp * Hp * Wp, Real(0));
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y) {
        const Real* row = src + ((static_cast<std::size_t>(c) * D + z) * H + y) * W;
        Real* out = dst.data() + ((static_cast<std::size_t>(c) * Dp + z + p) * Hp + y + p) * Wp + p;
        std::copy(row, row + W, out);
      }
}

// Valid convolution of one padded sample.
struct ConvDims {
  int C, O, k;
  int Dp, Hp, Wp;
  int Do, Ho, Wo;
  std::size_t wstride() const { return static_cast<std::size_t>(C) * k * k * k; }
  std::size_t ospatial() const { return static_cast<std::size_t>(Do) * Ho * Wo; }
  std::size_t row(int c, int z, int y) const { return ((static_cast<std::size_t>(c) * Dp + z) * Hp + y) * Wp; }
};

template <typename Real>
void forward_sample_generic(const Real* pad, const Real* weights, const Real* bias, const ConvDims& d, Real* out) {
  constexpr int kBlock = 8;
  const int k = d.k;
  const std::size_t wstride = d.wstride();
  std::vector<Real> acc(static_cast<std::size_t>(kBlock) * d.Wo);
  for (int o0 = 0; o0 < d.O; o0 += kBlock) {
    const int ob = std::min(kBlock, d.O - o0);
    for (int z = 0; z < d.Do; ++z)
      for (int y = 0; y < d.Ho; ++y) {
        for (int j = 0; j < ob; ++j) std::fill_n(acc.data() + j * d.Wo, d.Wo, bias ? bias[o0 + j] : Real(0));
        for (int c = 0; c < d.C; ++c)
          for (int dz = 0; dz < k; ++dz)
            for (int dy = 0; dy < k; ++dy) {
              const Real* row = pad + d.row(c, z + dz, y + dy);
              const Real* wrow = weights + o0 * wstride + ((static_cast<std::size_t>(c) * k + dz) * k + dy) * k;
              for (int dx = 0; dx < k; ++dx)
                for (int j = 0; j < ob; ++j) {
                  const Real w = wrow[j * wstride + dx];
                  Real* __restrict a = acc.data() + j * d.Wo;
                  const Real* __restrict s = row + dx;
                  for (int x = 0; x < d.Wo; ++x) a[x] = std::fma(w, s[x], a[x]);
                }
            }
        for (int j = 0; j < ob; ++j)
          std::copy_n(acc.data() + j * d.Wo, d.Wo, out + (o0 + j) * d.ospatial() + (static_cast<std::size_t>(z) * d.Ho + y) * d.Wo);
      }
  }
}

template <typename Real>
void weight_grad_sample_generic(const Real* pad, const Real* g_n, const ConvDims& d, Real* dw) {
  const int C = d.C, O = d.O, k = d.k;
  const std::size_t ospatial = d.ospatial();
  std::vector<Real> gt(ospatial * O);
  for (int o = 0; o < O; ++o)
    for (std::size_t i = 0; i < ospatial; ++i) gt[i * O + o] = g_n[o * ospatial + i];

  std::vector<Real> acc(static_cast<std::size_t>(k) * O);
  for (int c = 0; c < C; ++c)
    for (int dz = 0; dz < k; ++dz)
      for (int dy = 0; dy < k; ++dy) {
        std::fill(acc.begin(), acc.end(), Real(0));
        for (int z = 0; z < d.Do; ++z)
          for (int y = 0; y < d.Ho; ++y) {
            const Real* row = pad + d.row(c, z + dz, y + dy);
            const Real* grow = gt.data() + (static_cast<std::size_t>(z) * d.Ho + y) * d.Wo * O;
            for (int x = 0; x < d.Wo; ++x) {
              const Real* __restrict gv = grow + static_cast<std::size_t>(x) * O;
              for (int dx = 0; dx < k; ++dx) {
                const Real r = row[x + dx];
                Real* __restrict a = acc.data() + static_cast<std::size_t>(dx) * O;
                for (int o = 0; o < O; ++o) a[o] += r * gv[o];
              }
            }
          }
        for (int o = 0; o < O; ++o)
          for (int dx = 0; dx < k; ++dx)
            dw[(((static_cast<std::size_t>(o) * C + c) * k + dz) * k + dy) * k + dx] = acc[dx * O + o];
      }
}

#if defined(__AVX512F__)

inline __mmask16 tail_mask(int lanes) {
  return lanes >= 16 ? __mmask16(0xFFFF) : static_cast<__mmask16>((1u << std::max(lanes, 0)) - 1u);
}

// OB output channels by NV 16-lane vectors of one output row, accumulated in
// registers in the reference order.
template <int OB, int NV>
void forward_tile(const float* pad, const float* weights, const float* bias, const ConvDims& d, float* out, int o0,
                  int z, int y, int x0) {
  const int k = d.k;
  const std::size_t wstride = d.wstride();
  const int rem = d.Wo - x0;
  __mmask16 mask[NV];
  for (int v = 0; v < NV; ++v) mask[v] = tail_mask(rem - 16 * v);
  __m512 acc[OB][NV];
  for (int j = 0; j < OB; ++j)
    for (int v = 0; v < NV; ++v) acc[j][v] = _mm512_set1_ps(bias ? bias[o0 + j] : 0.0f);
  for (int c = 0; c < d.C; ++c)
    for (int dz = 0; dz < k; ++dz)
      for (int dy = 0; dy < k; ++dy) {
        const float* row = pad + d.row(c, z + dz, y + dy) + x0;
        const float* wrow = weights + o0 * wstride + ((static_cast<std::size_t>(c) * k + dz) * k + dy) * k;
        for (int dx = 0; dx < k; ++dx) {
          __m512 s[NV];
          for (int v = 0; v < NV; ++v) s[v] = _mm512_maskz_loadu_ps(mask[v], row + dx + 16 * v);
          for (int j = 0; j < OB; ++j) {
            const __m512 w = _mm512_set1_ps(wrow[j * wstride + dx]);
            for (int v = 0; v < NV; ++v) acc[j][v] = _mm512_fmadd_ps(w, s[v], acc[j][v]);
          }
        }
      }
  for (int j = 0; j < OB; ++j) {
    float* dst = out + (o0 + j) * d.ospatial() + (static_cast<std::size_t>(z) * d.Ho + y) * d.Wo + x0;
    for (int v = 0; v < NV; ++v) _mm512_mask_storeu_ps(dst + 16 * v, mask[v], acc[j][v]);
  }
}

template <int OB>
void forward_rows(const float* pad, const float* weights, const float* bias, const ConvDims& d, float* out, int o0) {
  for (int z = 0; z < d.Do; ++z)
    for (int y = 0; y < d.Ho; ++y)
      for (int x0 = 0; x0 < d.Wo;) {
        const int rem = d.Wo - x0;
        if (rem > 32) {
          forward_tile<OB, 3>(pad, weights, bias, d, out, o0, z, y, x0);
          x0 += 48;
        } else if (rem > 16) {
          forward_tile<OB, 2>(pad, weights, bias, d, out, o0, z, y, x0);
          x0 += 32;
        } else {
          forward_tile<OB, 1>(pad, weights, bias, d, out, o0, z, y, x0);
          x0 += 16;
        }
      }
}

void forward_sample(const float* pad, const float* weights, const float* bias, const ConvDims& d, float* out) {
  int o0 = 0;
  for (; o0 + 8 <= d.O; o0 += 8) forward_rows<8>(pad, weights, bias, d, out, o0);
  for (; o0 + 4 <= d.O; o0 += 4) forward_rows<4>(pad, weights, bias, d, out, o0);
  for (; o0 < d.O; ++o0) forward_rows<1>(pad, weights, bias, d, out, o0);
}

// dW for OB output channels and DX consecutive kernel x offsets starting at
// dx0, at fixed (c, dz, dy).
template <int OB, int DX>
void weight_grad_tile(const float* pad, const float* g_n, const ConvDims& d, float* dw, int o0, int c, int dz, int dy,
                      int dx0) {
  const int k = d.k;
  const std::size_t ospatial = d.ospatial();
  __m512 acc[OB][DX];
  for (int j = 0; j < OB; ++j)
    for (int t = 0; t < DX; ++t) acc[j][t] = _mm512_setzero_ps();
  for (int z = 0; z < d.Do; ++z)
    for (int y = 0; y < d.Ho; ++y) {
      const float* row = pad + d.row(c, z + dz, y + dy) + dx0;
      const float* grow = g_n + o0 * ospatial + (static_cast<std::size_t>(z) * d.Ho + y) * d.Wo;
      for (int x0 = 0; x0 < d.Wo; x0 += 16) {
        const __mmask16 m = tail_mask(d.Wo - x0);
        __m512 r[DX];
        for (int t = 0; t < DX; ++t) r[t] = _mm512_maskz_loadu_ps(m, row + x0 + t);
        for (int j = 0; j < OB; ++j) {
          const __m512 g = _mm512_maskz_loadu_ps(m, grow + j * ospatial + x0);
          for (int t = 0; t < DX; ++t) acc[j][t] = _mm512_fmadd_ps(g, r[t], acc[j][t]);
        }
      }
    }
  for (int j = 0; j < OB; ++j)
    for (int t = 0; t < DX; ++t)
      dw[(((static_cast<std::size_t>(o0 + j) * d.C + c) * k + dz) * k + dy) * k + dx0 + t] =
          _mm512_reduce_add_ps(acc[j][t]);
}

template <int OB>
void weight_grad_channels(const float* pad, const float* g_n, const ConvDims& d, float* dw, int o0) {
  for (int c = 0; c < d.C; ++c)
    for (int dz = 0; dz < d.k; ++dz)
      for (int dy = 0; dy < d.k; ++dy)
        for (int dx0 = 0; dx0 < d.k;) {
          const int rem = d.k - dx0;
          if (rem >= 3) {
            weight_grad_tile<OB, 3>(pad, g_n, d, dw, o0, c, dz, dy, dx0);
            dx0 += 3;
          } else if (rem == 2) {
            weight_grad_tile<OB, 2>(pad, g_n, d, dw, o0, c, dz, dy, dx0);
            dx0 += 2;
          } else {
            weight_grad_tile<OB, 1>(pad, g_n, d, dw, o0, c, dz, dy, dx0);
            dx0 += 1;
          }
        }
}

void weight_grad_sample(const float* pad, const float* g_n, const ConvDims& d, float* dw) {
  int o0 = 0;
  for (; o0 + 8 <= d.O; o0 += 8) weight_grad_channels<8>(pad, g_n, d, dw, o0);
  for (; o0 < d.O; ++o0) weight_grad_channels<1>(pad, g_n, d, dw, o0);
}

#else

void forward_sample(const float* pad, const float* weights, const float* bias, const ConvDims& d, float* out) {
  forward_sample_generic(pad, weights, bias, d, out);
}
void weight_grad_sample(const float* pad, const float* g_n, const ConvDims& d, float* dw) {
  weight_grad_sample_generic(pad, g_n, d, dw);
}

#endif

void forward_sample(const double* pad, const double* weights, const double* bias, const ConvDims& d, double* out) {
  forward_sample_generic(pad, weights, bias, d, out);
}
void weight_grad_sample(const double* pad, const double* g_n, const ConvDims& d, double* dw) {
  weight_grad_sample_generic(pad, g_n, d, dw);
}

}  // namespace

template <typename Real>
void conv3d_forward(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias,
                    const Conv3dGeometry& g, Tensor<Real>& out) {
  check_conv_params(in.shape, weights, bias.size(), g);
  const Shape5 os = conv3d_output_shape(in.shape, g);
  out.reset(os);
  const int p = g.padding;
  const ConvDims d{g.in_channels, g.out_channels, g.kernel, in.d() + 2 * p, in.h() + 2 * p, in.w() + 2 * p,
                   os[2],         os[3],          os[4]};
  parallel_for_each(static_cast<std::size_t>(in.n()), [&](std::size_t n) {
    std::vector<Real> pad;
    pad_sample(in.sample(static_cast<int>(n)), in.shape, p, pad);
    forward_sample(pad.data(), weights.data(), bias.data(), d, out.sample(static_cast<int>(n)));
  });
}

template <typename Real>
void conv3d_forward_reference(const Tensor<Real>& in, std::span<const Real> weights,
                              std::span<const Real> bias, const Conv3dGeometry& g, Tensor<Real>& out) {
  check_conv_params(in.shape, weights, bias.size(), g);
  const Shape5 os = conv3d_output_shape(in.shape, g);
  out.reset(os);
  const int k = g.kernel, p = g.padding;
  for (int n = 0; n < os[0]; ++n)
    for (int o = 0; o < os[1]; ++o)
      for (int z = 0; z < os[2]; ++z)
        for (int y = 0; y < os[3]; ++y)
          for (int x = 0; x < os[4]; ++x) {
            Real acc = bias[o];
            for (int c = 0; c < g.in_channels; ++c)
              for (int dz = 0; dz < k; ++dz)
                for (int dy = 0; dy < k; ++dy)
                  for (int dx = 0; dx < k; ++dx) {
                    const int iz = z + dz - p, iy = y + dy - p, ix = x + dx - p;
                    const bool inside = iz >= 0 && iy >= 0 && ix >= 0 && iz < in.d() && iy < in.h() && ix < in.w();
                    const Real v = inside ? in.at(n, c, iz, iy, ix) : Real(0);
                    const Real w = weights[(((static_cast<std::size_t>(o) * g.in_channels + c) * k + dz) * k + dy) * k + dx];
                    acc = std::fma(w, v, acc);
                  }
            out.at(n, o, z, y, x) = acc;
          }
}

template <typename Real>
void conv3d_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& grad_out,
                     const Conv3dGeometry& g, Tensor<Real>* grad_in, std::span<Real> grad_weights,
                     std::span<Real> grad_bias) {
  check_conv_params(in.shape, weights, grad_bias.empty() ? g.out_channels : grad_bias.size(), g);
  const Shape5 os = conv3d_output_shape(in.shape, g);
  if (grad_out.shape != os)
    throw ShapeError("conv3d backward: upstream gradient " + to_string(grad_out.shape) + " != output " + to_string(os));
  const bool want_params = !grad_weights.empty();
  if (want_params && grad_weights.size() != weights.size())
    throw ShapeError("conv3d backward: weight gradient size mismatch");

  const int N = in.n(), C = g.in_channels, O = g.out_channels, k = g.kernel, p = g.padding;
  const int D = in.d(), H = in.h(), W = in.w();
  const ConvDims d{C, O, k, D + 2 * p, H + 2 * p, W + 2 * p, os[2], os[3], os[4]};
  const std::size_t wcount = weights.size(), ospatial = d.ospatial();

  // Input gradient as a valid convolution of the upstream gradient, padded by
  // k - 1 - p, with spatially flipped, channel-transposed weights.
  const int q = k - 1 - p;
  std::vector<Real> flipped;
  if (grad_in && q >= 0) {
    flipped.resize(wcount);
    for (int o = 0; o < O; ++o)
      for (int c = 0; c < C; ++c)
        for (int dz = 0; dz < k; ++dz)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx)
              flipped[(((static_cast<std::size_t>(c) * O + o) * k + (k - 1 - dz)) * k + (k - 1 - dy)) * k + (k - 1 - dx)] =
                  weights[(((static_cast<std::size_t>(o) * C + c) * k + dz) * k + dy) * k + dx];
  }
  const ConvDims dt{O, C, k, d.Do + 2 * q, d.Ho + 2 * q, d.Wo + 2 * q, D, H, W};

  std::vector<Real> dw_per_sample(want_params ? static_cast<std::size_t>(N) * wcount : 0);
  std::vector<double> db_per_sample(want_params ? static_cast<std::size_t>(N) * O : 0);
  if (grad_in) grad_in->reset(in.shape);

  parallel_for_each(static_cast<std::size_t>(N), [&](std::size_t ns) {
    const int n = static_cast<int>(ns);
    const Real* g_n = grad_out.sample(n);

    if (want_params) {
      std::vector<Real> pad;
      pad_sample(in.sample(n), in.shape, p, pad);
      weight_grad_sample(pad.data(), g_n, d, dw_per_sample.data() + ns * wcount);
      for (int o = 0; o < O; ++o) {
        double s = 0.0;
        const Real* go = g_n + o * ospatial;
        for (std::size_t i = 0; i < ospatial; ++i) s += go[i];
        db_per_sample[ns * O + o] = s;
      }
    }

    if (!grad_in) return;
    Real* gi = grad_in->sample(n);
    if (q >= 0) {
      std::vector<Real> gpad;
      pad_sample(g_n, os, q, gpad);
      forward_sample(gpad.data(), flipped.data(), static_cast<const Real*>(nullptr), dt, gi);
      return;
    }
    std::vector<Real> dpad(static_cast<std::size_t>(C) * d.Dp * d.Hp * d.Wp, Real(0));
    for (int o = 0; o < O; ++o)
      for (int z = 0; z < d.Do; ++z)
        for (int y = 0; y < d.Ho; ++y) {
          const Real* __restrict grow = g_n + ((static_cast<std::size_t>(o) * d.Do + z) * d.Ho + y) * d.Wo;
          for (int c = 0; c < C; ++c)
            for (int dz = 0; dz < k; ++dz)
              for (int dy = 0; dy < k; ++dy) {
                Real* drow = dpad.data() + d.row(c, z + dz, y + dy);
                const Real* wrow = weights.data() + (((static_cast<std::size_t>(o) * C + c) * k + dz) * k + dy) * k;
                for (int dx = 0; dx < k; ++dx) {
                  const Real w = wrow[dx];
                  Real* __restrict dd = drow + dx;
                  for (int x = 0; x < d.Wo; ++x) dd[x] += w * grow[x];
                }
              }
        }
    for (int c = 0; c < C; ++c)
      for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y) {
          const Real* src = dpad.data() + d.row(c, z + p, y + p) + p;
          std::copy(src, src + W, gi + ((static_cast<std::size_t>(c) * D + z) * H + y) * W);
        }
  });

  if (!want_params) return;
  std::fill(grad_weights.begin(), grad_weights.end(), Real(0));
  for (int n = 0; n < N; ++n) {
    const Real* dw = dw_per_sample.data() + static_cast<std::size_t>(n) * wcount;
    for (std::size_t i = 0; i < wcount; ++i) grad_weights[i] += dw[i];
  }
  for (int o = 0; o < O; ++o) {
    double s = 0.0;
    for (int n = 0; n < N; ++n) s += db_per_sample[static_cast<std::size_t>(n) * O + o];
    grad_bias[o] = static_cast<Real>(s);
  }
}

template <typename Real>
void relu_forward(const Tensor<Real>& in, Tensor<Real>& out) {
  out.shape = in.shape;
  out.data.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] > Real(0) ? in.data[i] : Real(0);
}

template <typename Real>
void relu_backward(const Tensor<Real>& in, const Tensor<Real>& grad_out, Tensor<Real>& grad_in) {
  if (grad_out.shape != in.shape) throw ShapeError("relu backward: shape mismatch");
  grad_in.shape = in.shape;
  grad_in.data.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) grad_in.data[i] = in.data[i] > Real(0) ? grad_out.data[i] : Real(0);
}

template <typename Real>
void maxpool3d_forward(const Tensor<Real>& in, Tensor<Real>& out, std::vector<std::int64_t>& argmax) {
  const Shape5 os{in.n(), in.c(), in.d() / 2, in.h() / 2, in.w() / 2};
  if (os[2] < 1 || os[3] < 1 || os[4] < 1) throw ShapeError("maxpool3d: input too small " + to_string(in.shape));
  out.reset(os);
  argmax.assign(out.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < os[0]; ++n)
    for (int c = 0; c < os[1]; ++c)
      for (int z = 0; z < os[2]; ++z)
        for (int y = 0; y < os[3]; ++y)
          for (int x = 0; x < os[4]; ++x, ++o) {
            std::size_t best = in.index(n, c, 2 * z, 2 * y, 2 * x);
            Real best_v = in.data[best];
            for (int dz = 0; dz < 2; ++dz)
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const std::size_t i = in.index(n, c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                  if (in.data[i] > best_v) {
                    best_v = in.data[i];
                    best = i;
                  }
                }
            out.data[o] = best_v;
            argmax[o] = static_cast<std::int64_t>(best);
          }
}

template <typename Real>
void maxpool3d_backward(const Tensor<Real>& grad_out, const std::vector<std::int64_t>& argmax,
                        const Shape5& in_shape, Tensor<Real>& grad_in) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool3d backward: routing table mismatch");
  grad_in.reset(in_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in.data[static_cast<std::size_t>(argmax[o])] += grad_out.data[o];
}

template <typename Real>
void batchnorm_forward(const Tensor<Real>& in, std::span<const Real> gamma, std::span<const Real> beta,
                       std::span<const Real> running_mean, std::span<const Real> running_var, double eps,
                       bool use_batch_stats, Tensor<Real>& out, BatchNormStats& stats) {
  const int N = in.n(), C = in.c();
  const std::size_t S = in.spatial();
  if (gamma.size() != static_cast<std::size_t>(C) || beta.size() != gamma.size() ||
      running_mean.size() != gamma.size() || running_var.size() != gamma.size())
    throw ShapeError("batchnorm: channel count mismatch for input " + to_string(in.shape));
  out.shape = in.shape;
  out.data.resize(in.size());
  stats.mean.assign(C, 0.0);
  stats.var.assign(C, 0.0);
  stats.inv_std.assign(C, 0.0);
  const double M = static_cast<double>(N) * static_cast<double>(S);
  stats.count = M;

  parallel_for_each(static_cast<std::size_t>(C), [&](std::size_t cs) {
    const int c = static_cast<int>(cs);
    double mean, var;
    if (use_batch_stats) {
      double sum = 0.0;
      for (int n = 0; n < N; ++n) {
        const Real* x = in.data.data() + in.index(n, c, 0, 0, 0);
        for (std::size_t i = 0; i < S; ++i) sum += x[i];
      }
      mean = sum / M;
      double sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const Real* x = in.data.data() + in.index(n, c, 0, 0, 0);
        for (std::size_t i = 0; i < S; ++i) {
          const double d = x[i] - mean;
          sq += d * d;
        }
      }
      var = sq / M;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps);
    stats.mean[c] = mean;
    stats.var[c] = var;
    stats.inv_std[c] = inv_std;
    const double gm = gamma[c], bt = beta[c];
    for (int n = 0; n < N; ++n) {
      const std::size_t base = in.index(n, c, 0, 0, 0);
      const Real* x = in.data.data() + base;
      Real* y = out.data.data() + base;
      for (std::size_t i = 0; i < S; ++i) y[i] = static_cast<Real>(gm * ((x[i] - mean) * inv_std) + bt);
    }
  });
}

template <typename Real>
void batchnorm_update_running(const BatchNormStats& stats, double momentum, std::span<Real> running_mean,
                              std::span<Real> running_var) {
  if (stats.mean.size() != running_mean.size() || stats.var.size() != running_var.size())
    throw ShapeError("batchnorm: running statistics size mismatch");
  const double M = stats.count;
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    const double unbiased = M > 1.0 ? stats.var[c] * M / (M - 1.0) : stats.var[c];
    running_mean[c] = static_cast<Real>(momentum * running_mean[c] + (1.0 - momentum) * stats.mean[c]);
    running_var[c] = static_cast<Real>(momentum * running_var[c] + (1.0 - momentum) * unbiased);
  }
}

template <typename Real>
void batchnorm_backward(const Tensor<Real>& in, std::span<const Real> gamma, const BatchNormStats& stats,
                        bool used_batch_stats, const Tensor<Real>& grad_out, Tensor<Real>* grad_in,
                        std::span<Real> grad_gamma, std::span<Real> grad_beta) {
  const int N = in.n(), C = in.c();
  const std::size_t S = in.spatial();
  if (grad_out.shape != in.shape) throw ShapeError("batchnorm backward: shape mismatch");
  const bool want_params = !grad_gamma.empty();
  if (want_params && (grad_gamma.size() != static_cast<std::size_t>(C) || grad_beta.size() != grad_gamma.size()))
    throw ShapeError("batchnorm backward: parameter gradient size mismatch");
  if (grad_in) {
    grad_in->shape = in.shape;
    grad_in->data.resize(in.size());
  }
  const double M = static_cast<double>(N) * static_cast<double>(S);

  parallel_for_each(static_cast<std::size_t>(C), [&](std::size_t cs) {
    const int c = static_cast<int>(cs);
    const double mean = stats.mean[c], inv_std = stats.inv_std[c];
    double sg = 0.0, sgx = 0.0;
    for (int n = 0; n < N; ++n) {
      const std::size_t base = in.index(n, c, 0, 0, 0);
      const Real* x = in.data.data() + base;
      const Real* g = grad_out.data.data() + base;
      for (std::size_t i = 0; i < S; ++i) {
        sg += g[i];
        sgx += g[i] * ((x[i] - mean) * inv_std);
      }
    }
    if (want_params) {
      grad_gamma[c] = static_cast<Real>(sgx);
      grad_beta[c] = static_cast<Real>(sg);
    }
    if (!grad_in) return;
    const double gm = gamma[c];
    for (int n = 0; n < N; ++n) {
      const std::size_t base = in.index(n, c, 0, 0, 0);
      const Real* x = in.data.data() + base;
      const Real* g = grad_out.data.data() + base;
      Real* dx = grad_in->data.data() + base;
      if (used_batch_stats) {
        const double scale = gm * inv_std / M;
        for (std::size_t i = 0; i < S; ++i) {
          const double xhat = (x[i] - mean) * inv_std;
          dx[i] = static_cast<Real>(scale * (M * g[i] - sg - xhat * sgx));
        }
      } else {
        const double scale = gm * inv_std;
        for (std::size_t i = 0; i < S; ++i) dx[i] = static_cast<Real>(scale * g[i]);
      }
    }
  });
}

template <typename Real>
void dense_forward(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias,
                   int out_dim, Tensor<Real>& out) {
  const std::size_t F = in.sample_size();
  if (weights.size() != F * static_cast<std::size_t>(out_dim) || bias.size() != static_cast<std::size_t>(out_dim))
    throw ShapeError("dense: input " + to_string(in.shape) + " does not match weights");
  out.reset({in.n(), out_dim, 1, 1, 1});
  parallel_for_each(static_cast<std::size_t>(in.n()), [&](std::size_t n) {
    const Real* x = in.sample(static_cast<int>(n));
    for (int o = 0; o < out_dim; ++o) {
      const Real* w = weights.data() + static_cast<std::size_t>(o) * F;
      Real s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t i = 0; i < F; ++i) s += w[i] * x[i];
      out.data[n * out_dim + o] = s + bias[o];
    }
  });
}

template <typename Real>
void dense_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& grad_out,
                    Tensor<Real>* grad_in, std::span<Real> grad_weights, std::span<Real> grad_bias) {
  const int N = in.n();
  const std::size_t F = in.sample_size();
  const int O = grad_out.c();
  const bool want_params = !grad_weights.empty();
  if (grad_out.n() != N || weights.size() != F * O ||
      (want_params && (grad_weights.size() != weights.size() || grad_bias.size() != static_cast<std::size_t>(O))))
    throw ShapeError("dense backward: shape mismatch");

  // Rows of the weight gradient are independent; parallel over outputs.
  if (want_params) parallel_for(static_cast<std::size_t>(O), 8, [&](std::size_t ob, std::size_t oe) {
    for (std::size_t o = ob; o < oe; ++o) {
      Real* __restrict gw = grad_weights.data() + o * F;
      std::fill(gw, gw + F, Real(0));
      double gb = 0.0;
      for (int n = 0; n < N; ++n) {
        const Real g = grad_out.data[static_cast<std::size_t>(n) * O + o];
        gb += g;
        if (g == Real(0)) continue;
        const Real* __restrict x = in.sample(n);
        for (std::size_t i = 0; i < F; ++i) gw[i] += g * x[i];
      }
      grad_bias[o] = static_cast<Real>(gb);
    }
  });

  if (!grad_in) return;
  grad_in->reset(in.shape);
  parallel_for_each(static_cast<std::size_t>(N), [&](std::size_t n) {
    Real* __restrict dx = grad_in->sample(static_cast<int>(n));
    for (int o = 0; o < O; ++o) {
      const Real g = grad_out.data[n * O + o];
      if (g == Real(0)) continue;
      const Real* __restrict w = weights.data() + static_cast<std::size_t>(o) * F;
      for (std::size_t i = 0; i < F; ++i) dx[i] += g * w[i];
    }
  });
}

template <typename Real>
void sigmoid_forward(const Tensor<Real>& in, Tensor<Real>& out) {
  out.shape = in.shape;
  out.data.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Real x = in.data[i];
    if (x >= Real(0)) {
      out.data[i] = Real(1) / (Real(1) + std::exp(-x));
    } else {
      const Real e = std::exp(x);
      out.data[i] = e / (Real(1) + e);
    }
  }
}

template <typename Real>
void sigmoid_backward(const Tensor<Real>& out, const Tensor<Real>& grad_out, Tensor<Real>& grad_in) {
  if (grad_out.shape != out.shape) throw ShapeError("sigmoid backward: shape mismatch");
  grad_in.shape = out.shape;
  grad_in.data.resize(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real y = out.data[i];
    grad_in.data[i] = grad_out.data[i] * y * (Real(1) - y);
  }
}

BceResult bce_loss(double y, int label) {
  const double yc = std::clamp(y, kBceClamp, 1.0 - kBceClamp);
  const double t = label ? 1.0 : 0.0;
  BceResult r;
  r.loss = -(t * std::log(yc) + (1.0 - t) * std::log(1.0 - yc));
  r.grad = -t / yc + (1.0 - t) / (1.0 - yc);
  return r;
}

#define DFMCAM_INSTANTIATE(R)                                                                                  \
  template void conv3d_forward<R>(const Tensor<R>&, std::span<const R>, std::span<const R>,                   \
                                  const Conv3dGeometry&, Tensor<R>&);                                          \
  template void conv3d_forward_reference<R>(const Tensor<R>&, std::span<const R>, std::span<const R>,         \
                                            const Conv3dGeometry&, Tensor<R>&);                                \
  template void conv3d_backward<R>(const Tensor<R>&, std::span<const R>, const Tensor<R>&,                    \
                                   const Conv3dGeometry&, Tensor<R>*, std::span<R>, std::span<R>);             \
  template void relu_forward<R>(const Tensor<R>&, Tensor<R>&);                                                 \
  template void relu_backward<R>(const Tensor<R>&, const Tensor<R>&, Tensor<R>&);                              \
  template void maxpool3d_forward<R>(const Tensor<R>&, Tensor<R>&, std::vector<std::int64_t>&);                \
  template void maxpool3d_backward<R>(const Tensor<R>&, const std::vector<std::int64_t>&, const Shape5&,       \
                                      Tensor<R>&);                                                             \
  template void batchnorm_forward<R>(const Tensor<R>&, std::span<const R>, std::span<const R>,                 \
                                     std::span<const R>, std::span<const R>, double, bool, Tensor<R>&,         \
                                     BatchNormStats&);                                                         \
  template void batchnorm_update_running<R>(const BatchNormStats&, double, std::span<R>, std::span<R>);        \
  template void batchnorm_backward<R>(const Tensor<R>&, std::span<const R>, const BatchNormStats&, bool,       \
                                      const Tensor<R>&, Tensor<R>*, std::span<R>, std::span<R>);               \
  template void dense_forward<R>(const Tensor<R>&, std::span<const R>, std::span<const R>, int, Tensor<R>&);   \
  template void dense_backward<R>(const Tensor<R>&, std::span<const R>, const Tensor<R>&, Tensor<R>*,          \
                                  std::span<R>, std::span<R>);                                                 \
  template void sigmoid_forward<R>(const Tensor<R>&, Tensor<R>&);                                              \
  template void sigmoid_backward<R>(const Tensor<R>&, const Tensor<R>&, Tensor<R>&);

DFMCAM_INSTANTIATE(float)
DFMCAM_INSTANTIATE(double)

#undef DFMCAM_INSTANTIATE

}  // namespace dfmcam
