#include "istanet/errors.hpp"
#include "istanet/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <memory>
#include <utility>
#include <vector>

namespace istanet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kTaps = 9;

struct ConvDims {
  std::size_t c_in, c_out, h, w;
};

ConvDims check_conv(const Tensor& input, const Tensor& filters) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d_same: input must be [C,H,W], got " + shape_string(input.shape()));
  }
  if (filters.rank() != 4 || filters.shape()[2] != 3 || filters.shape()[3] != 3) {
    throw ShapeError("conv2d_same: filters must be [C_out,C_in,3,3], got " +
                     shape_string(filters.shape()));
  }
  if (filters.shape()[1] != input.shape()[0]) {
    throw ShapeError("conv2d_same: filters expect " + std::to_string(filters.shape()[1]) +
                     " input channels, input has " + std::to_string(input.shape()[0]));
  }
  return {input.shape()[0], filters.shape()[0], input.shape()[1], input.shape()[2]};
}

// Zero-padded planes: row c holds the (H+2) x (W+2) grid of channel c, so a
// 3x3 tap becomes a constant offset along the row. Outputs are computed for
// one contiguous run of columns [first, first + span) that covers every
// interior pixel; the columns that land on padding are discarded.
struct Geometry {
  std::size_t h, w, pw, plane;
  std::ptrdiff_t first, span, span_vec;  // span rounded up to whole vectors
  std::ptrdiff_t offset[kTaps];

  Geometry(std::size_t h_, std::size_t w_, std::size_t lanes)
      : h(h_), w(w_), pw(w_ + 2), plane((h_ + 2) * (w_ + 2)) {
    first = static_cast<std::ptrdiff_t>(pw + 1);
    span = static_cast<std::ptrdiff_t>((h - 1) * pw + w);
    span_vec = (span + static_cast<std::ptrdiff_t>(lanes) - 1) / static_cast<std::ptrdiff_t>(lanes) *
               static_cast<std::ptrdiff_t>(lanes);
    for (std::size_t t = 0; t < kTaps; ++t) {
      offset[t] = (static_cast<std::ptrdiff_t>(t / 3) - 1) * static_cast<std::ptrdiff_t>(pw) +
                  static_cast<std::ptrdiff_t>(t % 3) - 1;
    }
  }
  // Row stride with slack so whole-vector reads past the last column stay in bounds.
  std::size_t stride(std::size_t lanes) const { return plane + lanes; }
};

struct Planes {
  std::vector<double, Eigen::aligned_allocator<double>> data;
  std::size_t rows = 0, stride = 0;

  double* row(std::size_t r) { return data.data() + r * stride; }
  const double* row(std::size_t r) const { return data.data() + r * stride; }
};

// GCC/Clang vector extension; the compiler picks the widest registers the
// target offers and splits otherwise.
using Vec = double __attribute__((vector_size(64)));
constexpr std::size_t kLanes = sizeof(Vec) / sizeof(double);
constexpr std::size_t kBlock = 16; // output channels accumulated together

Planes pad(const double* in, std::size_t channels, const Geometry& g) {
  Planes p;
  p.rows = channels;
  p.stride = g.stride(kLanes);
  p.data.assign(channels * p.stride, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in + c * g.h * g.w;
    double* dst = p.row(c);
    for (std::size_t y = 0; y < g.h; ++y) {
      std::copy(src + y * g.w, src + (y + 1) * g.w, dst + (y + 1) * g.pw + 1);
    }
  }
  return p;
}

// out[o, q] = sum_{i,t} wk[(i*9 + t)*c_out + o] * in[i, first + q + offset[t]]
// for q in [0, span_vec); `out` rows are span_vec long.
template <std::size_t B>
void conv_block(const Planes& in, const double* wk, std::size_t c_out, std::size_t o0,
                const Geometry& g, double* out) {
  for (std::ptrdiff_t q = 0; q < g.span_vec; q += static_cast<std::ptrdiff_t>(kLanes)) {
    Vec acc[B] = {};
    for (std::size_t i = 0; i < in.rows; ++i) {
      const double* base = in.row(i) + g.first + q;
      const double* w = wk + i * kTaps * c_out + o0;
      for (std::size_t t = 0; t < kTaps; ++t, w += c_out) {
        Vec x;
        std::memcpy(&x, base + g.offset[t], sizeof(Vec));
        for (std::size_t b = 0; b < B; ++b) acc[b] += w[b] * x;
      }
    }
    for (std::size_t b = 0; b < B; ++b) {
      std::memcpy(out + (o0 + b) * static_cast<std::size_t>(g.span_vec) + static_cast<std::size_t>(q), &acc[b],
                  sizeof(Vec));
    }
  }
}

template <std::size_t... Bs>
void conv_tail(std::size_t rem, const Planes& in, const double* wk, std::size_t c_out, std::size_t o0,
               const Geometry& g, double* out, std::index_sequence<Bs...>) {
  ((rem == Bs + 1 ? conv_block<Bs + 1>(in, wk, c_out, o0, g, out) : void()), ...);
}

// Full conv over padded planes into a [c_out, span_vec] buffer.
std::vector<double> direct_conv(const Planes& in, const double* wk, std::size_t c_out, const Geometry& g) {
  std::vector<double> out(c_out * static_cast<std::size_t>(g.span_vec));
  std::size_t o = 0;
  for (; o + kBlock <= c_out; o += kBlock) conv_block<kBlock>(in, wk, c_out, o, g, out.data());
  if (o < c_out) {
    conv_tail(c_out - o, in, wk, c_out, o, g, out.data(), std::make_index_sequence<kBlock - 1>{});
  }
  return out;
}

// Copies (or adds) the interior pixels of a [channels, span_vec] buffer.
void unpad(const std::vector<double>& buf, std::size_t channels, const Geometry& g, double* out,
           bool accumulate) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = buf.data() + c * static_cast<std::size_t>(g.span_vec);
    double* dst = out + c * g.h * g.w;
    for (std::size_t y = 0; y < g.h; ++y) {
      const double* s = src + y * g.pw;
      double* d = dst + y * g.w;
      if (accumulate) {
        for (std::size_t x = 0; x < g.w; ++x) d[x] += s[x];
      } else {
        std::copy(s, s + g.w, d);
      }
    }
  }
}

// [C_out, C_in, 3, 3] -> [C_in, 9, C_out] for the forward kernel.
std::vector<double> forward_weights(const double* f, const ConvDims& d) {
  std::vector<double> wk(d.c_out * d.c_in * kTaps);
  for (std::size_t o = 0; o < d.c_out; ++o)
    for (std::size_t i = 0; i < d.c_in; ++i)
      for (std::size_t t = 0; t < kTaps; ++t) wk[(i * kTaps + t) * d.c_out + o] = f[(o * d.c_in + i) * kTaps + t];
  return wk;
}

// The input gradient is a conv of the output gradient with channel-swapped,
// spatially flipped filters: [C_out, 9, C_in] with tap t reading 8 - t.
std::vector<double> adjoint_weights(const double* f, const ConvDims& d) {
  std::vector<double> wk(d.c_out * d.c_in * kTaps);
  for (std::size_t o = 0; o < d.c_out; ++o)
    for (std::size_t i = 0; i < d.c_in; ++i)
      for (std::size_t t = 0; t < kTaps; ++t)
        wk[(o * kTaps + t) * d.c_in + i] = f[(o * d.c_in + i) * kTaps + (kTaps - 1 - t)];
  return wk;
}

using StridedRows = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using TapMatrix = Eigen::Map<RowMatrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

}  // namespace

Tensor kernels::conv2d_same(const Tensor& input, const Tensor& filters) {
  const ConvDims d = check_conv(input, filters);
  const Geometry g(d.h, d.w, kLanes);
  const Planes xp = pad(input.data(), d.c_in, g);
  Tensor out({d.c_out, d.h, d.w});
  unpad(direct_conv(xp, forward_weights(filters.data(), d).data(), d.c_out, g), d.c_out, g, out.data(), false);
  return out;
}

Var conv2d_same(Var input, Var filters) {
  if (!input.valid() || !filters.valid()) throw ContractError("conv2d_same on an unbound Var");
  const ConvDims d = check_conv(input.value(), filters.value());
  const Geometry g(d.h, d.w, kLanes);
  auto xp = std::make_shared<Planes>(pad(input.value().data(), d.c_in, g));
  Tensor out({d.c_out, d.h, d.w});
  unpad(direct_conv(*xp, forward_weights(filters.value().data(), d).data(), d.c_out, g), d.c_out, g,
        out.data(), false);

  Tape& tape = *input.tape();
  // The padded input is only needed for the filter gradient.
  if (!filters.requires_grad() || !tape.recording()) xp.reset();

  return tape.push(std::move(out), {input, filters}, [input, filters, d, g, xp](Tape& t, const Tensor& grad) {
    const Planes gp = pad(grad.data(), d.c_out, g);
    if (filters.requires_grad()) {
      // dW[o, i, t] = sum_q grad[o, q] * x[i, q + offset[t]] over the interior run.
      const StridedRows gm(gp.row(0) + g.first, static_cast<Eigen::Index>(d.c_out), g.span,
                           Eigen::OuterStride<>(static_cast<Eigen::Index>(gp.stride)));
      double* gw = t.grad_buffer(filters).data();
      for (std::size_t tap = 0; tap < kTaps; ++tap) {
        const StridedRows xm(xp->row(0) + g.first + g.offset[tap], static_cast<Eigen::Index>(d.c_in), g.span,
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(xp->stride)));
        TapMatrix gt(gw + tap, static_cast<Eigen::Index>(d.c_out), static_cast<Eigen::Index>(d.c_in),
                     Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(static_cast<Eigen::Index>(d.c_in * kTaps),
                                                                   static_cast<Eigen::Index>(kTaps)));
        gt.noalias() += gm * xm.transpose();
      }
    }
    if (input.requires_grad()) {
      const std::vector<double> gin =
          direct_conv(gp, adjoint_weights(filters.value().data(), d).data(), d.c_in, g);
      unpad(gin, d.c_in, g, t.grad_buffer(input).data(), true);
    }
  });
}

}  // namespace istanet
