#include "vd/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vd::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool is_pointwise(const ConvGeometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

// col has patch() rows and out_h*out_w columns.
void im2col(const ConvGeometry& g, const double* input, double* col) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int rows = g.patch();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (g.k * g.k);
    const int ky = (r / g.k) % g.k;
    const int kx = r % g.k;
    const double* plane = input + static_cast<std::ptrdiff_t>(c) * g.in_h * g.in_w;
    double* dst = col + static_cast<std::ptrdiff_t>(r) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride - g.pad + ky;
      double* row = dst + static_cast<std::ptrdiff_t>(y) * ow;
      if (iy < 0 || iy >= g.in_h) {
        std::fill(row, row + ow, 0.0);
        continue;
      }
      const double* src = plane + static_cast<std::ptrdiff_t>(iy) * g.in_w;
      for (int x = 0; x < ow; ++x) {
        const int ix = x * g.stride - g.pad + kx;
        row[x] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
      }
    }
  }
}

// Scatter-add of a column buffer back onto the input grid. Each channel owns
// a disjoint block of rows, so channels run in parallel without races.
void col2im_add(const ConvGeometry& g, const double* col, double* grad_in) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int kk = g.k * g.k;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_c; ++c) {
    double* plane = grad_in + static_cast<std::ptrdiff_t>(c) * g.in_h * g.in_w;
    for (int t = 0; t < kk; ++t) {
      const int ky = t / g.k;
      const int kx = t % g.k;
      const double* src = col + static_cast<std::ptrdiff_t>(c * kk + t) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const int iy = y * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        double* dst = plane + static_cast<std::ptrdiff_t>(iy) * g.in_w;
        const double* row = src + static_cast<std::ptrdiff_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
          const int ix = x * g.stride - g.pad + kx;
          if (ix >= 0 && ix < g.in_w) dst[ix] += row[x];
        }
      }
    }
  }
}

struct BilinearTap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<BilinearTap> bilinear_taps(int in, int out) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<double> out) {
  const int p = g.out_h() * g.out_w();
  ConstMap w(kernel.data(), g.out_c, g.patch());
  MutMap o(out.data(), g.out_c, p);
  if (is_pointwise(g)) {
    o.noalias() = w * ConstMap(input.data(), g.in_c, p);
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(g.patch()) * p);
  im2col(g, input.data(), col.data());
  o.noalias() = w * ConstMap(col.data(), g.patch(), p);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in) {
  const int p = g.out_h() * g.out_w();
  ConstMap w(kernel.data(), g.out_c, g.patch());
  ConstMap go(grad_out.data(), g.out_c, p);
  if (is_pointwise(g)) {
    MutMap(grad_in.data(), g.in_c, p).noalias() += w.transpose() * go;
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(g.patch()) * p);
  MutMap(col.data(), g.patch(), p).noalias() = w.transpose() * go;
  col2im_add(g, col.data(), grad_in.data());
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_kernel) {
  const int p = g.out_h() * g.out_w();
  ConstMap go(grad_out.data(), g.out_c, p);
  MutMap gw(grad_kernel.data(), g.out_c, g.patch());
  if (is_pointwise(g)) {
    gw.noalias() += go * ConstMap(input.data(), g.in_c, p).transpose();
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(g.patch()) * p);
  im2col(g, input.data(), col.data());
  gw.noalias() += go * ConstMap(col.data(), g.patch(), p).transpose();
}

void bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                      std::span<const double> input, std::span<double> out) {
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* src = input.data() + static_cast<std::ptrdiff_t>(c) * in_h * in_w;
    double* dst = out.data() + static_cast<std::ptrdiff_t>(c) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const auto& vy = ty[static_cast<std::size_t>(y)];
      const double* r0 = src + static_cast<std::ptrdiff_t>(vy.i0) * in_w;
      const double* r1 = src + static_cast<std::ptrdiff_t>(vy.i1) * in_w;
      for (int x = 0; x < out_w; ++x) {
        const auto& vx = tx[static_cast<std::size_t>(x)];
        const double top = r0[vx.i0] * (1.0 - vx.w1) + r0[vx.i1] * vx.w1;
        const double bot = r1[vx.i0] * (1.0 - vx.w1) + r1[vx.i1] * vx.w1;
        dst[static_cast<std::ptrdiff_t>(y) * out_w + x] = top * (1.0 - vy.w1) + bot * vy.w1;
      }
    }
  }
}

void bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                       std::span<const double> grad_out, std::span<double> grad_in) {
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* go = grad_out.data() + static_cast<std::ptrdiff_t>(c) * out_h * out_w;
    double* gi = grad_in.data() + static_cast<std::ptrdiff_t>(c) * in_h * in_w;
    for (int y = 0; y < out_h; ++y) {
      const auto& vy = ty[static_cast<std::size_t>(y)];
      double* r0 = gi + static_cast<std::ptrdiff_t>(vy.i0) * in_w;
      double* r1 = gi + static_cast<std::ptrdiff_t>(vy.i1) * in_w;
      for (int x = 0; x < out_w; ++x) {
        const auto& vx = tx[static_cast<std::size_t>(x)];
        const double v = go[static_cast<std::ptrdiff_t>(y) * out_w + x];
        const double top = v * (1.0 - vy.w1);
        const double bot = v * vy.w1;
        r0[vx.i0] += top * (1.0 - vx.w1);
        r0[vx.i1] += top * vx.w1;
        r1[vx.i0] += bot * (1.0 - vx.w1);
        r1[vx.i1] += bot * vx.w1;
      }
    }
  }
}

namespace reference {
namespace {

double sample_tap(double src_coord, int in, int* i0, int* i1) {
  double s = src_coord < 0.0 ? 0.0 : src_coord;
  *i0 = std::min(static_cast<int>(std::floor(s)), in - 1);
  *i1 = std::min(*i0 + 1, in - 1);
  return s - *i0;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<double> out) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int o = 0; o < g.out_c; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int c = 0; c < g.in_c; ++c) {
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = y * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = x * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              acc += input[(static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w + ix] *
                     kernel[((static_cast<std::size_t>(o) * g.in_c + c) * g.k + ky) * g.k + kx];
            }
          }
        }
        out[(static_cast<std::size_t>(o) * oh + y) * ow + x] = acc;
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int o = 0; o < g.out_c; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double go = grad_out[(static_cast<std::size_t>(o) * oh + y) * ow + x];
        for (int c = 0; c < g.in_c; ++c) {
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = y * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = x * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              grad_in[(static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w + ix] +=
                  go * kernel[((static_cast<std::size_t>(o) * g.in_c + c) * g.k + ky) * g.k + kx];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_kernel) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int o = 0; o < g.out_c; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double go = grad_out[(static_cast<std::size_t>(o) * oh + y) * ow + x];
        for (int c = 0; c < g.in_c; ++c) {
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = y * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = x * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              grad_kernel[((static_cast<std::size_t>(o) * g.in_c + c) * g.k + ky) * g.k + kx] +=
                  go * input[(static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w + ix];
            }
          }
        }
      }
    }
  }
}

void bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                      std::span<const double> input, std::span<double> out) {
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      int y0, y1;
      const double wy = sample_tap((y + 0.5) * sy - 0.5, in_h, &y0, &y1);
      for (int x = 0; x < out_w; ++x) {
        int x0, x1;
        const double wx = sample_tap((x + 0.5) * sx - 0.5, in_w, &x0, &x1);
        auto at = [&](int yy, int xx) {
          return input[(static_cast<std::size_t>(c) * in_h + yy) * in_w + xx];
        };
        out[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] =
            (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
            wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
      }
    }
  }
}

void bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                       std::span<const double> grad_out, std::span<double> grad_in) {
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      int y0, y1;
      const double wy = sample_tap((y + 0.5) * sy - 0.5, in_h, &y0, &y1);
      for (int x = 0; x < out_w; ++x) {
        int x0, x1;
        const double wx = sample_tap((x + 0.5) * sx - 0.5, in_w, &x0, &x1);
        const double v = grad_out[(static_cast<std::size_t>(c) * out_h + y) * out_w + x];
        auto at = [&](int yy, int xx) -> double& {
          return grad_in[(static_cast<std::size_t>(c) * in_h + yy) * in_w + xx];
        };
        at(y0, x0) += v * (1 - wy) * (1 - wx);
        at(y0, x1) += v * (1 - wy) * wx;
        at(y1, x0) += v * wy * (1 - wx);
        at(y1, x1) += v * wy * wx;
      }
    }
  }
}

}  // namespace reference
}  // namespace vd::kernels
