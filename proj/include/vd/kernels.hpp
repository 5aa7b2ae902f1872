#pragma once

// Inner loops behind the autodiff ops. The default entry points are the
// OpenMP/GEMM-backed kernels used everywhere; `reference::` keeps the plain
// serial loops they are tested and benchmarked against.
//
// All backward kernels accumulate into their output buffers.

#include <span>

namespace vd::kernels {

struct ConvGeometry {
  int in_c = 0;
  int in_h = 0;
  int in_w = 0;
  int out_c = 0;
  int k = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - k) / stride + 1; }
  int patch() const { return in_c * k * k; }
};

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_kernel);

void bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                      std::span<const double> input, std::span<double> out);
void bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                       std::span<const double> grad_out, std::span<double> grad_in);

// Worker count the parallel kernels will use (1 without OpenMP).
int max_threads();

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_in);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_kernel);
void bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                      std::span<const double> input, std::span<double> out);
void bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                       std::span<const double> grad_out, std::span<double> grad_in);

}  // namespace reference
}  // namespace vd::kernels
