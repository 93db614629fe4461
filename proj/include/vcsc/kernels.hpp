#pragma once

#include <cstddef>
#include <span>

namespace vcsc::kernels {

// Dense kernels used by the LSTM, linear and attention layers. Every kernel
// has a serial reference and an OpenMP variant. The OpenMP variants split
// work over output elements only, so each output is summed in the same order
// as the serial reference and results are bit-identical.
//
// Weight matrices are row-major (in x out).

namespace serial {
/// y[j] += sum_i x[i] * w[i, j]
void gemv_acc(std::span<const double> x, const double* w, std::size_t in, std::size_t out, std::span<double> y);
/// dx[i] += sum_j w[i, j] * dy[j]
void gemv_t_acc(std::span<const double> dy, const double* w, std::size_t in, std::size_t out, std::span<double> dx);
/// dw[i, j] += x[i] * dy[j]
void outer_acc(std::span<const double> x, std::span<const double> dy, double* dw);
}  // namespace serial

namespace omp {
void gemv_acc(std::span<const double> x, const double* w, std::size_t in, std::size_t out, std::span<double> y);
void gemv_t_acc(std::span<const double> dy, const double* w, std::size_t in, std::size_t out, std::span<double> dx);
void outer_acc(std::span<const double> x, std::span<const double> dy, double* dw);
}  // namespace omp

/// Matrices with fewer elements than this run serially; a parallel region
/// costs more than the whole product below it.
inline constexpr std::size_t kParallelThreshold = 1 << 17;

/// Dispatching entry points used by the layers.
void gemv_acc(std::span<const double> x, const double* w, std::size_t in, std::size_t out, std::span<double> y);
void gemv_t_acc(std::span<const double> dy, const double* w, std::size_t in, std::size_t out, std::span<double> dx);
void outer_acc(std::span<const double> x, std::span<const double> dy, double* dw);

double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace vcsc::kernels
