#include "vcsc/kernels.hpp"

#include <algorithm>

#include <omp.h>

namespace vcsc::kernels {

namespace serial {

void gemv_acc(std::span<const double> x, const double* w, std::size_t in, std::size_t out, std::span<double> y) {
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* row = w + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

void gemv_t_acc(std::span<const double> dy, const double* w, std::size_t in, std::size_t out, std::span<double> dx) {
  for (std::size_t i = 0; i < in; ++i) {
    const double* row = w + i * out;
    double s = 0.0;
    for (std::size_t j = 0; j < out; ++j) s += row[j] * dy[j];
    dx[i] += s;
  }
}

void outer_acc(std::span<const double> x, std::span<const double> dy, double* dw) {
  const std::size_t out = dy.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    double* row = dw + i * out;
    for (std::size_t j = 0; j < out; ++j) row[j] += xi * dy[j];
  }
}

}  // namespace serial

namespace omp {

namespace {
constexpr std::ptrdiff_t kColumnBlock = 64;
}

void gemv_acc(std::span<const double> x, const double* w, std::size_t in, std::size_t out, std::span<double> y) {
  const auto blocks = static_cast<std::ptrdiff_t>((out + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk * kColumnBlock);
    const std::size_t j1 = std::min(out, j0 + kColumnBlock);
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[i];
      const double* row = w + i * out;
      for (std::size_t j = j0; j < j1; ++j) y[j] += xi * row[j];
    }
  }
}

void gemv_t_acc(std::span<const double> dy, const double* w, std::size_t in, std::size_t out, std::span<double> dx) {
  const auto rows = static_cast<std::ptrdiff_t>(in);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* row = w + i * out;
    double s = 0.0;
    for (std::size_t j = 0; j < out; ++j) s += row[j] * dy[j];
    dx[i] += s;
  }
}

void outer_acc(std::span<const double> x, std::span<const double> dy, double* dw) {
  const std::size_t out = dy.size();
  const auto rows = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double xi = x[i];
    double* row = dw + i * out;
    for (std::size_t j = 0; j < out; ++j) row[j] += xi * dy[j];
  }
}

}  // namespace omp

namespace {

bool go_parallel(std::size_t elements) {
  return elements >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

void gemv_acc(std::span<const double> x, const double* w, std::size_t in, std::size_t out, std::span<double> y) {
  if (go_parallel(in * out)) {
    omp::gemv_acc(x, w, in, out, y);
  } else {
    serial::gemv_acc(x, w, in, out, y);
  }
}

void gemv_t_acc(std::span<const double> dy, const double* w, std::size_t in, std::size_t out, std::span<double> dx) {
  if (go_parallel(in * out)) {
    omp::gemv_t_acc(dy, w, in, out, dx);
  } else {
    serial::gemv_t_acc(dy, w, in, out, dx);
  }
}

void outer_acc(std::span<const double> x, std::span<const double> dy, double* dw) {
  if (go_parallel(x.size() * dy.size())) {
    omp::outer_acc(x, dy, dw);
  } else {
    serial::outer_acc(x, dy, dw);
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace vcsc::kernels
