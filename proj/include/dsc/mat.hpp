#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsc/errors.hpp"

namespace dsc {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 as context needs.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), d(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, double fill) : rows(r), cols(c), d(r * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return d[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return d[i * cols + j]; }
  std::size_t size() const { return d.size(); }

  double* row(std::size_t i) { return d.data() + i * cols; }
  const double* row(std::size_t i) const { return d.data() + i * cols; }
};

inline void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw DataError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                    std::to_string(b.cols) + ")");
  }
}

// C += A * B
inline void gemm_nn_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
    throw DataError("gemm_nn: shape mismatch (" + std::to_string(a.rows) + "x" +
                    std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                    std::to_string(b.cols) + " -> " + std::to_string(c.rows) + "x" +
                    std::to_string(c.cols) + ")");
  }
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T
inline void gemm_nt_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows) {
    throw DataError("gemm_nt: shape mismatch");
  }
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      crow[j] += s;
    }
  }
}

// C += A^T * B
inline void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
    throw DataError("gemm_tn: shape mismatch");
  }
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  gemm_nn_acc(a, b, c);
  return c;
}

inline Mat matmul_nt(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.rows);
  gemm_nt_acc(a, b, c);
  return c;
}

inline Mat matmul_tn(const Mat& a, const Mat& b) {
  Mat c(a.cols, b.cols);
  gemm_tn_acc(a, b, c);
  return c;
}

}  // namespace dsc
