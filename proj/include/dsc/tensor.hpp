#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dsc/mat.hpp"

namespace dsc {

// A 2-D tensor node. Scalars are 1x1, row vectors 1xN. grad is allocated on
// demand and accumulates across backward passes for requires_grad leaves.
struct Tensor {
  Mat v;
  Mat g;
  bool requires_grad = false;
  bool produced = false;
  std::string name;

  // transient adjoint buffer owned by the tape during backward
  Mat adj;
  std::uint64_t adj_epoch = 0;

  Tensor() = default;
  explicit Tensor(Mat value, bool rg = false, std::string n = "")
      : v(std::move(value)), requires_grad(rg), name(std::move(n)) {}

  std::size_t rows() const { return v.rows; }
  std::size_t cols() const { return v.cols; }
  std::vector<std::size_t> shape() const { return {v.rows, v.cols}; }
  bool has_grad() const { return g.size() == v.size() && g.size() > 0; }
  void ensure_grad() {
    if (!has_grad()) g = Mat(v.rows, v.cols);
  }
  void zero_grad() {
    if (has_grad()) std::fill(g.d.begin(), g.d.end(), 0.0);
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(Mat value, bool requires_grad = false, std::string name = "");
TensorPtr make_scalar(double value, bool requires_grad = false);

enum class OpKind {
  MatMul,
  MatMulNT,
  MatMulTN,
  Add,
  Sub,
  Mul,
  AddRow,
  MulRow,
  ScalarMul,
  Sigmoid,
  Tanh,
  ConcatRows,
  SliceRows,
  ReduceSum,
  ReduceMean,
  SquaredNorm,
  RowStandardize,
  ClusterQuadratic,
};

const char* op_name(OpKind k);

struct TapeEntry {
  OpKind kind;
  TensorPtr out;
  std::vector<TensorPtr> in;
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double scalar = 0.0;
  Mat ca;  // constant payload (e.g. memberships)
  Mat cb;  // constant payload (e.g. centroids)
};

// Records primitive ops and replays them in reverse for gradients. Confined
// to one thread; independent tapes never share tensors.
class Tape {
 public:
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);
  TensorPtr matmul_tn(const TensorPtr& a, const TensorPtr& b);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  // row vector broadcast over every row of a
  TensorPtr add_row(const TensorPtr& a, const TensorPtr& row);
  TensorPtr mul_row(const TensorPtr& a, const TensorPtr& row);
  TensorPtr scalar_mul(const TensorPtr& a, double c);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr slice_rows(const TensorPtr& a, std::size_t i0, std::size_t i1);
  TensorPtr reduce_sum(const TensorPtr& a);
  TensorPtr reduce_mean(const TensorPtr& a);
  TensorPtr squared_norm(const TensorPtr& a);
  // per row: (x - mean) / sqrt(popvar + eps)
  TensorPtr row_standardize(const TensorPtr& a, double eps);
  // mean over rows of sum_k u[t,k] * ||z_t - mu_k||^2; u, mu held constant
  TensorPtr cluster_quadratic(const TensorPtr& z, const Mat& u, const Mat& mu);

  // Populates gradients of requires_grad leaves reachable from loss.
  // Accumulates into existing leaf gradients on repeated calls.
  void backward(const TensorPtr& loss);

  std::size_t checkpoint() const { return entries_.size(); }
  void truncate(std::size_t mark);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  TensorPtr record(OpKind kind, Mat value, std::vector<TensorPtr> in);
  std::vector<TapeEntry> entries_;
  std::uint64_t epoch_ = 0;
};

double sigmoid_scalar(double x);

}  // namespace dsc
