#include "dsc/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace dsc {

TensorPtr make_tensor(Mat value, bool requires_grad, std::string name) {
  return std::make_shared<Tensor>(std::move(value), requires_grad, std::move(name));
}

TensorPtr make_scalar(double value, bool requires_grad) {
  Mat m(1, 1);
  m.d[0] = value;
  return make_tensor(std::move(m), requires_grad);
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::MatMulTN: return "matmul_tn";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddRow: return "add_row";
    case OpKind::MulRow: return "mul_row";
    case OpKind::ScalarMul: return "scalar_mul";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::ReduceSum: return "reduce_sum";
    case OpKind::ReduceMean: return "reduce_mean";
    case OpKind::SquaredNorm: return "squared_norm";
    case OpKind::RowStandardize: return "row_standardize";
    case OpKind::ClusterQuadratic: return "cluster_quadratic";
  }
  return "unknown";
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

std::string dim_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

[[noreturn]] void shape_fail(OpKind k, const std::string& detail) {
  throw DataError(std::string(op_name(k)) + ": " + detail);
}

void require_same_shape(OpKind k, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail(k, "operands " + dim_str(a) + " vs " + dim_str(b));
  }
}

// Zeroed (or epoch-fresh) adjoint buffer for t.
Mat& adj_of(Tensor& t, std::uint64_t epoch) {
  if (t.adj_epoch != epoch) {
    if (t.adj.rows != t.v.rows || t.adj.cols != t.v.cols) {
      t.adj = Mat(t.v.rows, t.v.cols);
    } else {
      std::fill(t.adj.d.begin(), t.adj.d.end(), 0.0);
    }
    t.adj_epoch = epoch;
  }
  return t.adj;
}

// Where t's gradient contributions accumulate; nullptr if t needs none.
Mat* grad_sink(Tensor& t, std::uint64_t epoch) {
  if (t.produced) return &adj_of(t, epoch);
  if (!t.requires_grad) return nullptr;
  t.ensure_grad();
  return &t.g;
}

}  // namespace

TensorPtr Tape::record(OpKind kind, Mat value, std::vector<TensorPtr> in) {
  TensorPtr out = make_tensor(std::move(value));
  out->produced = true;
  entries_.push_back(TapeEntry{kind, out, std::move(in), 0, 0, 0.0, {}, {}});
  return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->cols() != b->rows()) {
    shape_fail(OpKind::MatMul, dim_str(*a) + " * " + dim_str(*b) + " (inner dims differ)");
  }
  Mat c(a->rows(), b->cols());
  gemm_nn_acc(a->v, b->v, c);
  return record(OpKind::MatMul, std::move(c), {a, b});
}

TensorPtr Tape::matmul_nt(const TensorPtr& a, const TensorPtr& b) {
  if (a->cols() != b->cols()) {
    shape_fail(OpKind::MatMulNT, dim_str(*a) + " * " + dim_str(*b) + "^T (inner dims differ)");
  }
  Mat c(a->rows(), b->rows());
  gemm_nt_acc(a->v, b->v, c);
  return record(OpKind::MatMulNT, std::move(c), {a, b});
}

TensorPtr Tape::matmul_tn(const TensorPtr& a, const TensorPtr& b) {
  if (a->rows() != b->rows()) {
    shape_fail(OpKind::MatMulTN, dim_str(*a) + "^T * " + dim_str(*b) + " (inner dims differ)");
  }
  Mat c(a->cols(), b->cols());
  gemm_tn_acc(a->v, b->v, c);
  return record(OpKind::MatMulTN, std::move(c), {a, b});
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(OpKind::Add, *a, *b);
  Mat c = a->v;
  for (std::size_t i = 0; i < c.size(); ++i) c.d[i] += b->v.d[i];
  return record(OpKind::Add, std::move(c), {a, b});
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(OpKind::Sub, *a, *b);
  Mat c = a->v;
  for (std::size_t i = 0; i < c.size(); ++i) c.d[i] -= b->v.d[i];
  return record(OpKind::Sub, std::move(c), {a, b});
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(OpKind::Mul, *a, *b);
  Mat c = a->v;
  for (std::size_t i = 0; i < c.size(); ++i) c.d[i] *= b->v.d[i];
  return record(OpKind::Mul, std::move(c), {a, b});
}

TensorPtr Tape::add_row(const TensorPtr& a, const TensorPtr& row) {
  if (row->rows() != 1 || row->cols() != a->cols()) {
    shape_fail(OpKind::AddRow, "matrix " + dim_str(*a) + " with row " + dim_str(*row));
  }
  Mat c = a->v;
  for (std::size_t i = 0; i < c.rows; ++i) {
    double* cr = c.row(i);
    for (std::size_t j = 0; j < c.cols; ++j) cr[j] += row->v.d[j];
  }
  return record(OpKind::AddRow, std::move(c), {a, row});
}

TensorPtr Tape::mul_row(const TensorPtr& a, const TensorPtr& row) {
  if (row->rows() != 1 || row->cols() != a->cols()) {
    shape_fail(OpKind::MulRow, "matrix " + dim_str(*a) + " with row " + dim_str(*row));
  }
  Mat c = a->v;
  for (std::size_t i = 0; i < c.rows; ++i) {
    double* cr = c.row(i);
    for (std::size_t j = 0; j < c.cols; ++j) cr[j] *= row->v.d[j];
  }
  return record(OpKind::MulRow, std::move(c), {a, row});
}

TensorPtr Tape::scalar_mul(const TensorPtr& a, double c) {
  Mat out = a->v;
  for (double& x : out.d) x *= c;
  TensorPtr t = record(OpKind::ScalarMul, std::move(out), {a});
  entries_.back().scalar = c;
  return t;
}

TensorPtr Tape::sigmoid(const TensorPtr& a) {
  Mat c(a->rows(), a->cols());
  for (std::size_t i = 0; i < c.size(); ++i) c.d[i] = sigmoid_scalar(a->v.d[i]);
  return record(OpKind::Sigmoid, std::move(c), {a});
}

TensorPtr Tape::tanh(const TensorPtr& a) {
  Mat c(a->rows(), a->cols());
  for (std::size_t i = 0; i < c.size(); ++i) c.d[i] = std::tanh(a->v.d[i]);
  return record(OpKind::Tanh, std::move(c), {a});
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) shape_fail(OpKind::ConcatRows, "no operands");
  std::size_t rows = 0;
  const std::size_t cols = parts[0]->cols();
  for (const auto& p : parts) {
    if (p->cols() != cols) {
      shape_fail(OpKind::ConcatRows, "operand " + dim_str(*p) + " expected " +
                                         std::to_string(cols) + " columns");
    }
    rows += p->rows();
  }
  Mat c(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->v.d.begin(), p->v.d.end(), c.d.begin() + off);
    off += p->v.size();
  }
  return record(OpKind::ConcatRows, std::move(c), parts);
}

TensorPtr Tape::slice_rows(const TensorPtr& a, std::size_t i0, std::size_t i1) {
  if (i0 >= i1 || i1 > a->rows()) {
    shape_fail(OpKind::SliceRows, "rows [" + std::to_string(i0) + "," + std::to_string(i1) +
                                      ") of " + dim_str(*a));
  }
  Mat c(i1 - i0, a->cols());
  std::copy(a->v.row(i0), a->v.row(i0) + c.size(), c.d.begin());
  TensorPtr t = record(OpKind::SliceRows, std::move(c), {a});
  entries_.back().i0 = i0;
  entries_.back().i1 = i1;
  return t;
}

TensorPtr Tape::reduce_sum(const TensorPtr& a) {
  double s = 0.0;
  for (double x : a->v.d) s += x;
  Mat c(1, 1);
  c.d[0] = s;
  return record(OpKind::ReduceSum, std::move(c), {a});
}

TensorPtr Tape::reduce_mean(const TensorPtr& a) {
  if (a->v.size() == 0) shape_fail(OpKind::ReduceMean, "empty operand");
  double s = 0.0;
  for (double x : a->v.d) s += x;
  Mat c(1, 1);
  c.d[0] = s / static_cast<double>(a->v.size());
  return record(OpKind::ReduceMean, std::move(c), {a});
}

TensorPtr Tape::squared_norm(const TensorPtr& a) {
  double s = 0.0;
  for (double x : a->v.d) s += x * x;
  Mat c(1, 1);
  c.d[0] = s;
  return record(OpKind::SquaredNorm, std::move(c), {a});
}

TensorPtr Tape::row_standardize(const TensorPtr& a, double eps) {
  if (a->cols() == 0) shape_fail(OpKind::RowStandardize, "empty rows in " + dim_str(*a));
  Mat c(a->rows(), a->cols());
  const double n = static_cast<double>(a->cols());
  for (std::size_t i = 0; i < a->rows(); ++i) {
    const double* x = a->v.row(i);
    double m = 0.0;
    for (std::size_t j = 0; j < a->cols(); ++j) m += x[j];
    m /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < a->cols(); ++j) var += (x[j] - m) * (x[j] - m);
    var /= n;
    const double s = std::sqrt(var + eps);
    double* y = c.row(i);
    for (std::size_t j = 0; j < a->cols(); ++j) y[j] = (x[j] - m) / s;
  }
  TensorPtr t = record(OpKind::RowStandardize, std::move(c), {a});
  entries_.back().scalar = eps;
  return t;
}

TensorPtr Tape::cluster_quadratic(const TensorPtr& z, const Mat& u, const Mat& mu) {
  if (u.rows != z->rows() || u.cols != mu.rows || mu.cols != z->cols()) {
    shape_fail(OpKind::ClusterQuadratic,
               "points " + dim_str(*z) + ", memberships " + std::to_string(u.rows) + "x" +
                   std::to_string(u.cols) + ", centroids " + std::to_string(mu.rows) + "x" +
                   std::to_string(mu.cols));
  }
  const std::size_t n = z->rows(), k = mu.rows, d = z->cols();
  double acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double* zt = z->v.row(t);
    for (std::size_t c = 0; c < k; ++c) {
      const double* mc = mu.row(c);
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = zt[j] - mc[j];
        q += diff * diff;
      }
      acc += u.at(t, c) * q;
    }
  }
  Mat out(1, 1);
  out.d[0] = acc / static_cast<double>(n);
  TensorPtr t = record(OpKind::ClusterQuadratic, std::move(out), {z});
  entries_.back().ca = u;
  entries_.back().cb = mu;
  return t;
}

void Tape::truncate(std::size_t mark) {
  if (mark > entries_.size()) {
    throw DataError("tape truncate: mark " + std::to_string(mark) + " beyond size " +
                    std::to_string(entries_.size()));
  }
  entries_.resize(mark);
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->rows() != 1 || loss->cols() != 1) {
    throw DataError("backward: loss must be a 1x1 scalar, got " + dim_str(*loss));
  }
  ++epoch_;
  if (loss->produced) {
    adj_of(*loss, epoch_).d[0] = 1.0;
  } else {
    if (loss->requires_grad) {
      loss->ensure_grad();
      loss->g.d[0] += 1.0;
    }
    return;
  }

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    TapeEntry& e = *it;
    Tensor& out = *e.out;
    if (out.adj_epoch != epoch_) continue;
    const Mat& go = out.adj;

    switch (e.kind) {
      case OpKind::MatMul: {
        Tensor& a = *e.in[0];
        Tensor& b = *e.in[1];
        if (Mat* s = grad_sink(a, epoch_)) gemm_nt_acc(go, b.v, *s);
        if (Mat* s = grad_sink(b, epoch_)) gemm_tn_acc(a.v, go, *s);
        break;
      }
      case OpKind::MatMulNT: {
        Tensor& a = *e.in[0];
        Tensor& b = *e.in[1];
        if (Mat* s = grad_sink(a, epoch_)) gemm_nn_acc(go, b.v, *s);
        if (Mat* s = grad_sink(b, epoch_)) gemm_tn_acc(go, a.v, *s);
        break;
      }
      case OpKind::MatMulTN: {
        Tensor& a = *e.in[0];
        Tensor& b = *e.in[1];
        if (Mat* s = grad_sink(a, epoch_)) gemm_nt_acc(b.v, go, *s);
        if (Mat* s = grad_sink(b, epoch_)) gemm_nn_acc(a.v, go, *s);
        break;
      }
      case OpKind::Add: {
        for (int which = 0; which < 2; ++which) {
          if (Mat* s = grad_sink(*e.in[which], epoch_)) {
            for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += go.d[i];
          }
        }
        break;
      }
      case OpKind::Sub: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += go.d[i];
        }
        if (Mat* s = grad_sink(*e.in[1], epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] -= go.d[i];
        }
        break;
      }
      case OpKind::Mul: {
        Tensor& a = *e.in[0];
        Tensor& b = *e.in[1];
        if (Mat* s = grad_sink(a, epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += go.d[i] * b.v.d[i];
        }
        if (Mat* s = grad_sink(b, epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += go.d[i] * a.v.d[i];
        }
        break;
      }
      case OpKind::AddRow: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += go.d[i];
        }
        if (Mat* s = grad_sink(*e.in[1], epoch_)) {
          for (std::size_t i = 0; i < go.rows; ++i) {
            const double* gr = go.row(i);
            for (std::size_t j = 0; j < go.cols; ++j) s->d[j] += gr[j];
          }
        }
        break;
      }
      case OpKind::MulRow: {
        Tensor& a = *e.in[0];
        Tensor& r = *e.in[1];
        if (Mat* s = grad_sink(a, epoch_)) {
          for (std::size_t i = 0; i < go.rows; ++i) {
            const double* gr = go.row(i);
            double* sr = s->row(i);
            for (std::size_t j = 0; j < go.cols; ++j) sr[j] += gr[j] * r.v.d[j];
          }
        }
        if (Mat* s = grad_sink(r, epoch_)) {
          for (std::size_t i = 0; i < go.rows; ++i) {
            const double* gr = go.row(i);
            const double* ar = a.v.row(i);
            for (std::size_t j = 0; j < go.cols; ++j) s->d[j] += gr[j] * ar[j];
          }
        }
        break;
      }
      case OpKind::ScalarMul: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += e.scalar * go.d[i];
        }
        break;
      }
      case OpKind::Sigmoid: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) {
            const double y = out.v.d[i];
            s->d[i] += go.d[i] * y * (1.0 - y);
          }
        }
        break;
      }
      case OpKind::Tanh: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          for (std::size_t i = 0; i < s->size(); ++i) {
            const double y = out.v.d[i];
            s->d[i] += go.d[i] * (1.0 - y * y);
          }
        }
        break;
      }
      case OpKind::ConcatRows: {
        std::size_t off = 0;
        for (auto& part : e.in) {
          const std::size_t len = part->v.size();
          if (Mat* s = grad_sink(*part, epoch_)) {
            for (std::size_t i = 0; i < len; ++i) s->d[i] += go.d[off + i];
          }
          off += len;
        }
        break;
      }
      case OpKind::SliceRows: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          const std::size_t base = e.i0 * s->cols;
          for (std::size_t i = 0; i < go.size(); ++i) s->d[base + i] += go.d[i];
        }
        break;
      }
      case OpKind::ReduceSum: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          const double gv = go.d[0];
          for (double& x : s->d) x += gv;
        }
        break;
      }
      case OpKind::ReduceMean: {
        if (Mat* s = grad_sink(*e.in[0], epoch_)) {
          const double gv = go.d[0] / static_cast<double>(s->size());
          for (double& x : s->d) x += gv;
        }
        break;
      }
      case OpKind::SquaredNorm: {
        Tensor& a = *e.in[0];
        if (Mat* s = grad_sink(a, epoch_)) {
          const double gv = 2.0 * go.d[0];
          for (std::size_t i = 0; i < s->size(); ++i) s->d[i] += gv * a.v.d[i];
        }
        break;
      }
      case OpKind::RowStandardize: {
        Tensor& a = *e.in[0];
        if (Mat* s = grad_sink(a, epoch_)) {
          const double n = static_cast<double>(a.cols());
          for (std::size_t i = 0; i < a.rows(); ++i) {
            const double* x = a.v.row(i);
            const double* y = out.v.row(i);
            const double* gr = go.row(i);
            double m = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) m += x[j];
            m /= n;
            double var = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) var += (x[j] - m) * (x[j] - m);
            var /= n;
            const double inv_s = 1.0 / std::sqrt(var + e.scalar);
            double gmean = 0.0, gymean = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) {
              gmean += gr[j];
              gymean += gr[j] * y[j];
            }
            gmean /= n;
            gymean /= n;
            double* sr = s->row(i);
            for (std::size_t j = 0; j < a.cols(); ++j) {
              sr[j] += inv_s * (gr[j] - gmean - y[j] * gymean);
            }
          }
        }
        break;
      }
      case OpKind::ClusterQuadratic: {
        Tensor& z = *e.in[0];
        if (Mat* s = grad_sink(z, epoch_)) {
          const Mat& u = e.ca;
          const Mat& mu = e.cb;
          const double scale = 2.0 * go.d[0] / static_cast<double>(z.rows());
          Mat umu = dsc::matmul(u, mu);
          for (std::size_t t = 0; t < z.rows(); ++t) {
            const double* ur = u.row(t);
            double usum = 0.0;
            for (std::size_t c = 0; c < u.cols; ++c) usum += ur[c];
            const double* zt = z.v.row(t);
            const double* wt = umu.row(t);
            double* sr = s->row(t);
            for (std::size_t j = 0; j < z.cols(); ++j) {
              sr[j] += scale * (usum * zt[j] - wt[j]);
            }
          }
        }
        break;
      }
    }
  }
}

}  // namespace dsc
