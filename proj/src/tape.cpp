#include "dexfm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dexfm {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string("tape: ") + op + ": " + detail);
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) shape_error(op, "expected matrix, got " + shape_text(t.shape));
}

void require_vector(const char* op, const Tensor& t) {
  if (t.rank() != 1) shape_error(op, "expected vector, got " + shape_text(t.shape));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    shape_error(op, shape_text(a.shape) + " vs " + shape_text(b.shape));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ValueId Tape::push(Node n) {
  for (ValueId in : n.inputs)
    if (in.v >= nodes_.size()) shape_error("push", "input recorded after consumer");
  if (check_finite_ && !n.value.all_finite())
    throw std::runtime_error("tape: non-finite value produced by node " + std::to_string(nodes_.size()));
  nodes_.push_back(std::move(n));
  return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ValueId Tape::leaf(Tensor value) { return push({Op::Leaf, {}, std::move(value), 0.0, {}, {}, {}}); }

ValueId Tape::constant(Tensor value) { return push({Op::Constant, {}, std::move(value), 0.0, {}, {}, {}}); }

ValueId Tape::matvec(ValueId m, ValueId v) {
  const Tensor& M = value(m);
  const Tensor& x = value(v);
  require_matrix("matvec", M);
  require_vector("matvec", x);
  if (M.cols() != x.numel())
    shape_error("matvec", shape_text(M.shape) + " * " + shape_text(x.shape));
  Tensor out({M.rows()});
  for (std::size_t i = 0; i < M.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < M.cols(); ++j) acc += M.at(i, j) * x[j];
    out[i] = acc;
  }
  return push({Op::MatVec, {m, v}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_matrix("matmul", A);
  require_matrix("matmul", B);
  if (A.cols() != B.rows())
    shape_error("matmul", shape_text(A.shape) + " * " + shape_text(B.shape));
  Tensor out({A.rows(), B.cols()});
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = 0; k < A.cols(); ++k) {
      double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < B.cols(); ++j) out.at(i, j) += aik * B.at(k, j);
    }
  return push({Op::MatMul, {a, b}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::hadamard(ValueId a, ValueId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape("hadamard", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= y[i];
  return push({Op::Hadamard, {a, b}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape("add", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += y[i];
  return push({Op::Add, {a, b}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::scale(ValueId a, double factor) {
  Tensor out = value(a);
  for (double& v : out.data) v *= factor;
  return push({Op::Scale, {a}, std::move(out), factor, {}, {}, {}});
}

ValueId Tape::concat(std::span<const ValueId> parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  std::size_t total = 0;
  for (ValueId p : parts) total += value(p).numel();
  Tensor out({total});
  std::size_t off = 0;
  for (ValueId p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
    off += t.numel();
  }
  Node n{Op::Concat, {parts.begin(), parts.end()}, std::move(out), 0.0, {}, {}, {}};
  return push(std::move(n));
}

ValueId Tape::sum_reduce(ValueId a) {
  const Tensor& x = value(a);
  double acc = 0.0;
  for (double v : x.data) acc += v;
  return push({Op::SumReduce, {a}, Tensor::scalar(acc), 0.0, {}, {}, {}});
}

ValueId Tape::relu(ValueId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return push({Op::Relu, {a}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::sigmoid(ValueId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = stable_sigmoid(v);
  return push({Op::Sigmoid, {a}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::softmax(ValueId a) {
  const Tensor& x = value(a);
  require_vector("softmax", x);
  Tensor out = x;
  double mx = *std::max_element(out.data.begin(), out.data.end());
  double denom = 0.0;
  for (double& v : out.data) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (double& v : out.data) v /= denom;
  return push({Op::Softmax, {a}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::sqrt_eps(ValueId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::sqrt(v + kSqrtEps);
  return push({Op::SqrtEps, {a}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::mean_rows(ValueId a) {
  const Tensor& X = value(a);
  require_matrix("mean_rows", X);
  Tensor out({X.cols()});
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) out[j] += X.at(i, j);
  for (double& v : out.data) v /= static_cast<double>(X.rows());
  return push({Op::MeanRows, {a}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::euclidean_dist(ValueId x, ValueId y) {
  const Tensor& a = value(x);
  const Tensor& b = value(y);
  require_vector("euclidean_dist", a);
  require_same_shape("euclidean_dist", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return push({Op::EuclideanDist, {x, y}, Tensor::scalar(std::sqrt(acc + kSqrtEps)), 0.0, {}, {}, {}});
}

ValueId Tape::row(ValueId a, std::size_t index) {
  const Tensor& X = value(a);
  require_matrix("row", X);
  if (index >= X.rows()) shape_error("row", "index " + std::to_string(index) + " out of range");
  Tensor out({X.cols()});
  for (std::size_t j = 0; j < X.cols(); ++j) out[j] = X.at(index, j);
  return push({Op::Row, {a}, std::move(out), static_cast<double>(index), {}, {}, {}});
}

ValueId Tape::reshape(ValueId a, std::vector<std::size_t> extents) {
  const Tensor& x = value(a);
  if (shape_numel(extents) != x.numel())
    shape_error("reshape", shape_text(x.shape) + " -> " + shape_text(extents));
  Tensor out;
  out.shape = std::move(extents);
  out.data = x.data;
  return push({Op::Reshape, {a}, std::move(out), 0.0, {}, {}, {}});
}

ValueId Tape::embed_gather(ValueId table, const std::vector<std::vector<std::uint32_t>>& field_ids) {
  const Tensor& T = value(table);
  require_matrix("embed_gather", T);
  if (field_ids.empty()) shape_error("embed_gather", "no fields");
  const std::size_t d = T.cols();
  Tensor out({field_ids.size(), d});
  for (std::size_t f = 0; f < field_ids.size(); ++f) {
    if (field_ids[f].empty()) shape_error("embed_gather", "field with no active ids");
    for (std::uint32_t id : field_ids[f]) {
      if (id >= T.rows()) shape_error("embed_gather", "id " + std::to_string(id) + " out of range");
      for (std::size_t j = 0; j < d; ++j) out.at(f, j) += T.at(id, j);
    }
  }
  return push({Op::EmbedGather, {table}, std::move(out), 0.0, field_ids, {}, {}});
}

ValueId Tape::select_sum(ValueId weights, const std::vector<std::uint32_t>& active_ids) {
  const Tensor& w = value(weights);
  require_vector("select_sum", w);
  double acc = 0.0;
  for (std::uint32_t id : active_ids) {
    if (id >= w.numel()) shape_error("select_sum", "id " + std::to_string(id) + " out of range");
    acc += w[id];
  }
  return push({Op::SelectSum, {weights}, Tensor::scalar(acc), 0.0, {}, active_ids, {}});
}

Tensor cin_forward(const Tensor& xk, const Tensor& x0, const Tensor& weights, Tensor* save_z) {
  require_matrix("cin_contract", xk);
  require_matrix("cin_contract", x0);
  if (weights.rank() != 3)
    shape_error("cin_contract", "weights must be rank 3, got " + shape_text(weights.shape));
  const std::size_t e_prev = xk.rows(), m = x0.rows(), d = x0.cols();
  if (xk.cols() != d) shape_error("cin_contract", "embedding width mismatch");
  if (weights.shape[1] != e_prev || weights.shape[2] != m)
    shape_error("cin_contract", "weights " + shape_text(weights.shape) + " vs layers " +
                                    shape_text(xk.shape) + "," + shape_text(x0.shape));
  const std::size_t e_next = weights.shape[0];

  // Z[(i,j),:] = Xk[i,:] o X0[j,:]
  Tensor z({e_prev * m, d});
  for (std::size_t i = 0; i < e_prev; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double* zr = z.row_ptr(i * m + j);
      const double* xr = xk.row_ptr(i);
      const double* x0r = x0.row_ptr(j);
      for (std::size_t t = 0; t < d; ++t) zr[t] = xr[t] * x0r[t];
    }

  Tensor out({e_next, d});
  for (std::size_t l = 0; l < e_next; ++l) {
    double* or_ = out.row_ptr(l);
    const double* wl = &weights.data[l * e_prev * m];
    for (std::size_t p = 0; p < e_prev * m; ++p) {
      double w = wl[p];
      if (w == 0.0) continue;
      const double* zr = z.row_ptr(p);
      for (std::size_t t = 0; t < d; ++t) or_[t] += w * zr[t];
    }
  }
  if (save_z != nullptr) *save_z = std::move(z);
  return out;
}

ValueId Tape::cin_contract(ValueId xk, ValueId x0, ValueId weights) {
  Tensor z;
  Tensor out = cin_forward(value(xk), value(x0), value(weights), &z);
  return push({Op::CinContract, {xk, x0, weights}, std::move(out), 0.0, {}, {}, std::move(z)});
}

ValueId Tape::cross_entropy(ValueId predictions, const std::vector<double>& labels, double clip) {
  const Tensor& p = value(predictions);
  require_vector("cross_entropy", p);
  if (p.numel() != labels.size()) shape_error("cross_entropy", "prediction/label length mismatch");
  if (labels.empty()) shape_error("cross_entropy", "empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double ph = std::clamp(p[i], clip, 1.0 - clip);
    acc += labels[i] == 1.0 ? -std::log(ph) : -std::log(1.0 - ph);
  }
  Node n{Op::CrossEntropy, {predictions}, Tensor::scalar(acc / static_cast<double>(labels.size())),
         clip, {}, {}, Tensor::from_vector(labels)};
  return push(std::move(n));
}

std::vector<Tensor> Tape::backward(ValueId seed_output) const {
  if (seed_output.v >= nodes_.size()) throw std::invalid_argument("tape: backward: unknown node");
  if (nodes_[seed_output.v].value.numel() != 1)
    throw std::invalid_argument("tape: backward: seed output is not a scalar");

  std::vector<Tensor> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads[i] = Tensor(nodes_[i].value.shape, 0.0);
  grads[seed_output.v][0] = 1.0;

  for (std::size_t ni = seed_output.v + 1; ni-- > 0;) {
    const Node& n = nodes_[ni];
    const Tensor& g = grads[ni];
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::MatVec: {
        const Tensor& M = value(n.inputs[0]);
        const Tensor& x = value(n.inputs[1]);
        Tensor& gM = grads[n.inputs[0].v];
        Tensor& gx = grads[n.inputs[1].v];
        for (std::size_t i = 0; i < M.rows(); ++i) {
          double gi = g[i];
          if (gi == 0.0) continue;
          for (std::size_t j = 0; j < M.cols(); ++j) {
            gM.at(i, j) += gi * x[j];
            gx[j] += gi * M.at(i, j);
          }
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& A = value(n.inputs[0]);
        const Tensor& B = value(n.inputs[1]);
        Tensor& gA = grads[n.inputs[0].v];
        Tensor& gB = grads[n.inputs[1].v];
        for (std::size_t i = 0; i < A.rows(); ++i)
          for (std::size_t j = 0; j < B.cols(); ++j) {
            double gij = g.at(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < A.cols(); ++k) {
              gA.at(i, k) += gij * B.at(k, j);
              gB.at(k, j) += gij * A.at(i, k);
            }
          }
        break;
      }
      case Op::Hadamard: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        Tensor& ga = grads[n.inputs[0].v];
        Tensor& gb = grads[n.inputs[1].v];
        for (std::size_t i = 0; i < g.numel(); ++i) {
          ga[i] += g[i] * b[i];
          gb[i] += g[i] * a[i];
        }
        break;
      }
      case Op::Add: {
        Tensor& ga = grads[n.inputs[0].v];
        Tensor& gb = grads[n.inputs[1].v];
        for (std::size_t i = 0; i < g.numel(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Scale: {
        Tensor& ga = grads[n.inputs[0].v];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += n.aux * g[i];
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (ValueId in : n.inputs) {
          Tensor& gi = grads[in.v];
          for (std::size_t i = 0; i < gi.numel(); ++i) gi[i] += g[off + i];
          off += gi.numel();
        }
        break;
      }
      case Op::SumReduce: {
        Tensor& ga = grads[n.inputs[0].v];
        double gs = g[0];
        for (double& v : ga.data) v += gs;
        break;
      }
      case Op::Relu: {
        const Tensor& x = value(n.inputs[0]);
        Tensor& ga = grads[n.inputs[0].v];
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (x[i] > 0.0) ga[i] += g[i];
        break;
      }
      case Op::Sigmoid: {
        const Tensor& y = n.value;
        Tensor& ga = grads[n.inputs[0].v];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Softmax: {
        const Tensor& y = n.value;
        Tensor& ga = grads[n.inputs[0].v];
        double dot = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += y[i] * (g[i] - dot);
        break;
      }
      case Op::SqrtEps: {
        const Tensor& y = n.value;
        Tensor& ga = grads[n.inputs[0].v];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / (2.0 * y[i]);
        break;
      }
      case Op::MeanRows: {
        const Tensor& X = value(n.inputs[0]);
        Tensor& gX = grads[n.inputs[0].v];
        double inv = 1.0 / static_cast<double>(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i)
          for (std::size_t j = 0; j < X.cols(); ++j) gX.at(i, j) += inv * g[j];
        break;
      }
      case Op::EuclideanDist: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        Tensor& ga = grads[n.inputs[0].v];
        Tensor& gb = grads[n.inputs[1].v];
        double scale = g[0] / n.value[0];
        for (std::size_t i = 0; i < a.numel(); ++i) {
          double d = scale * (a[i] - b[i]);
          ga[i] += d;
          gb[i] -= d;
        }
        break;
      }
      case Op::Row: {
        Tensor& gX = grads[n.inputs[0].v];
        const std::size_t r = static_cast<std::size_t>(n.aux);
        const std::size_t c = gX.cols();
        for (std::size_t j = 0; j < c; ++j) gX.at(r, j) += g[j];
        break;
      }
      case Op::Reshape: {
        Tensor& ga = grads[n.inputs[0].v];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        break;
      }
      case Op::EmbedGather: {
        Tensor& gT = grads[n.inputs[0].v];
        const std::size_t d = n.value.cols();
        for (std::size_t f = 0; f < n.id_groups.size(); ++f)
          for (std::uint32_t id : n.id_groups[f])
            for (std::size_t j = 0; j < d; ++j) gT.at(id, j) += g.at(f, j);
        break;
      }
      case Op::SelectSum: {
        Tensor& gw = grads[n.inputs[0].v];
        for (std::uint32_t id : n.ids) gw[id] += g[0];
        break;
      }
      case Op::CinContract: {
        const Tensor& Xk = value(n.inputs[0]);
        const Tensor& X0 = value(n.inputs[1]);
        const Tensor& W = value(n.inputs[2]);
        const Tensor& z = n.saved;
        Tensor& gXk = grads[n.inputs[0].v];
        Tensor& gX0 = grads[n.inputs[1].v];
        Tensor& gW = grads[n.inputs[2].v];
        const std::size_t e_prev = Xk.rows(), m = X0.rows(), d = X0.cols();
        const std::size_t e_next = W.shape[0];
        // gZ = W^T g, gW[l,p] = <g[l,:], Z[p,:]>
        Tensor gz({e_prev * m, d});
        for (std::size_t l = 0; l < e_next; ++l) {
          const double* gl = g.row_ptr(l);
          const double* wl = &W.data[l * e_prev * m];
          double* gwl = &gW.data[l * e_prev * m];
          for (std::size_t p = 0; p < e_prev * m; ++p) {
            const double* zr = z.row_ptr(p);
            double* gzr = gz.row_ptr(p);
            double acc = 0.0;
            double w = wl[p];
            for (std::size_t t = 0; t < d; ++t) {
              acc += gl[t] * zr[t];
              gzr[t] += w * gl[t];
            }
            gwl[p] += acc;
          }
        }
        // Z[(i,j),:] = Xk[i,:] o X0[j,:]
        for (std::size_t i = 0; i < e_prev; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double* gzr = gz.row_ptr(i * m + j);
            const double* xr = Xk.row_ptr(i);
            const double* x0r = X0.row_ptr(j);
            double* gxr = gXk.row_ptr(i);
            double* gx0r = gX0.row_ptr(j);
            for (std::size_t t = 0; t < d; ++t) {
              gxr[t] += gzr[t] * x0r[t];
              gx0r[t] += gzr[t] * xr[t];
            }
          }
        break;
      }
      case Op::CrossEntropy: {
        const Tensor& p = value(n.inputs[0]);
        const Tensor& y = n.saved;
        Tensor& gp = grads[n.inputs[0].v];
        const double clip = n.aux;
        const double gs = g[0] / static_cast<double>(y.numel());
        for (std::size_t i = 0; i < y.numel(); ++i) {
          if (p[i] <= clip || p[i] >= 1.0 - clip) continue;  // clipped: flat
          gp[i] += y[i] == 1.0 ? gs * (-1.0 / p[i]) : gs * (1.0 / (1.0 - p[i]));
        }
        break;
      }
    }
  }
  return grads;
}

}  // namespace dexfm
