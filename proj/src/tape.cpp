#include "forec/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace forec::ad {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

VarId Tape::push(Node node, const char* op_name) {
  if (!node.value.all_finite()) {
    throw std::runtime_error(std::string("non-finite value in output of ") + op_name);
  }
  nodes_.push_back(std::move(node));
  return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::leaf(Tensor value) {
  return push(make_node(Op::Leaf, -1, -1, std::move(value)), "leaf");
}

VarId Tape::param(const ParamSet& params, const std::string& name) {
  auto it = param_vars_.find(name);
  if (it != param_vars_.end()) return it->second;
  const VarId v = push(make_node(Op::Leaf, -1, -1, params.value(name)), "param");
  param_vars_.emplace(name, v);
  return v;
}

const Tensor& Tape::value(VarId v) const {
  if (v < 0 || static_cast<size_t>(v) >= nodes_.size()) {
    throw std::invalid_argument("Tape::value: bad var id");
  }
  return nodes_[static_cast<size_t>(v)].value;
}

VarId Tape::matmul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.shape().size() == 2 && tb.shape().size() == 2,
          "matmul: operands must be rank-2, got " + ta.shape_str() + " and " +
              tb.shape_str());
  const long m = ta.shape()[0], k = ta.shape()[1];
  const long k2 = tb.shape()[0], n = tb.shape()[1];
  require(k == k2, "matmul: inner dimensions disagree: " + ta.shape_str() +
                       " vs " + tb.shape_str());
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const auto& A = ta.data();
  const auto& B = tb.data();
  for (long i = 0; i < m; ++i) {
    for (long l = 0; l < k; ++l) {
      const double a_il = A[static_cast<size_t>(i * k + l)];
      if (a_il == 0.0) continue;
      for (long j = 0; j < n; ++j) {
        out[static_cast<size_t>(i * n + j)] += a_il * B[static_cast<size_t>(l * n + j)];
      }
    }
  }
  return push(make_node(Op::Matmul, a, b, Tensor({m, n}, std::move(out))), "matmul");
}

VarId Tape::mul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.same_shape(tb), "elementwise mul: shape mismatch: " + ta.shape_str() +
                                 " vs " + tb.shape_str());
  std::vector<double> out(static_cast<size_t>(ta.size()));
  for (long i = 0; i < ta.size(); ++i) out[static_cast<size_t>(i)] = ta[i] * tb[i];
  return push(make_node(Op::Mul, a, b, Tensor(ta.shape(), std::move(out))), "mul");
}

VarId Tape::add(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(ta.same_shape(tb),
          "add: shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  std::vector<double> out(static_cast<size_t>(ta.size()));
  for (long i = 0; i < ta.size(); ++i) out[static_cast<size_t>(i)] = ta[i] + tb[i];
  return push(make_node(Op::Add, a, b, Tensor(ta.shape(), std::move(out))), "add");
}

VarId Tape::add_rowwise(VarId mat, VarId row) {
  const Tensor& tm = val(mat);
  const Tensor& tr = val(row);
  require(tm.shape().size() == 2 && tr.shape().size() == 1,
          "add_rowwise: need matrix and vector");
  const long m = tm.shape()[0], n = tm.shape()[1];
  require(tr.shape()[0] == n, "add_rowwise: width mismatch: " + tm.shape_str() +
                                  " vs " + tr.shape_str());
  std::vector<double> out(static_cast<size_t>(m * n));
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < n; ++j) {
      out[static_cast<size_t>(i * n + j)] = tm[i * n + j] + tr[j];
    }
  }
  return push(make_node(Op::AddRowwise, mat, row, Tensor({m, n}, std::move(out))),
              "add_rowwise");
}

VarId Tape::concat(VarId a, VarId b, int axis) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  // An empty operand concats to the other one unchanged.
  if (ta.size() == 0 || tb.size() == 0) {
    const Tensor& keep = ta.size() == 0 ? tb : ta;
    Node node = make_node(Op::Concat, a, b, keep);
    node.axis = axis;
    return push(std::move(node), "concat");
  }
  require(ta.shape().size() == tb.shape().size(), "concat: rank mismatch");
  Tensor out;
  if (ta.shape().size() == 1) {
    require(axis == 0, "concat: axis out of range for rank-1");
    std::vector<double> v;
    v.reserve(static_cast<size_t>(ta.size() + tb.size()));
    v.insert(v.end(), ta.data().begin(), ta.data().end());
    v.insert(v.end(), tb.data().begin(), tb.data().end());
    out = Tensor({ta.size() + tb.size()}, std::move(v));
  } else if (ta.shape().size() == 2 && axis == 0) {
    require(ta.shape()[1] == tb.shape()[1],
            "concat axis 0: column counts disagree: " + ta.shape_str() + " vs " +
                tb.shape_str());
    std::vector<double> v;
    v.reserve(static_cast<size_t>(ta.size() + tb.size()));
    v.insert(v.end(), ta.data().begin(), ta.data().end());
    v.insert(v.end(), tb.data().begin(), tb.data().end());
    out = Tensor({ta.shape()[0] + tb.shape()[0], ta.shape()[1]}, std::move(v));
  } else if (ta.shape().size() == 2 && axis == 1) {
    require(ta.shape()[0] == tb.shape()[0],
            "concat axis 1: row counts disagree: " + ta.shape_str() + " vs " +
                tb.shape_str());
    const long m = ta.shape()[0], na = ta.shape()[1], nb = tb.shape()[1];
    std::vector<double> v(static_cast<size_t>(m * (na + nb)));
    for (long i = 0; i < m; ++i) {
      for (long j = 0; j < na; ++j) v[static_cast<size_t>(i * (na + nb) + j)] = ta[i * na + j];
      for (long j = 0; j < nb; ++j) {
        v[static_cast<size_t>(i * (na + nb) + na + j)] = tb[i * nb + j];
      }
    }
    out = Tensor({m, na + nb}, std::move(v));
  } else {
    throw std::invalid_argument("concat: unsupported rank/axis");
  }
  Node node = make_node(Op::Concat, a, b, std::move(out));
  node.axis = axis;
  return push(std::move(node), "concat");
}

VarId Tape::relu(VarId x) {
  const Tensor& t = val(x);
  std::vector<double> out(static_cast<size_t>(t.size()));
  for (long i = 0; i < t.size(); ++i) out[static_cast<size_t>(i)] = t[i] > 0.0 ? t[i] : 0.0;
  return push(make_node(Op::Relu, x, -1, Tensor(t.shape(), std::move(out))), "relu");
}

VarId Tape::sigmoid(VarId x) {
  const Tensor& t = val(x);
  std::vector<double> out(static_cast<size_t>(t.size()));
  for (long i = 0; i < t.size(); ++i) out[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-t[i]));
  return push(make_node(Op::Sigmoid, x, -1, Tensor(t.shape(), std::move(out))), "sigmoid");
}

VarId Tape::rows(VarId table, std::vector<long> indices) {
  const Tensor& t = val(table);
  require(t.shape().size() == 2, "rows: table must be rank-2");
  const long n = t.shape()[0], d = t.shape()[1];
  for (const long idx : indices) {
    require(idx >= 0 && idx < n,
            "rows: index " + std::to_string(idx) + " out of range [0, " +
                std::to_string(n) + ")");
  }
  const long b = static_cast<long>(indices.size());
  std::vector<double> out(static_cast<size_t>(b * d));
  for (long r = 0; r < b; ++r) {
    const long src = indices[static_cast<size_t>(r)];
    for (long j = 0; j < d; ++j) out[static_cast<size_t>(r * d + j)] = t[src * d + j];
  }
  Node node = make_node(Op::Rows, table, -1, Tensor({b, d}, std::move(out)));
  node.indices = std::move(indices);
  return push(std::move(node), "rows");
}

VarId Tape::sum(VarId x) {
  const Tensor& t = val(x);
  double s = 0.0;
  for (long i = 0; i < t.size(); ++i) s += t[i];
  return push(make_node(Op::Sum, x, -1, Tensor::scalar(s)), "sum");
}

VarId Tape::bce_loss(VarId pred, Tensor target) {
  const Tensor& p = val(pred);
  require(p.same_shape(target), "bce_loss: shape mismatch: " + p.shape_str() +
                                    " vs " + target.shape_str());
  require(p.size() > 0, "bce_loss: empty prediction");
  const long n = p.size();
  double loss = 0.0;
  for (long i = 0; i < n; ++i) {
    const double pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, p[i]));
    const double y = target[i];
    loss += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  }
  loss /= static_cast<double>(n);
  Node node = make_node(Op::BceLoss, pred, -1, Tensor::scalar(loss));
  node.aux = std::move(target);
  return push(std::move(node), "bce_loss");
}

GradMap Tape::backward(VarId loss, const ParamSet& params) {
  if (consumed_) throw std::runtime_error("Tape::backward: tape already consumed");
  const Tensor& lt = value(loss);
  if (lt.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be scalar, got " +
                                lt.shape_str());
  }
  consumed_ = true;

  std::vector<std::vector<double>> grad(nodes_.size());
  auto buf = [&](VarId v) -> std::vector<double>& {
    auto& g = grad[static_cast<size_t>(v)];
    if (g.empty() && val(v).size() > 0) g.assign(static_cast<size_t>(val(v).size()), 0.0);
    return g;
  };

  buf(loss)[0] = 1.0;

  for (long ni = static_cast<long>(nodes_.size()) - 1; ni >= 0; --ni) {
    const Node& node = nodes_[static_cast<size_t>(ni)];
    const auto& g = grad[static_cast<size_t>(ni)];
    if (g.empty()) continue;  // not on any path to the loss

    switch (node.op) {
      case Op::Leaf:
        break;
      case Op::Matmul: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        const long m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
        auto& ga = buf(node.a);
        auto& gb = buf(node.b);
        for (long i = 0; i < m; ++i) {
          for (long j = 0; j < n; ++j) {
            const double gij = g[static_cast<size_t>(i * n + j)];
            if (gij == 0.0) continue;
            for (long l = 0; l < k; ++l) {
              ga[static_cast<size_t>(i * k + l)] += gij * B[l * n + j];
              gb[static_cast<size_t>(l * n + j)] += gij * A[i * k + l];
            }
          }
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        auto& ga = buf(node.a);
        auto& gb = buf(node.b);
        for (long i = 0; i < A.size(); ++i) {
          ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * B[i];
          gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * A[i];
        }
        break;
      }
      case Op::Add: {
        auto& ga = buf(node.a);
        auto& gb = buf(node.b);
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::AddRowwise: {
        const Tensor& M = val(node.a);
        const long m = M.shape()[0], n = M.shape()[1];
        auto& gm = buf(node.a);
        auto& gr = buf(node.b);
        for (long i = 0; i < m; ++i) {
          for (long j = 0; j < n; ++j) {
            const double gij = g[static_cast<size_t>(i * n + j)];
            gm[static_cast<size_t>(i * n + j)] += gij;
            gr[static_cast<size_t>(j)] += gij;
          }
        }
        break;
      }
      case Op::Concat: {
        const Tensor& A = val(node.a);
        const Tensor& B = val(node.b);
        if (A.size() == 0 || B.size() == 0) {
          const VarId keep = A.size() == 0 ? node.b : node.a;
          if (val(keep).size() > 0) {
            auto& gk = buf(keep);
            for (size_t i = 0; i < g.size(); ++i) gk[i] += g[i];
          }
          break;
        }
        auto& ga = buf(node.a);
        auto& gb = buf(node.b);
        if (A.shape().size() == 1 || node.axis == 0) {
          const size_t na = static_cast<size_t>(A.size());
          for (size_t i = 0; i < na; ++i) ga[i] += g[i];
          for (size_t i = 0; i < static_cast<size_t>(B.size()); ++i) gb[i] += g[na + i];
        } else {  // rank-2, axis 1
          const long m = A.shape()[0], na = A.shape()[1], nb = B.shape()[1];
          for (long i = 0; i < m; ++i) {
            for (long j = 0; j < na; ++j) {
              ga[static_cast<size_t>(i * na + j)] += g[static_cast<size_t>(i * (na + nb) + j)];
            }
            for (long j = 0; j < nb; ++j) {
              gb[static_cast<size_t>(i * nb + j)] +=
                  g[static_cast<size_t>(i * (na + nb) + na + j)];
            }
          }
        }
        break;
      }
      case Op::Relu: {
        const Tensor& X = val(node.a);
        auto& gx = buf(node.a);
        for (long i = 0; i < X.size(); ++i) {
          if (X[i] > 0.0) gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
        }
        break;
      }
      case Op::Sigmoid: {
        const Tensor& Y = node.value;
        auto& gx = buf(node.a);
        for (long i = 0; i < Y.size(); ++i) {
          gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * Y[i] * (1.0 - Y[i]);
        }
        break;
      }
      case Op::Rows: {
        const Tensor& T = val(node.a);
        const long d = T.shape()[1];
        auto& gt = buf(node.a);
        for (size_t r = 0; r < node.indices.size(); ++r) {
          const long src = node.indices[r];
          for (long j = 0; j < d; ++j) {
            gt[static_cast<size_t>(src * d + j)] += g[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
          }
        }
        break;
      }
      case Op::Sum: {
        auto& gx = buf(node.a);
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        break;
      }
      case Op::BceLoss: {
        const Tensor& P = val(node.a);
        const Tensor& Y = node.aux;
        const double inv_n = 1.0 / static_cast<double>(P.size());
        auto& gp = buf(node.a);
        for (long i = 0; i < P.size(); ++i) {
          if (P[i] < kProbClamp || P[i] > 1.0 - kProbClamp) continue;  // clamped: flat
          gp[static_cast<size_t>(i)] +=
              g[0] * inv_n * (P[i] - Y[i]) / (P[i] * (1.0 - P[i]));
        }
        break;
      }
    }
  }

  GradMap out;
  for (const ParamSet::Entry& e : params.entries()) {
    if (e.frozen) continue;
    auto it = param_vars_.find(e.name);
    if (it == param_vars_.end()) {
      out.emplace(e.name, Tensor::zeros(e.value.shape()));
      continue;
    }
    auto& g = grad[static_cast<size_t>(it->second)];
    if (g.empty()) {
      out.emplace(e.name, Tensor::zeros(e.value.shape()));
    } else {
      out.emplace(e.name, Tensor(e.value.shape(), std::move(g)));
    }
  }
  return out;
}

}  // namespace forec::ad
