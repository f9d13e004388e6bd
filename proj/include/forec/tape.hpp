#pragma once

#include <map>
#include <string>
#include <vector>

#include "forec/params.hpp"
#include "forec/tensor.hpp"

namespace forec::ad {

using VarId = int;
using GradMap = std::map<std::string, Tensor>;

// Reverse-mode gradient tape for the fixed recommender architectures.
// Ops are recorded in execution order; backward() walks them in exact
// reverse order, accumulating gradients into leaf variables. A tape is
// good for one backward pass.
class Tape {
 public:
  // Leaf holding a constant or input value.
  VarId leaf(Tensor value);
  // Leaf bound to a named ParamSet entry; repeated calls return the same var.
  VarId param(const ParamSet& params, const std::string& name);

  VarId matmul(VarId a, VarId b);
  VarId mul(VarId a, VarId b);  // elementwise (Hadamard)
  VarId add(VarId a, VarId b);  // elementwise, same shape
  VarId add_rowwise(VarId mat, VarId row);
  VarId concat(VarId a, VarId b, int axis);
  VarId relu(VarId x);
  VarId sigmoid(VarId x);
  // Gathers table rows; backward scatter-adds into the table gradient.
  VarId rows(VarId table, std::vector<long> indices);
  VarId sum(VarId x);
  // Mean binary cross entropy with probability clamping to [1e-7, 1-1e-7].
  VarId bce_loss(VarId pred, Tensor target);

  const Tensor& value(VarId v) const;

  // Gradients of `loss` w.r.t. every non-frozen entry of `params`:
  // zeros for entries the tape never saw, no entry for frozen ones.
  // Consumes the tape.
  GradMap backward(VarId loss, const ParamSet& params);

  static constexpr double kProbClamp = 1e-7;

 private:
  enum class Op {
    Leaf,
    Matmul,
    Mul,
    Add,
    AddRowwise,
    Concat,
    Relu,
    Sigmoid,
    Rows,
    Sum,
    BceLoss,
  };

  struct Node {
    Op op = Op::Leaf;
    VarId a = -1;
    VarId b = -1;
    Tensor value;
    int axis = 0;                // Concat
    std::vector<long> indices;   // Rows
    Tensor aux;                  // BceLoss target
  };

  static Node make_node(Op op, VarId a, VarId b, Tensor value) {
    Node node;
    node.op = op;
    node.a = a;
    node.b = b;
    node.value = std::move(value);
    return node;
  }

  VarId push(Node node, const char* op_name);
  const Tensor& val(VarId v) const { return nodes_[static_cast<size_t>(v)].value; }

  std::vector<Node> nodes_;
  std::map<std::string, VarId> param_vars_;
  bool consumed_ = false;
};

}  // namespace forec::ad
