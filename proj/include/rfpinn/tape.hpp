#pragma once
/**
 * @file tape.hpp
 * @brief Reverse-mode tape whose node values are batches of Taylor carriers.
 *
 * Every node holds a matrix of shape rows x (channels * points): row r,
 * channel c of point p lives at (r, c * points + p). Spatial derivatives
 * travel forward inside the channels; parameter gradients are accumulated in
 * reverse over the recorded operations. Because the forward closures are kept,
 * the tape can be replayed after a parameter update without re-recording.
 *
 * Adjoints are accumulated in strict reverse recording order, so gradients are
 * bit-identical between runs.
 */

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "rfpinn/jet_layout.hpp"
#include "rfpinn/unary.hpp"

namespace rfpinn::ad {

/// Shared, immutable layouts keyed by (dims, order).
const JetLayout& layout_for(int dims, int order);

/// Flat parameter storage split into named matrix blocks.
class ParamVector {
 public:
  struct Block {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };

  int add_block(std::string name, Eigen::Index rows, Eigen::Index cols);

  Eigen::Map<Eigen::MatrixXd> block(int i) {
    const auto& b = blocks_.at(i);
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<const Eigen::MatrixXd> block(int i) const {
    const auto& b = blocks_.at(i);
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  const Block& info(int i) const { return blocks_.at(i); }
  int find(const std::string& name) const;
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

 private:
  std::vector<Block> blocks_;
  Eigen::VectorXd values_;
};

class Tape;

/// Handle to a recorded node.
struct Var {
  const Tape* tape = nullptr;
  int id = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves -------------------------------------------------------------

  /// Constant node (no gradient flows into it).
  Var constant(Eigen::MatrixXd value, const JetLayout& layout, Eigen::Index points);
  Var scalar_constant(double v);

  /// Independent spatial inputs: coords is dims x points, seeded one seed per row.
  Var seeded_input(const Eigen::MatrixXd& coords, const JetLayout& layout);

  /// Leaf bound to a parameter block; re-read from `space` on every replay.
  Var param(const ParamVector& space, int block);

  // ---- carrier-level ops --------------------------------------------------

  /// W * x + b on every channel (bias enters the value channel only).
  Var linear(Var w, Var x, Var b);
  /// Elementwise f(x) propagated through all carried derivatives.
  Var unary(Unary f, Var x);
  /// max(0, x)^2 on plain (order-0) nodes.
  Var relu_square(Var x);
  /// Carrier product, row-wise.
  Var mul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// x * s for a 1x1 node s.
  Var scale(Var x, Var s);
  Var scale(Var x, double s);
  Var add_constant(Var x, double c);
  /// Selects one row of a multi-row node.
  Var row(Var x, int r);
  /// Extracts one derivative channel as a plain (order-0) node.
  Var channel(Var x, int ch);
  /// Sum of all entries of a plain node, and its mean.
  Var sum(Var x);
  Var mean(Var x);
  /// sum_i w_i * x_i for 1x1 nodes.
  Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& weights);

  // ---- evaluation ---------------------------------------------------------

  const Eigen::MatrixXd& value(Var v) const;
  double scalar(Var v) const;
  const JetLayout& layout(Var v) const;
  Eigen::Index points(Var v) const;

  /// Channel `ch` of row `r` as a 1 x points block.
  Eigen::MatrixXd channel_value(Var v, int ch, int r = 0) const;

  /// Re-runs every recorded forward closure in order.
  void replay();

  /// Gradient of a 1x1 node with respect to every leaf bound to `space`.
  Eigen::VectorXd gradient(Var loss, const ParamVector& space);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd adjoint;
    const JetLayout* layout = nullptr;
    Eigen::Index points = 0;
    bool needs_grad = false;
    std::function<void(Tape&, int)> forward;
    std::function<void(Tape&, int)> backward;
    const ParamVector* space = nullptr;
    int block = -1;
  };

  int push(Node n);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check(Var v) const;
  void accumulate(int id, const Eigen::MatrixXd& delta);

  std::vector<Node> nodes_;
  Eigen::VectorXd* grad_out_ = nullptr;
  const ParamVector* grad_space_ = nullptr;
};

}  // namespace rfpinn::ad
