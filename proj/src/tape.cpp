#include "rfpinn/tape.hpp"

#include <array>
#include <memory>
#include <stdexcept>

namespace rfpinn::ad {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;

const JetLayout& layout_for(int dims, int order) {
  static const std::array<std::array<JetLayout, kMaxOrder + 1>, kMaxSeeds + 1> table = [] {
    std::array<std::array<JetLayout, kMaxOrder + 1>, kMaxSeeds + 1> t;
    for (int d = 0; d <= kMaxSeeds; ++d)
      for (int k = 0; k <= kMaxOrder; ++k) t[d][k] = JetLayout(d, k);
    return t;
  }();
  if (dims < 0 || dims > kMaxSeeds || order < 0 || order > kMaxOrder)
    throw std::invalid_argument("layout_for: unsupported dims/order");
  return dims == 0 ? table[0][0] : table[dims][order];
}

int ParamVector::add_block(std::string name, Index rows, Index cols) {
  if (find(name) >= 0) throw std::invalid_argument("ParamVector: duplicate block " + name);
  const Index offset = values_.size();
  blocks_.push_back({std::move(name), offset, rows, cols});
  values_.conservativeResize(offset + rows * cols);
  values_.segment(offset, rows * cols).setZero();
  return static_cast<int>(blocks_.size()) - 1;
}

int ParamVector::find(const std::string& name) const {
  for (int i = 0; i < num_blocks(); ++i)
    if (blocks_[i].name == name) return i;
  return -1;
}

namespace {

using Stack = std::array<ArrayXXd, kMaxUnaryDeriv + 1>;

// Derivative stacks evaluated elementwise over a rows x points block.
Stack stack_batch(Unary f, const ArrayXXd& a, int n) {
  Stack s;
  for (int k = 0; k <= n; ++k) s[k].resize(a.rows(), a.cols());
  if (f == Unary::Tanh) {
    const ArrayXXd t = a.tanh();
    const ArrayXXd q = 1.0 - t * t;
    s[0] = t;
    if (n >= 1) s[1] = q;
    if (n >= 2) s[2] = -2.0 * t * q;
    if (n >= 3) s[3] = q * (6.0 * t * t - 2.0);
    if (n >= 4) s[4] = 8.0 * t * q * (2.0 - 3.0 * t * t);
    return s;
  }
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) {
      const DerivStack d = unary_derivs(f, a(i, j), n);
      for (int k = 0; k <= n; ++k) s[k](i, j) = d[k];
    }
  return s;
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  if (nodes_[id].forward) nodes_[id].forward(*this, id);
  return id;
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: node was not recorded on this tape");
}

Tape::Node& Tape::node(Var v) {
  check(v);
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  check(v);
  return nodes_[v.id];
}

void Tape::accumulate(int id, const MatrixXd& delta) {
  Node& n = nodes_[id];
  if (n.adjoint.size() == 0) n.adjoint = delta;
  else n.adjoint += delta;
}

// ---- leaves ---------------------------------------------------------------

Var Tape::constant(MatrixXd value, const JetLayout& layout, Index points) {
  if (value.cols() != layout.channels() * points)
    throw std::invalid_argument("Tape::constant: column count does not match layout");
  Node n;
  n.value = std::move(value);
  n.layout = &layout_for(layout.dims(), layout.order());
  n.points = points;
  return {this, push(std::move(n))};
}

Var Tape::scalar_constant(double v) { return constant(MatrixXd::Constant(1, 1, v), layout_for(0, 0), 1); }

Var Tape::seeded_input(const MatrixXd& coords, const JetLayout& layout) {
  if (coords.rows() != layout.dims()) throw std::invalid_argument("Tape::seeded_input: rows must equal seed count");
  const Index n = coords.cols();
  MatrixXd v = MatrixXd::Zero(coords.rows(), layout.channels() * n);
  v.leftCols(n) = coords;
  if (layout.order() >= 1)
    for (int s = 0; s < layout.dims(); ++s) v.row(s).segment(layout.channel({s}) * n, n).setOnes();
  return constant(std::move(v), layout, n);
}

Var Tape::param(const ParamVector& space, int block) {
  Node n;
  n.layout = &layout_for(0, 0);
  n.points = space.info(block).cols;
  n.needs_grad = true;
  n.space = &space;
  n.block = block;
  n.forward = [](Tape& t, int self) {
    Node& me = t.nodes_[self];
    me.value = me.space->block(me.block);
  };
  n.backward = [](Tape& t, int self) {
    Node& me = t.nodes_[self];
    if (me.space != t.grad_space_) return;
    const auto& b = me.space->info(me.block);
    Eigen::Map<MatrixXd> g(t.grad_out_->data() + b.offset, b.rows, b.cols);
    g += me.adjoint;
  };
  return {this, push(std::move(n))};
}

// ---- ops ------------------------------------------------------------------

Var Tape::linear(Var w, Var x, Var b) {
  const Node& wn = node(w);
  const Node& xn = node(x);
  const Node& bn = node(b);
  if (wn.value.cols() != xn.value.rows() || bn.value.rows() != wn.value.rows() || bn.value.cols() != 1)
    throw std::invalid_argument("Tape::linear: dimension mismatch");
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = wn.needs_grad || xn.needs_grad || bn.needs_grad;
  const int wi = w.id, xi = x.id, bi = b.id;
  n.forward = [wi, xi, bi](Tape& t, int self) {
    Node& me = t.nodes_[self];
    const Node& X = t.nodes_[xi];
    me.value.noalias() = t.nodes_[wi].value * X.value;
    me.value.leftCols(X.points).colwise() += t.nodes_[bi].value.col(0);
  };
  n.backward = [wi, xi, bi](Tape& t, int self) {
    const Node& me = t.nodes_[self];
    const Node& X = t.nodes_[xi];
    if (t.nodes_[wi].needs_grad) t.accumulate(wi, me.adjoint * X.value.transpose());
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, me.adjoint.leftCols(X.points).rowwise().sum());
    if (X.needs_grad) t.accumulate(xi, t.nodes_[wi].value.transpose() * me.adjoint);
  };
  return {this, push(std::move(n))};
}

Var Tape::unary(Unary f, Var x) {
  const Node& xn = node(x);
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = xn.needs_grad;
  auto cache = std::make_shared<Stack>();
  const int xi = x.id;
  n.forward = [f, xi, cache](Tape& t, int self) {
    const Node& in = t.nodes_[xi];
    Node& me = t.nodes_[self];
    const JetLayout& L = *in.layout;
    const Index N = in.points, R = in.value.rows();
    const int depth = L.order() + (in.needs_grad ? 1 : 0);
    *cache = stack_batch(f, in.value.leftCols(N).array(), depth);
    const Stack& F = *cache;
    me.value.resize(R, in.value.cols());
    me.value.leftCols(N) = F[0].matrix();
    ArrayXXd acc(R, N), p(R, N);
    for (int ch = 1; ch < L.channels(); ++ch) {
      acc.setZero();
      for (const auto& term : L.composition_terms(ch)) {
        p = F[term.order];
        for (int k = 0; k < term.order; ++k) p *= in.value.middleCols(term.blocks[k] * N, N).array();
        acc += p;
      }
      me.value.middleCols(ch * N, N) = acc.matrix();
    }
  };
  n.backward = [xi, cache](Tape& t, int self) {
    const Node& in = t.nodes_[xi];
    const Node& me = t.nodes_[self];
    const JetLayout& L = *in.layout;
    const Index N = in.points, R = in.value.rows();
    const Stack& F = *cache;
    MatrixXd dx = MatrixXd::Zero(R, in.value.cols());
    dx.leftCols(N).array() = me.adjoint.leftCols(N).array() * F[1];
    ArrayXXd p(R, N);
    for (int ch = 1; ch < L.channels(); ++ch) {
      const auto zbar = me.adjoint.middleCols(ch * N, N).array();
      for (const auto& term : L.composition_terms(ch)) {
        p = zbar * F[term.order + 1];
        for (int k = 0; k < term.order; ++k) p *= in.value.middleCols(term.blocks[k] * N, N).array();
        dx.leftCols(N).array() += p;
        for (int b = 0; b < term.order; ++b) {
          p = zbar * F[term.order];
          for (int k = 0; k < term.order; ++k)
            if (k != b) p *= in.value.middleCols(term.blocks[k] * N, N).array();
          dx.middleCols(term.blocks[b] * N, N).array() += p;
        }
      }
    }
    t.accumulate(xi, dx);
  };
  return {this, push(std::move(n))};
}

Var Tape::relu_square(Var x) {
  const Node& xn = node(x);
  if (xn.layout->channels() != 1) throw std::invalid_argument("Tape::relu_square: plain nodes only");
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = xn.needs_grad;
  const int xi = x.id;
  n.forward = [xi](Tape& t, int self) {
    t.nodes_[self].value = t.nodes_[xi].value.array().max(0.0).square().matrix();
  };
  n.backward = [xi](Tape& t, int self) {
    const auto pos = t.nodes_[xi].value.array().max(0.0);
    t.accumulate(xi, (2.0 * pos * t.nodes_[self].adjoint.array()).matrix());
  };
  return {this, push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
  const Node& an = node(a);
  const Node& bn = node(b);
  if (*an.layout != *bn.layout || an.points != bn.points || an.value.rows() != bn.value.rows())
    throw std::invalid_argument("Tape::mul: operand shapes differ");
  Node n;
  n.layout = an.layout;
  n.points = an.points;
  n.needs_grad = an.needs_grad || bn.needs_grad;
  const int ai = a.id, bi = b.id;
  n.forward = [ai, bi](Tape& t, int self) {
    const Node& A = t.nodes_[ai];
    const Node& B = t.nodes_[bi];
    Node& me = t.nodes_[self];
    const JetLayout& L = *A.layout;
    const Index N = A.points;
    me.value.setZero(A.value.rows(), A.value.cols());
    for (int ch = 0; ch < L.channels(); ++ch)
      for (const auto& term : L.product_terms(ch))
        me.value.middleCols(ch * N, N).array() +=
            A.value.middleCols(term.x * N, N).array() * B.value.middleCols(term.y * N, N).array();
  };
  n.backward = [ai, bi](Tape& t, int self) {
    const Node& A = t.nodes_[ai];
    const Node& B = t.nodes_[bi];
    const Node& me = t.nodes_[self];
    const JetLayout& L = *A.layout;
    const Index N = A.points;
    MatrixXd da, db;
    if (A.needs_grad) da.setZero(A.value.rows(), A.value.cols());
    if (B.needs_grad) db.setZero(B.value.rows(), B.value.cols());
    for (int ch = 0; ch < L.channels(); ++ch) {
      const auto zbar = me.adjoint.middleCols(ch * N, N).array();
      for (const auto& term : L.product_terms(ch)) {
        if (A.needs_grad) da.middleCols(term.x * N, N).array() += zbar * B.value.middleCols(term.y * N, N).array();
        if (B.needs_grad) db.middleCols(term.y * N, N).array() += zbar * A.value.middleCols(term.x * N, N).array();
      }
    }
    if (A.needs_grad) t.accumulate(ai, da);
    if (B.needs_grad) t.accumulate(bi, db);
  };
  return {this, push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  const Node& an = node(a);
  const Node& bn = node(b);
  if (an.value.rows() != bn.value.rows() || an.value.cols() != bn.value.cols())
    throw std::invalid_argument("Tape::add: operand shapes differ");
  Node n;
  n.layout = an.layout;
  n.points = an.points;
  n.needs_grad = an.needs_grad || bn.needs_grad;
  const int ai = a.id, bi = b.id;
  n.forward = [ai, bi](Tape& t, int self) { t.nodes_[self].value = t.nodes_[ai].value + t.nodes_[bi].value; };
  n.backward = [ai, bi](Tape& t, int self) {
    if (t.nodes_[ai].needs_grad) t.accumulate(ai, t.nodes_[self].adjoint);
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, t.nodes_[self].adjoint);
  };
  return {this, push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
  const Node& an = node(a);
  const Node& bn = node(b);
  if (an.value.rows() != bn.value.rows() || an.value.cols() != bn.value.cols())
    throw std::invalid_argument("Tape::sub: operand shapes differ");
  Node n;
  n.layout = an.layout;
  n.points = an.points;
  n.needs_grad = an.needs_grad || bn.needs_grad;
  const int ai = a.id, bi = b.id;
  n.forward = [ai, bi](Tape& t, int self) { t.nodes_[self].value = t.nodes_[ai].value - t.nodes_[bi].value; };
  n.backward = [ai, bi](Tape& t, int self) {
    if (t.nodes_[ai].needs_grad) t.accumulate(ai, t.nodes_[self].adjoint);
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, -t.nodes_[self].adjoint);
  };
  return {this, push(std::move(n))};
}

Var Tape::scale(Var x, Var s) {
  const Node& xn = node(x);
  const Node& sn = node(s);
  if (sn.value.size() != 1) throw std::invalid_argument("Tape::scale: scale must be 1x1");
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = xn.needs_grad || sn.needs_grad;
  const int xi = x.id, si = s.id;
  n.forward = [xi, si](Tape& t, int self) {
    t.nodes_[self].value = t.nodes_[si].value(0, 0) * t.nodes_[xi].value;
  };
  n.backward = [xi, si](Tape& t, int self) {
    const MatrixXd& adj = t.nodes_[self].adjoint;
    if (t.nodes_[xi].needs_grad) t.accumulate(xi, t.nodes_[si].value(0, 0) * adj);
    if (t.nodes_[si].needs_grad)
      t.accumulate(si, MatrixXd::Constant(1, 1, (adj.array() * t.nodes_[xi].value.array()).sum()));
  };
  return {this, push(std::move(n))};
}

Var Tape::scale(Var x, double s) {
  const Node& xn = node(x);
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = xn.needs_grad;
  const int xi = x.id;
  n.forward = [xi, s](Tape& t, int self) { t.nodes_[self].value = s * t.nodes_[xi].value; };
  n.backward = [xi, s](Tape& t, int self) { t.accumulate(xi, s * t.nodes_[self].adjoint); };
  return {this, push(std::move(n))};
}

Var Tape::add_constant(Var x, double c) {
  const Node& xn = node(x);
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = xn.needs_grad;
  const int xi = x.id;
  n.forward = [xi, c](Tape& t, int self) {
    Node& me = t.nodes_[self];
    const Node& in = t.nodes_[xi];
    me.value = in.value;
    me.value.leftCols(in.points).array() += c;
  };
  n.backward = [xi](Tape& t, int self) { t.accumulate(xi, t.nodes_[self].adjoint); };
  return {this, push(std::move(n))};
}

Var Tape::row(Var x, int r) {
  const Node& xn = node(x);
  if (r < 0 || r >= xn.value.rows()) throw std::out_of_range("Tape::row: row out of range");
  Node n;
  n.layout = xn.layout;
  n.points = xn.points;
  n.needs_grad = xn.needs_grad;
  const int xi = x.id;
  n.forward = [xi, r](Tape& t, int self) { t.nodes_[self].value = t.nodes_[xi].value.row(r); };
  n.backward = [xi, r](Tape& t, int self) {
    Node& in = t.nodes_[xi];
    if (in.adjoint.size() == 0) in.adjoint = MatrixXd::Zero(in.value.rows(), in.value.cols());
    in.adjoint.row(r) += t.nodes_[self].adjoint;
  };
  return {this, push(std::move(n))};
}

Var Tape::channel(Var x, int ch) {
  const Node& xn = node(x);
  if (ch < 0 || ch >= xn.layout->channels()) throw std::out_of_range("Tape::channel: channel not carried");
  Node n;
  n.layout = &layout_for(0, 0);
  n.points = xn.points;
  n.needs_grad = xn.needs_grad;
  const int xi = x.id;
  n.forward = [xi, ch](Tape& t, int self) {
    const Node& in = t.nodes_[xi];
    t.nodes_[self].value = in.value.middleCols(ch * in.points, in.points);
  };
  n.backward = [xi, ch](Tape& t, int self) {
    Node& in = t.nodes_[xi];
    if (in.adjoint.size() == 0) in.adjoint = MatrixXd::Zero(in.value.rows(), in.value.cols());
    in.adjoint.middleCols(ch * in.points, in.points) += t.nodes_[self].adjoint;
  };
  return {this, push(std::move(n))};
}

Var Tape::sum(Var x) {
  const Node& xn = node(x);
  if (xn.layout->channels() != 1) throw std::invalid_argument("Tape::sum: plain nodes only");
  Node n;
  n.layout = &layout_for(0, 0);
  n.points = 1;
  n.needs_grad = xn.needs_grad;
  const int xi = x.id;
  n.forward = [xi](Tape& t, int self) { t.nodes_[self].value = MatrixXd::Constant(1, 1, t.nodes_[xi].value.sum()); };
  n.backward = [xi](Tape& t, int self) {
    const Node& in = t.nodes_[xi];
    t.accumulate(xi, MatrixXd::Constant(in.value.rows(), in.value.cols(), t.nodes_[self].adjoint(0, 0)));
  };
  return {this, push(std::move(n))};
}

Var Tape::mean(Var x) {
  const Node& xn = node(x);
  if (xn.value.size() == 0) throw std::invalid_argument("Tape::mean: empty node");
  return scale(sum(x), 1.0 / static_cast<double>(xn.value.size()));
}

Var Tape::weighted_sum(const std::vector<Var>& xs, const std::vector<double>& weights) {
  if (xs.empty() || xs.size() != weights.size()) throw std::invalid_argument("Tape::weighted_sum: size mismatch");
  Node n;
  n.layout = &layout_for(0, 0);
  n.points = 1;
  std::vector<int> ids;
  for (Var v : xs) {
    const Node& vn = node(v);
    if (vn.value.size() != 1) throw std::invalid_argument("Tape::weighted_sum: terms must be 1x1");
    n.needs_grad = n.needs_grad || vn.needs_grad;
    ids.push_back(v.id);
  }
  n.forward = [ids, weights](Tape& t, int self) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) acc += weights[i] * t.nodes_[ids[i]].value(0, 0);
    t.nodes_[self].value = MatrixXd::Constant(1, 1, acc);
  };
  n.backward = [ids, weights](Tape& t, int self) {
    const double g = t.nodes_[self].adjoint(0, 0);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.nodes_[ids[i]].needs_grad) t.accumulate(ids[i], MatrixXd::Constant(1, 1, weights[i] * g));
  };
  return {this, push(std::move(n))};
}

// ---- evaluation -------------------------------------------------------------

const MatrixXd& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.value.size() != 1) throw std::invalid_argument("Tape::scalar: node is not 1x1");
  return n.value(0, 0);
}

const JetLayout& Tape::layout(Var v) const { return *node(v).layout; }
Index Tape::points(Var v) const { return node(v).points; }

MatrixXd Tape::channel_value(Var v, int ch, int r) const {
  const Node& n = node(v);
  return n.value.block(r, ch * n.points, 1, n.points);
}

void Tape::replay() {
  for (int i = 0; i < size(); ++i)
    if (nodes_[i].forward) nodes_[i].forward(*this, i);
}

Eigen::VectorXd Tape::gradient(Var loss, const ParamVector& space) {
  Node& l = node(loss);
  if (l.value.size() != 1) throw std::invalid_argument("Tape::gradient: loss must be 1x1");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(space.size());
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  l.adjoint = MatrixXd::Ones(1, 1);
  grad_out_ = &g;
  grad_space_ = &space;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.adjoint.size() != 0 && n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  grad_out_ = nullptr;
  grad_space_ = nullptr;
  return g;
}

}  // namespace rfpinn::ad
