#include "rfpinn/network.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace rfpinn {

ad::Unary to_unary(Activation a) {
  switch (a) {
    case Activation::Tanh: return ad::Unary::Tanh;
    case Activation::Silu: return ad::Unary::Silu;
    case Activation::Gelu: return ad::Unary::Gelu;
  }
  throw std::logic_error("to_unary: bad activation");
}

std::string activation_name(Activation a) { return std::string(ad::unary_name(to_unary(a))); }

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "silu") return Activation::Silu;
  if (name == "gelu") return Activation::Gelu;
  throw std::invalid_argument("unknown activation '" + name + "' (expected tanh, silu or gelu)");
}

void NetworkConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("NetworkConfig: depth must be >= 2");
  if (width < 1) throw std::invalid_argument("NetworkConfig: width must be >= 1");
  if (inputs < 1 || inputs > ad::kMaxSeeds) throw std::invalid_argument("NetworkConfig: inputs must be 1..3");
  if (outputs < 1) throw std::invalid_argument("NetworkConfig: outputs must be >= 1");
}

Mlp::Mlp(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  for (int l = 0; l < cfg_.depth; ++l) {
    const int fan_in = l == 0 ? cfg_.inputs : cfg_.width;
    const int fan_out = l + 1 == cfg_.depth ? cfg_.outputs : cfg_.width;
    w_.push_back(params_.add_block("W" + std::to_string(l), fan_out, fan_in));
    b_.push_back(params_.add_block("b" + std::to_string(l), fan_out, 1));
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto W = params_.block(w_.back());
    // Column-major fill keeps the draw order independent of Eigen internals.
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
  }
  if (cfg_.llaaf) {
    for (int l = 0; l + 1 < cfg_.depth; ++l) {
      s_.push_back(params_.add_block("s" + std::to_string(l), 1, 1));
      params_.block(s_.back())(0, 0) = 1.0;
    }
  }
  network_size_ = params_.size();
}

ad::Var Mlp::record(ad::Tape& tape, ad::Var x) const {
  if (tape.value(x).rows() != cfg_.inputs) throw std::invalid_argument("Mlp::record: input size mismatch");
  const ad::Unary act = to_unary(cfg_.activation);
  ad::Var h = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    h = tape.linear(tape.param(params_, w_[l]), h, tape.param(params_, b_[l]));
    if (l + 1 < cfg_.depth) {
      if (cfg_.llaaf) h = tape.scale(h, tape.param(params_, s_[l]));
      h = tape.unary(act, h);
    }
  }
  return h;
}

double Mlp::slope_recovery() const {
  if (!cfg_.llaaf) throw std::logic_error("slope_recovery: network has no adaptive slopes");
  double acc = 0.0;
  for (int b : s_) acc += std::exp(params_.block(b)(0, 0));
  return 1.0 / (acc / static_cast<double>(s_.size()));
}

ad::Var Mlp::slope_recovery(ad::Tape& tape) const {
  if (!cfg_.llaaf) throw std::logic_error("slope_recovery: network has no adaptive slopes");
  std::vector<ad::Var> terms;
  for (int b : s_) terms.push_back(tape.unary(ad::Unary::Exp, tape.param(params_, b)));
  const std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
  return tape.unary(ad::Unary::Reciprocal, tape.weighted_sum(terms, w));
}

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

void Mlp::save(std::ostream& out) const {
  out << "rfpinn-mlp 1\n";
  out << "depth " << cfg_.depth << " width " << cfg_.width << " inputs " << cfg_.inputs << " outputs "
      << cfg_.outputs << " activation " << activation_name(cfg_.activation) << " seed " << cfg_.seed << " llaaf "
      << (cfg_.llaaf ? 1 : 0) << "\n";
  for (int i = 0; i < params_.num_blocks(); ++i) {
    const auto& info = params_.info(i);
    out << info.name << ' ' << info.rows << ' ' << info.cols;
    for (Eigen::Index k = 0; k < info.rows * info.cols; ++k) out << ' ' << hex(params_.values()[info.offset + k]);
    out << '\n';
  }
}

Mlp Mlp::load(std::istream& in) {
  std::string magic, key, act;
  int version = 0;
  if (!(in >> magic >> version) || magic != "rfpinn-mlp" || version != 1)
    throw std::runtime_error("checkpoint: bad header");
  NetworkConfig cfg;
  int llaaf = 0;
  auto expect = [&](const char* k) {
    if (!(in >> key) || key != k) throw std::runtime_error(std::string("checkpoint: expected key ") + k);
  };
  expect("depth");
  in >> cfg.depth;
  expect("width");
  in >> cfg.width;
  expect("inputs");
  in >> cfg.inputs;
  expect("outputs");
  in >> cfg.outputs;
  expect("activation");
  in >> act;
  expect("seed");
  in >> cfg.seed;
  expect("llaaf");
  in >> llaaf;
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  cfg.activation = activation_from_name(act);
  cfg.llaaf = llaaf != 0;
  Mlp net(cfg);
  std::string name, tok;
  Eigen::Index rows = 0, cols = 0;
  for (int i = 0; i < net.params_.num_blocks(); ++i) {
    const auto& info = net.params_.info(i);
    if (!(in >> name >> rows >> cols) || name != info.name || rows != info.rows || cols != info.cols)
      throw std::runtime_error("checkpoint: block mismatch at " + info.name);
    for (Eigen::Index k = 0; k < rows * cols; ++k) {
      if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated block " + info.name);
      net.params_.values()[info.offset + k] = std::strtod(tok.c_str(), nullptr);
    }
  }
  return net;
}

}  // namespace rfpinn
