#pragma once
/**
 * @file network.hpp
 * @brief Fully connected network with smooth activations and optional
 *        layer-wise adaptive slopes.
 *
 * `depth` counts affine layers: depth - 1 hidden layers of `width` units,
 * followed by a linear output layer. Parameters live in a ParamVector so that
 * the trainer can append its own blocks (learnable physics constants).
 */

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfpinn/jet.hpp"
#include "rfpinn/tape.hpp"

namespace rfpinn {

enum class Activation { Tanh, Silu, Gelu };

ad::Unary to_unary(Activation a);
std::string activation_name(Activation a);
/// Accepts "tanh", "silu", "gelu" (case-sensitive).
Activation activation_from_name(const std::string& name);

struct NetworkConfig {
  int depth = 4;
  int width = 32;
  int inputs = 2;
  int outputs = 1;
  Activation activation = Activation::Gelu;
  std::uint64_t seed = 0;
  bool llaaf = false;

  void validate() const;
};

class Mlp {
 public:
  /// Glorot-uniform weights, zero biases, unit slopes.
  explicit Mlp(const NetworkConfig& cfg);

  const NetworkConfig& config() const { return cfg_; }
  ad::ParamVector& params() { return params_; }
  const ad::ParamVector& params() const { return params_; }

  int layers() const { return cfg_.depth; }
  int weight_block(int l) const { return w_.at(l); }
  int bias_block(int l) const { return b_.at(l); }
  /// Slope block of hidden layer l (1x1); -1 without adaptive slopes.
  int slope_block(int l) const { return cfg_.llaaf ? s_.at(l) : -1; }
  /// Number of entries belonging to the network itself (excludes appended blocks).
  Eigen::Index network_size() const { return network_size_; }

  template <typename S>
  std::vector<S> forward(std::span<const S> x) const;

  /// Records the forward pass on a tape; x is an input node of `inputs` rows.
  ad::Var record(ad::Tape& tape, ad::Var x) const;

  /// 1 / mean_l exp(s_l) over hidden layers.
  double slope_recovery() const;
  ad::Var slope_recovery(ad::Tape& tape) const;

  /// Text checkpoint with hexfloat values; loads back bit-exactly.
  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  NetworkConfig cfg_;
  ad::ParamVector params_;
  std::vector<int> w_, b_, s_;
  Eigen::Index network_size_ = 0;
};

template <typename S>
std::vector<S> Mlp::forward(std::span<const S> x) const {
  if (static_cast<int>(x.size()) != cfg_.inputs) throw std::invalid_argument("Mlp::forward: input size mismatch");
  const ad::Unary act = to_unary(cfg_.activation);
  std::vector<S> h(x.begin(), x.end()), z;
  for (int l = 0; l < cfg_.depth; ++l) {
    const auto W = params_.block(w_[l]);
    const auto b = params_.block(b_[l]);
    z.assign(static_cast<std::size_t>(W.rows()), S(0.0));
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      S acc = S(0.0);
      for (Eigen::Index k = 0; k < W.cols(); ++k) acc += W(i, k) * h[k];
      acc += S(b(i, 0));
      if (l + 1 < cfg_.depth) {
        if (cfg_.llaaf) acc = params_.block(s_[l])(0, 0) * acc;
        acc = ad::apply_unary(act, acc);
      }
      z[i] = acc;
    }
    h.swap(z);
  }
  return h;
}

}  // namespace rfpinn
