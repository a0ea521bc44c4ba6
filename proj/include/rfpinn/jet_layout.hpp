#pragma once
/**
 * @file jet_layout.hpp
 * @brief Channel bookkeeping for truncated multivariate Taylor carriers.
 *
 * A carrier of order K over D seeds stores every mixed partial derivative up
 * to order K, one channel per multiset of seed indices. Symmetric partials
 * share a single channel, so d2/dxdy and d2/dydx are the same number.
 *
 * The product (Leibniz) and composition (Faa di Bruno) rules are expanded once
 * into flat term lists that both the scalar and the batched carriers replay.
 */

#include <algorithm>
#include <array>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfpinn::ad {

inline constexpr int kMaxSeeds = 3;
inline constexpr int kMaxOrder = 3;

/// One term of z_alpha = sum x_beta * y_gamma.
struct ProductTerm {
  int x;
  int y;
};

/// One term of z_alpha = sum f^(k)(a0) * prod_b a_{block_b}.
struct CompositionTerm {
  int order;                   ///< number of blocks (= derivative order of f)
  std::array<int, 3> blocks;   ///< channel of each block, first `order` valid
};

class JetLayout {
 public:
  JetLayout() : JetLayout(0, 0) {}

  JetLayout(int dims, int order) : dims_(dims), order_(order) {
    if (dims < 0 || dims > kMaxSeeds || order < 0 || order > kMaxOrder)
      throw std::invalid_argument("JetLayout: unsupported dims/order " + std::to_string(dims) + "/" +
                                  std::to_string(order));
    if (dims == 0) order_ = 0;
    enumerate();
    build_products();
    build_compositions();
  }

  int dims() const { return dims_; }
  int order() const { return order_; }
  int channels() const { return static_cast<int>(multi_.size()); }

  /// Channel of the partial derivative named by the (unsorted) seed indices.
  int channel(std::initializer_list<int> seeds) const {
    std::array<int, kMaxOrder> idx{};
    int n = 0;
    for (int s : seeds) {
      if (s < 0 || s >= dims_ || n >= order_)
        throw std::out_of_range("JetLayout::channel: partial not carried by this layout");
      idx[n++] = s;
    }
    return lookup(idx.data(), n);
  }

  /// Seed multiset of a channel (sorted ascending).
  const std::vector<int>& seeds_of(int ch) const { return multi_.at(ch); }
  int degree_of(int ch) const { return static_cast<int>(multi_.at(ch).size()); }

  const std::vector<ProductTerm>& product_terms(int ch) const { return products_[ch]; }
  const std::vector<CompositionTerm>& composition_terms(int ch) const { return compositions_[ch]; }

  bool operator==(const JetLayout& o) const { return dims_ == o.dims_ && order_ == o.order_; }
  bool operator!=(const JetLayout& o) const { return !(*this == o); }

 private:
  int lookup(const int* idx, int n) const {
    std::vector<int> key(idx, idx + n);
    std::sort(key.begin(), key.end());
    for (int c = 0; c < channels(); ++c)
      if (multi_[c] == key) return c;
    throw std::logic_error("JetLayout: missing channel");
  }

  void enumerate() {
    multi_.clear();
    multi_.push_back({});
    for (int i = 0; i < dims_ && order_ >= 1; ++i) multi_.push_back({i});
    if (order_ >= 2)
      for (int i = 0; i < dims_; ++i)
        for (int j = i; j < dims_; ++j) multi_.push_back({i, j});
    if (order_ >= 3)
      for (int i = 0; i < dims_; ++i)
        for (int j = i; j < dims_; ++j)
          for (int k = j; k < dims_; ++k) multi_.push_back({i, j, k});
  }

  // Every subset of index positions splits alpha into (beta, alpha \ beta).
  void build_products() {
    products_.assign(channels(), {});
    for (int c = 0; c < channels(); ++c) {
      const auto& a = multi_[c];
      const int n = static_cast<int>(a.size());
      for (int mask = 0; mask < (1 << n); ++mask) {
        int xs[kMaxOrder], ys[kMaxOrder];
        int nx = 0, ny = 0;
        for (int p = 0; p < n; ++p) {
          if (mask & (1 << p)) xs[nx++] = a[p];
          else ys[ny++] = a[p];
        }
        products_[c].push_back({lookup(xs, nx), lookup(ys, ny)});
      }
    }
  }

  // Set partitions of up to three index positions.
  void build_compositions() {
    compositions_.assign(channels(), {});
    for (int c = 0; c < channels(); ++c) {
      const auto& a = multi_[c];
      const int n = static_cast<int>(a.size());
      auto ch = [&](std::initializer_list<int> pos) {
        int idx[kMaxOrder];
        int k = 0;
        for (int p : pos) idx[k++] = a[p];
        return lookup(idx, k);
      };
      auto& out = compositions_[c];
      switch (n) {
        case 0:
          break;
        case 1:
          out.push_back({1, {ch({0}), 0, 0}});
          break;
        case 2:
          out.push_back({1, {ch({0, 1}), 0, 0}});
          out.push_back({2, {ch({0}), ch({1}), 0}});
          break;
        case 3:
          out.push_back({1, {ch({0, 1, 2}), 0, 0}});
          out.push_back({2, {ch({0}), ch({1, 2}), 0}});
          out.push_back({2, {ch({1}), ch({0, 2}), 0}});
          out.push_back({2, {ch({2}), ch({0, 1}), 0}});
          out.push_back({3, {ch({0}), ch({1}), ch({2})}});
          break;
        default:
          throw std::logic_error("JetLayout: order too high");
      }
    }
  }

  int dims_;
  int order_;
  std::vector<std::vector<int>> multi_;
  std::vector<std::vector<ProductTerm>> products_;
  std::vector<std::vector<CompositionTerm>> compositions_;
};

}  // namespace rfpinn::ad
