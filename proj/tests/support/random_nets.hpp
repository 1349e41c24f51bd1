#pragma once

// Random valid networks and independent oracles shared by the test suites.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "rfkit/network.hpp"

namespace rfkit::testing {

struct RandomNetOptions {
  int max_spatial_layers = 8;  // conv + pool layers, excluding shortcuts
  int max_kernel = 3;
  int max_stride = 2;
  int max_dilation = 2;
  int max_channels = 4;
  bool blocks = true;
  bool tail = true;          // gap + classifier
  bool random_flags = true;  // bn / bias / activation
  bool linear = false;       // force linear activations
};

inline int uniform(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline NetworkSpec random_network(std::mt19937_64& rng, const RandomNetOptions& o = {}) {
  NetworkBuilder b("rand" + std::to_string(uniform(rng, 0, 9999)), uniform(rng, 1, 3));
  int budget = uniform(rng, 1, o.max_spatial_layers);
  int channels = 0;

  auto conv_opts = [&] {
    NetworkBuilder::ConvOpts c;
    c.dilation = {uniform(rng, 1, o.max_dilation), uniform(rng, 1, o.max_dilation)};
    if (o.random_flags) {
      c.batchnorm = uniform(rng, 0, 1) == 1;
      c.bias = uniform(rng, 0, 1) == 1;
      c.activation = uniform(rng, 0, 1) ? Activation::relu : Activation::linear;
    }
    if (o.linear) c.activation = Activation::linear;
    return c;
  };
  auto kernel = [&] { return Axis2{uniform(rng, 1, o.max_kernel), uniform(rng, 1, o.max_kernel)}; };
  auto stride = [&] { return Axis2{uniform(rng, 1, o.max_stride), uniform(rng, 1, o.max_stride)}; };

  channels = uniform(rng, 1, o.max_channels);
  b.conv(kernel(), stride(), channels, conv_opts());
  --budget;

  while (budget > 0) {
    const int pick = uniform(rng, 0, o.blocks ? 3 : 1);
    if (pick == 0) {
      channels = uniform(rng, 1, o.max_channels);
      b.conv(kernel(), stride(), channels, conv_opts());
      --budget;
    } else if (pick == 1) {
      b.pool(uniform(rng, 0, 1) ? PoolKind::max : PoolKind::average,
             {uniform(rng, 1, 3), uniform(rng, 1, 3)}, stride());
      --budget;
    } else if (pick == 2) {
      // Residual block: 1-2 convs, maybe a pool; projection when needed.
      const int convs = std::min(budget, uniform(rng, 1, 2));
      const int out = uniform(rng, 1, o.max_channels);
      const bool pool_inside = budget > convs && uniform(rng, 0, 1);
      Axis2 product{1, 1};
      std::vector<Axis2> strides;
      for (int i = 0; i < convs; ++i) {
        strides.push_back(uniform(rng, 0, 3) == 0 ? stride() : Axis2{1, 1});
        product = product * strides.back();
      }
      const Axis2 pool_stride = stride();
      if (pool_inside) product = product * pool_stride;
      const bool need_proj = out != channels || product != Axis2{1, 1} || uniform(rng, 0, 3) == 0;
      if (need_proj)
        b.begin_residual(Projection{{uniform(rng, 1, 2), uniform(rng, 1, 2)}, product});
      else
        b.begin_residual();
      for (int i = 0; i < convs; ++i) {
        b.conv(kernel(), strides[static_cast<std::size_t>(i)], out, conv_opts());
        if (i == 0 && pool_inside) b.pool(PoolKind::average, {2, 2}, pool_stride);
      }
      b.end_residual();
      budget -= convs + (pool_inside ? 1 : 0);
      channels = out;
    } else {
      const int layers = std::min(budget, uniform(rng, 1, 3));
      const int growth = uniform(rng, 1, 3);
      b.begin_dense(growth);
      for (int i = 0; i < layers; ++i) {
        auto opts = conv_opts();
        b.conv(kernel(), {1, 1}, growth, opts);
      }
      b.end_dense();
      channels += layers * growth;
      budget -= layers;
    }
  }
  if (o.tail && uniform(rng, 0, 1)) {
    b.global_avg_pool();
    if (uniform(rng, 0, 1)) b.classifier(uniform(rng, 1, 5));
  }
  return b.build();
}

// ---------------------------------------------------------------------------
// Brute-force 1-D receptive field: walk the layers backwards carrying the set of
// positions (in the current layer's coordinates) that feed one output unit.
// Unit p of a windowed layer reads inputs p*s + j*d for j in [0, k).

namespace detail {

using PosSet = std::set<long long>;

inline PosSet map_window(const PosSet& out, int k, int s, int d) {
  PosSet in;
  for (long long p : out)
    for (int j = 0; j < k; ++j) in.insert(p * s + static_cast<long long>(j) * d);
  return in;
}

inline int axis_of(Axis2 a, bool freq) { return freq ? a.freq : a.time; }

inline PosSet walk_back(const NetworkSpec& net, std::size_t lo, std::size_t hi, PosSet set, bool freq);

inline PosSet layer_back(const Layer& l, const PosSet& set, bool freq) {
  if (const auto* c = l.as<Conv>())
    return map_window(set, axis_of(c->kernel, freq), axis_of(c->stride, freq), axis_of(c->dilation, freq));
  if (const auto* p = l.as<Pool>())
    return map_window(set, axis_of(p->kernel, freq), axis_of(p->stride, freq), 1);
  return set;
}

// Layers [lo, hi) processed from hi-1 down to lo.
inline PosSet walk_back(const NetworkSpec& net, std::size_t lo, std::size_t hi, PosSet set, bool freq) {
  std::size_t i = hi;
  while (i > lo) {
    --i;
    const Layer& l = net.layers[i];
    if (l.is<ResidualEnd>() || l.is<DenseEnd>()) {
      std::size_t begin = i;
      while (!(net.layers[begin].is<ResidualBegin>() || net.layers[begin].is<DenseBegin>())) --begin;
      if (l.is<ResidualEnd>()) {
        PosSet main = walk_back(net, begin + 1, i, set, freq);
        PosSet side = set;
        if (const auto& proj = net.layers[begin].as<ResidualBegin>()->projection)
          side = map_window(set, axis_of(proj->kernel, freq), axis_of(proj->stride, freq), 1);
        main.insert(side.begin(), side.end());
        set = std::move(main);
      } else {
        // features_k = concat(features_{k-1}, conv_k(features_{k-1}))
        for (std::size_t k = i; k-- > begin + 1;) {
          PosSet through = layer_back(net.layers[k], set, freq);
          set.insert(through.begin(), through.end());
        }
      }
      i = begin;
      continue;
    }
    set = layer_back(l, set, freq);
  }
  return set;
}

}  // namespace detail

inline int brute_force_rf_1d(const NetworkSpec& net, bool freq) {
  const auto set = detail::walk_back(net, 0, net.layers.size(), {0}, freq);
  return static_cast<int>(*set.rbegin() - *set.begin() + 1);
}

inline Axis2 brute_force_rf(const NetworkSpec& net) {
  return {brute_force_rf_1d(net, true), brute_force_rf_1d(net, false)};
}

/// n-fold full 2-D convolution of k x k arrays of ones.
inline std::vector<std::vector<double>> ones_convolution(int layers, int k = 3) {
  std::vector<std::vector<double>> acc{{1.0}};
  for (int n = 0; n < layers; ++n) {
    const std::size_t size = acc.size() + static_cast<std::size_t>(k) - 1;
    std::vector<std::vector<double>> next(size, std::vector<double>(size, 0.0));
    for (std::size_t y = 0; y < acc.size(); ++y)
      for (std::size_t x = 0; x < acc.size(); ++x)
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) next[y + static_cast<std::size_t>(a)][x + static_cast<std::size_t>(b)] += acc[y][x];
    acc = std::move(next);
  }
  return acc;
}

}  // namespace rfkit::testing
