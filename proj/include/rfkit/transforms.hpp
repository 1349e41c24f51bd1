#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfkit/network.hpp"

namespace rfkit {

class TransformError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SolveStrategy { truncate, convert_both, convert_time, convert_freq };
enum class SweepStrategy { convert_both, convert_time, convert_freq, pooling };

std::string to_string(SolveStrategy s);
std::string to_string(SweepStrategy s);

/// Conv layers eligible for filter conversion on the given axes, last conv
/// first. The network's first conv (the input stem) is never eligible.
std::vector<std::size_t> convertible_convs(const NetworkSpec& net, AxisSel axes);

/// Sets the selected kernel axes to 1 on the last `count` eligible convs.
/// Channels, strides and depth are unchanged.
NetworkSpec convert_tail_filters(const NetworkSpec& net, int count, AxisSel axes);

/// Start indices of the removable tail units: each unit is a block (or a
/// top-level conv after the stem) together with the pools that follow it.
std::vector<std::size_t> tail_unit_starts(const NetworkSpec& net);

/// Drops whole tail units until network_rf fits within target. The global
/// average pool and classifier are kept.
NetworkSpec truncate_tail(const NetworkSpec& net, Axis2 target);

/// Removes the pools at `remove` and inserts a 2x2/2x2 max pool after each
/// index in `insert_after` (indices refer to `net`). Residual shortcut strides
/// are re-derived afterwards; an identity shortcut whose main path now
/// subsamples becomes a strided 1x1 projection, which adds parameters.
NetworkSpec edit_pooling(const NetworkSpec& net, const std::vector<std::size_t>& insert_after,
                         const std::vector<std::size_t>& remove);

/// Minimal application of `strategy` so that the controlled axes fit within
/// target. Uncontrolled axes must already fit.
NetworkSpec solve_target_rf(const NetworkSpec& net, Axis2 target, SolveStrategy strategy);

struct SweepPoint {
  NetworkSpec net;
  Axis2 rf;
  std::int64_t params = 0;
  std::string label;
  int count = 0;
};

/// Convert strategies: one point per count 0..max (tail first).
/// Pooling: the base network, then each existing pool removed, then a pool
/// inserted after each block end that is not already followed by one.
/// Configurations that fail validation are skipped.
std::vector<SweepPoint> sweep(const NetworkSpec& net, SweepStrategy strategy);

}  // namespace rfkit
