#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfkit/network.hpp"

namespace rfkit {

/// Cumulative stride and receptive field of a unit, measured in input pixels.
struct RfState {
  Axis2 cum_stride{1, 1};
  Axis2 rf{1, 1};

  bool operator==(const RfState&) const = default;
};

/// Folds one layer into the state. Conv and Pool layers grow the field by
/// (k-1)*d times the stride accumulated *before* the layer, then multiply the
/// stride in; every other layer kind passes the state through.
///
/// Note the ordering: updating the stride first and then using it for the
/// increment over-counts by one stride level (RN1 would come out at 153 instead
/// of 135).
RfState rf_step(const RfState& state, const LayerKind& layer);

struct RfStep {
  std::size_t layer = 0;
  std::string description;
  RfState state;
};

struct RfTrace {
  std::vector<RfStep> steps;
  RfState final;
};

/// One step per Conv/Pool layer. A residual block's shortcut is folded from the
/// block's entry state; the merged (per-axis max) state is written into the
/// block's last step and carried forward. Dense blocks follow their deepest
/// chain. Throws ValidationError for invalid networks.
RfTrace rf_trace(const NetworkSpec& net);

Axis2 network_rf(const NetworkSpec& net);

struct DenseRfProfile {
  struct Entry {
    int channels = 0;
    Axis2 rf;
  };
  /// One entry per dense layer output, sorted by rf ascending.
  std::vector<Entry> entries;
  /// Channels entering the block; they pass through with the entry RF.
  Entry passthrough;

  int total_channels() const;
  Axis2 max_rf() const;
};

class BlockIndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// block_index counts all blocks (residual and dense) in network order.
DenseRfProfile dense_rf_profile(const NetworkSpec& net, std::size_t block_index);

struct SpectrogramContext {
  double frames_per_second = 43.0;
  int mel_bins = 256;
};

struct RfContext {
  double seconds = 0.0;
  double mel_coverage = 0.0;  // fraction of mel bins, capped at 1
};

RfContext context_of_rf(Axis2 rf, const SpectrogramContext& ctx);

}  // namespace rfkit
