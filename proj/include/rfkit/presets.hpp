#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "rfkit/network.hpp"

namespace rfkit::presets {

// Residual nets share a 5x5 stride-2 input conv with 128 channels and a
// block-number channel plan: blocks 1-4 use 128 channels, 5-8 use 256 and
// 9-12 use 512. "P" marks a 2x2 max pool placed after the block. A 1x1
// projection shortcut is used wherever the channel count changes.

NetworkSpec build_rn1();
NetworkSpec build_rn2();
NetworkSpec build_rn3();

/// RN2's skeleton with every conv set to 3x3; the starting point for sweeps.
NetworkSpec build_rn_base();

/// Dense net whose deepest path reaches exactly vgg_ref_rf(). The depth of the
/// last dense block is solved from the RF recurrence.
NetworkSpec build_dn1(int growth = 128);

/// RF of the VGG-style reference model used as the adaptation target.
constexpr Axis2 vgg_ref_rf() { return {135, 135}; }

inline constexpr int kDefaultClasses = 10;

struct PresetEntry {
  std::string description;
  std::function<NetworkSpec()> build;  // empty for reference-only entries
  std::optional<Axis2> reference_rf;
};

using PresetCatalog = std::map<std::string, PresetEntry>;

const PresetCatalog& catalog();

}  // namespace rfkit::presets
