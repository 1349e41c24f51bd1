#include "rfkit/presets.hpp"

#include <stdexcept>
#include <vector>

#include "rfkit/rf_analysis.hpp"

namespace rfkit::presets {

namespace {

struct BlockRow {
  int number;  // 1-based residual block number, selects the channel plan
  int k1;
  int k2;
  bool pool_after;
};

int channels_for_block(int number) {
  if (number <= 4) return 128;
  if (number <= 8) return 256;
  return 512;
}

NetworkSpec residual_net(const std::string& name, const std::vector<BlockRow>& rows) {
  NetworkBuilder b(name, 1);
  int channels = 128;
  b.conv({5, 5}, {2, 2}, channels);
  for (const BlockRow& row : rows) {
    const int out = channels_for_block(row.number);
    if (out != channels)
      b.begin_residual(Projection{{1, 1}, {1, 1}});
    else
      b.begin_residual();
    b.conv(Axis2::square(row.k1), {1, 1}, out);
    b.conv(Axis2::square(row.k2), {1, 1}, out);
    b.end_residual();
    if (row.pool_after) b.max_pool2();
    channels = out;
  }
  b.global_avg_pool().classifier(kDefaultClasses);
  return b.build();
}

}  // namespace

NetworkSpec build_rn1() {
  // Rows 4 and 6-8, 10-12 of the table are empty for RN1.
  return residual_net("rn1", {
                                 {1, 3, 1, true},
                                 {2, 3, 3, true},
                                 {3, 3, 3, false},
                                 {5, 3, 3, true},
                                 {9, 3, 1, false},
                             });
}

NetworkSpec build_rn2() {
  return residual_net("rn2", {
                                 {1, 3, 1, true},
                                 {2, 3, 1, false},
                                 {3, 3, 1, false},
                                 {4, 1, 1, true},
                                 {5, 3, 1, false},
                                 {6, 3, 1, false},
                                 {7, 3, 1, false},
                                 {8, 3, 1, true},
                                 {9, 3, 1, false},
                                 {10, 1, 1, false},
                                 {11, 1, 1, false},
                                 {12, 1, 1, false},
                             });
}

NetworkSpec build_rn3() {
  return residual_net("rn3", {
                                 {1, 3, 1, true},
                                 {2, 3, 3, true},
                                 {3, 3, 3, false},
                                 {4, 3, 3, true},
                                 {5, 3, 1, false},
                                 {6, 1, 1, false},
                                 {7, 1, 1, false},
                                 {8, 1, 1, false},
                                 {9, 1, 1, false},
                                 {10, 1, 1, false},
                                 {11, 1, 1, false},
                                 {12, 1, 1, false},
                             });
}

NetworkSpec build_rn_base() {
  std::vector<BlockRow> rows;
  for (int n = 1; n <= 12; ++n) rows.push_back({n, 3, 3, n == 1 || n == 4 || n == 8});
  return residual_net("rn_base", rows);
}

NetworkSpec build_dn1(int growth) {
  if (growth < 1) throw std::invalid_argument("growth rate must be >= 1");

  // Stem, two dense blocks of fixed depth with compressing transitions, then a
  // final dense block deep enough to bring the longest chain to the target.
  NetworkBuilder b("dn1", 1);
  b.conv({5, 5}, {2, 2}, 128);
  int channels = 128;
  auto dense_block = [&](int layers) {
    b.begin_dense(growth);
    for (int i = 0; i < layers; ++i) b.conv({3, 3}, {1, 1}, growth);
    b.end_dense();
    channels += layers * growth;
  };
  auto transition = [&] {
    channels /= 2;
    b.conv({1, 1}, {1, 1}, channels);
    b.pool(PoolKind::average, {2, 2}, {2, 2});
  };
  dense_block(1);
  transition();
  dense_block(3);
  transition();

  const RfState before = rf_trace(b.build()).final;
  const Axis2 target = vgg_ref_rf();
  // Each 3x3 layer adds 2 * cum_stride per axis.
  const int per_layer = 2 * before.cum_stride.freq;
  const int gap = target.freq - before.rf.freq;
  if (before.cum_stride.freq != before.cum_stride.time || before.rf.freq != before.rf.time ||
      gap <= 0 || gap % per_layer != 0)
    throw std::logic_error("dn1 layout cannot reach the reference RF exactly");
  dense_block(gap / per_layer);

  b.global_avg_pool().classifier(kDefaultClasses);
  return b.build();
}

const PresetCatalog& catalog() {
  static const PresetCatalog cat = {
      {"rn_base", {"12-block all-3x3 ResNet (sweep starting point)", build_rn_base, std::nullopt}},
      {"rn1", {"shallow ResNet, 5 residual blocks", build_rn1, std::nullopt}},
      {"rn2", {"12-block ResNet with mixed 3x3/1x1 filters", build_rn2, std::nullopt}},
      {"rn3", {"RN1 with the tail kept as 1x1 blocks", build_rn3, std::nullopt}},
      {"dn1", {"dense net, growth 128, 135x135 max RF", [] { return build_dn1(); }, std::nullopt}},
      {"vgg_ref_rf", {"reference VGG-style RF (constant only)", {}, vgg_ref_rf()}},
  };
  return cat;
}

}  // namespace rfkit::presets
