#include "rfkit/rf_analysis.hpp"

#include <algorithm>
#include <optional>
#include <utility>

namespace rfkit {

namespace {

int grow(int rf, int kernel, int dilation, int cum_stride) {
  return rf + (kernel - 1) * dilation * cum_stride;
}

RfState fold(const RfState& s, Axis2 kernel, Axis2 stride, Axis2 dilation) {
  RfState out;
  out.rf = {grow(s.rf.freq, kernel.freq, dilation.freq, s.cum_stride.freq),
            grow(s.rf.time, kernel.time, dilation.time, s.cum_stride.time)};
  out.cum_stride = s.cum_stride * stride;
  return out;
}

}  // namespace

RfState rf_step(const RfState& state, const LayerKind& layer) {
  if (const auto* c = std::get_if<Conv>(&layer)) return fold(state, c->kernel, c->stride, c->dilation);
  if (const auto* p = std::get_if<Pool>(&layer)) return fold(state, p->kernel, p->stride, {1, 1});
  return state;
}

RfTrace rf_trace(const NetworkSpec& net) {
  require_valid(net);
  RfTrace trace;
  RfState state;
  RfState block_entry;
  std::optional<Projection> shortcut;
  std::size_t block_first_step = 0;

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (const auto* r = l.as<ResidualBegin>()) {
      block_entry = state;
      shortcut = r->projection;
      block_first_step = trace.steps.size();
    } else if (l.is<ResidualEnd>()) {
      RfState side = block_entry;
      if (shortcut) side = fold(side, shortcut->kernel, shortcut->stride, {1, 1});
      RfState merged{state.cum_stride, max(state.rf, side.rf)};
      if (merged != state && trace.steps.size() > block_first_step)
        trace.steps.back().state = merged;
      state = merged;
    } else if (l.is<Conv>() || l.is<Pool>()) {
      state = rf_step(state, l.kind);
      trace.steps.push_back({i, describe(l.kind), state});
    }
  }
  trace.final = state;
  return trace;
}

Axis2 network_rf(const NetworkSpec& net) { return rf_trace(net).final.rf; }

int DenseRfProfile::total_channels() const {
  int total = passthrough.channels;
  for (const Entry& e : entries) total += e.channels;
  return total;
}

Axis2 DenseRfProfile::max_rf() const {
  Axis2 m = passthrough.rf;
  for (const Entry& e : entries) m = max(m, e.rf);
  return m;
}

DenseRfProfile dense_rf_profile(const NetworkSpec& net, std::size_t block_index) {
  require_valid(net);
  const auto spans = block_spans(net);
  if (block_index >= spans.size())
    throw BlockIndexError("block index " + std::to_string(block_index) + " out of range (" +
                          std::to_string(spans.size()) + " blocks)");
  const BlockSpan& span = spans[block_index];
  if (!span.dense)
    throw BlockIndexError("block " + std::to_string(block_index) + " is not a dense block");

  // State entering the block, from the trace of everything before it.
  NetworkSpec prefix = net;
  prefix.layers.resize(span.begin);
  const RfState entry = rf_trace(prefix).final;
  const int entering = span.begin == 0 ? net.input_channels : channels_after(net)[span.begin - 1];

  DenseRfProfile profile;
  profile.passthrough = {entering, entry.rf};
  RfState chain = entry;
  for (std::size_t i = span.begin + 1; i < span.end; ++i) {
    const auto* c = net.layers[i].as<Conv>();
    chain = rf_step(chain, *c);
    profile.entries.push_back({c->out_channels, chain.rf});
  }
  std::stable_sort(profile.entries.begin(), profile.entries.end(),
                   [](const auto& a, const auto& b) {
                     return std::pair(a.rf.freq, a.rf.time) < std::pair(b.rf.freq, b.rf.time);
                   });
  return profile;
}

RfContext context_of_rf(Axis2 rf, const SpectrogramContext& ctx) {
  RfContext out;
  out.seconds = rf.time / ctx.frames_per_second;
  out.mel_coverage = std::min(1.0, static_cast<double>(rf.freq) / ctx.mel_bins);
  return out;
}

}  // namespace rfkit
