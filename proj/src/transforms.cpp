#include "rfkit/transforms.hpp"

#include <algorithm>

#include "rfkit/rf_analysis.hpp"

namespace rfkit {

std::string to_string(SolveStrategy s) {
  switch (s) {
    case SolveStrategy::truncate: return "truncate";
    case SolveStrategy::convert_both: return "convert_both";
    case SolveStrategy::convert_time: return "convert_time";
    case SolveStrategy::convert_freq: return "convert_freq";
  }
  return "?";
}

std::string to_string(SweepStrategy s) {
  switch (s) {
    case SweepStrategy::convert_both: return "convert_both";
    case SweepStrategy::convert_time: return "convert_time";
    case SweepStrategy::convert_freq: return "convert_freq";
    case SweepStrategy::pooling: return "pooling";
  }
  return "?";
}

namespace {

bool eligible(const Conv& c, AxisSel axes) {
  switch (axes) {
    case AxisSel::both: return c.kernel.freq > 1 || c.kernel.time > 1;
    case AxisSel::time: return c.kernel.time > 1;
    case AxisSel::freq: return c.kernel.freq > 1;
  }
  return false;
}

bool fits(Axis2 rf, Axis2 target, AxisSel axes) {
  switch (axes) {
    case AxisSel::both: return rf.fits_within(target);
    case AxisSel::time: return rf.time <= target.time;
    case AxisSel::freq: return rf.freq <= target.freq;
  }
  return false;
}

AxisSel axes_of(SolveStrategy s) {
  switch (s) {
    case SolveStrategy::convert_time: return AxisSel::time;
    case SolveStrategy::convert_freq: return AxisSel::freq;
    default: return AxisSel::both;
  }
}

AxisSel axes_of(SweepStrategy s) {
  switch (s) {
    case SweepStrategy::convert_time: return AxisSel::time;
    case SweepStrategy::convert_freq: return AxisSel::freq;
    default: return AxisSel::both;
  }
}

// Index of the global average pool, or layers.size() when absent.
std::size_t body_end(const NetworkSpec& net) {
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].is<GlobalAvgPool>() || net.layers[i].is<Classifier>()) return i;
  return net.layers.size();
}

SweepPoint make_point(NetworkSpec net, std::string label, int count) {
  SweepPoint p;
  p.rf = network_rf(net);
  p.params = count_params(net).total;
  p.net = std::move(net);
  p.label = std::move(label);
  p.count = count;
  return p;
}

}  // namespace

std::vector<std::size_t> convertible_convs(const NetworkSpec& net, AxisSel axes) {
  std::vector<std::size_t> out;
  bool seen_stem = false;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto* c = net.layers[i].as<Conv>();
    if (!c) continue;
    if (!seen_stem) {
      seen_stem = true;
      continue;
    }
    if (eligible(*c, axes)) out.push_back(i);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

NetworkSpec convert_tail_filters(const NetworkSpec& net, int count, AxisSel axes) {
  const auto order = convertible_convs(net, axes);
  if (count < 0 || static_cast<std::size_t>(count) > order.size())
    throw TransformError("conversion count " + std::to_string(count) + " out of range [0, " +
                         std::to_string(order.size()) + "]");
  NetworkSpec out = net;
  for (int n = 0; n < count; ++n) {
    Conv& c = *out.layers[order[static_cast<std::size_t>(n)]].as<Conv>();
    if (axes != AxisSel::time) c.kernel.freq = 1;
    if (axes != AxisSel::freq) c.kernel.time = 1;
  }
  return out;
}

std::vector<std::size_t> tail_unit_starts(const NetworkSpec& net) {
  std::vector<std::size_t> starts;
  const std::size_t end = body_end(net);
  bool seen_stem = false;
  bool in_block = false;
  for (std::size_t i = 0; i < end; ++i) {
    const Layer& l = net.layers[i];
    if (l.is<ResidualBegin>() || l.is<DenseBegin>()) {
      if (seen_stem) starts.push_back(i);
      in_block = true;
    } else if (l.is<ResidualEnd>() || l.is<DenseEnd>()) {
      in_block = false;
    } else if (l.is<Conv>() && !in_block) {
      if (seen_stem) starts.push_back(i);
    }
    if (l.is<Conv>()) seen_stem = true;
  }
  return starts;
}

NetworkSpec truncate_tail(const NetworkSpec& net, Axis2 target) {
  require_valid(net);
  if (network_rf(net).fits_within(target)) return net;

  const std::size_t end = body_end(net);
  const auto starts = tail_unit_starts(net);
  auto cut_at = [&](std::size_t cut) {
    NetworkSpec out = net;
    out.layers.erase(out.layers.begin() + static_cast<std::ptrdiff_t>(cut),
                     out.layers.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  };
  for (auto it = starts.rbegin(); it != starts.rend(); ++it) {
    NetworkSpec candidate = cut_at(*it);
    if (network_rf(candidate).fits_within(target)) return candidate;
  }
  throw TransformError("target unreachable: the input stem alone has RF " +
                       network_rf(cut_at(starts.empty() ? end : starts.front())).str() +
                       ", above target " + target.str());
}

NetworkSpec edit_pooling(const NetworkSpec& net, const std::vector<std::size_t>& insert_after,
                         const std::vector<std::size_t>& remove) {
  require_valid(net);
  const std::size_t n = net.layers.size();
  const std::size_t end = body_end(net);

  std::vector<bool> in_dense(n, false);
  for (const BlockSpan& s : block_spans(net))
    if (s.dense)
      for (std::size_t i = s.begin; i < s.end; ++i) in_dense[i] = true;

  for (std::size_t i : remove) {
    if (i >= n) throw TransformError("pool removal index " + std::to_string(i) + " out of range");
    if (!net.layers[i].is<Pool>())
      throw TransformError("layer " + std::to_string(i) + " is not a pool");
  }
  std::vector<int> inserts(n, 0);
  for (std::size_t i : insert_after) {
    if (i >= end)
      throw TransformError("cannot insert a pool after layer " + std::to_string(i) +
                           ": outside the convolutional body");
    if (in_dense[i])
      throw TransformError("cannot insert a pool after layer " + std::to_string(i) +
                           ": inside a dense block");
    ++inserts[i];
  }

  NetworkSpec out = net;
  out.layers.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(remove.begin(), remove.end(), i) == remove.end()) out.layers.push_back(net.layers[i]);
    for (int k = 0; k < inserts[i]; ++k) out.layers.emplace_back(Pool{PoolKind::max, {2, 2}, {2, 2}});
  }
  rederive_shortcuts(out);
  require_valid(out);
  return out;
}

NetworkSpec solve_target_rf(const NetworkSpec& net, Axis2 target, SolveStrategy strategy) {
  if (strategy == SolveStrategy::truncate) return truncate_tail(net, target);

  const AxisSel axes = axes_of(strategy);
  const Axis2 current = network_rf(net);
  if (axes == AxisSel::time && current.freq > target.freq)
    throw TransformError("unreachable: strategy does not control frequency axis (frequency RF " +
                         std::to_string(current.freq) + " > target " +
                         std::to_string(target.freq) + ")");
  if (axes == AxisSel::freq && current.time > target.time)
    throw TransformError("unreachable: strategy does not control time axis (time RF " +
                         std::to_string(current.time) + " > target " +
                         std::to_string(target.time) + ")");

  const int max_count = static_cast<int>(convertible_convs(net, axes).size());
  for (int count = 0; count <= max_count; ++count) {
    NetworkSpec candidate = convert_tail_filters(net, count, axes);
    if (fits(network_rf(candidate), target, axes)) return candidate;
  }
  throw TransformError("unreachable: converting all " + std::to_string(max_count) +
                       " eligible convs still leaves RF " +
                       network_rf(convert_tail_filters(net, max_count, axes)).str() +
                       " above target " + target.str());
}

std::vector<SweepPoint> sweep(const NetworkSpec& net, SweepStrategy strategy) {
  require_valid(net);
  std::vector<SweepPoint> points;

  if (strategy != SweepStrategy::pooling) {
    const AxisSel axes = axes_of(strategy);
    const int max_count = static_cast<int>(convertible_convs(net, axes).size());
    for (int count = 0; count <= max_count; ++count)
      points.push_back(make_point(convert_tail_filters(net, count, axes),
                                  to_string(strategy) + ":" + std::to_string(count), count));
    return points;
  }

  int ordinal = 0;
  points.push_back(make_point(net, "base", ordinal++));
  auto try_add = [&](const std::vector<std::size_t>& ins, const std::vector<std::size_t>& rem,
                     std::string label) {
    NetworkSpec edited;
    try {
      edited = edit_pooling(net, ins, rem);
    } catch (const TransformError&) {
      return;
    } catch (const ValidationError&) {
      return;
    }
    points.push_back(make_point(std::move(edited), std::move(label), ordinal++));
  };

  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].is<Pool>()) try_add({}, {i}, "remove@" + std::to_string(i));
  for (const BlockSpan& s : block_spans(net)) {
    const bool followed_by_pool = s.end + 1 < net.layers.size() && net.layers[s.end + 1].is<Pool>();
    if (!followed_by_pool) try_add({s.end}, {}, "insert@" + std::to_string(s.end));
  }
  return points;
}

}  // namespace rfkit
