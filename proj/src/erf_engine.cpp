#include "rfkit/erf_engine.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <string>
#include <thread>

namespace rfkit::erf {

namespace {

std::size_t out_size(std::size_t n, int stride) {
  return (n + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

// Leading pad of a "same" window: half of the total overhang, rounded down.
int same_pad(std::size_t n, int kernel, int stride, int dilation) {
  const long long out = static_cast<long long>(out_size(n, stride));
  const long long need = (out - 1) * stride + static_cast<long long>(kernel - 1) * dilation + 1 -
                         static_cast<long long>(n);
  return static_cast<int>(std::max(0LL, need) / 2);
}

double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

ConvWeights make_weights(std::size_t out, std::size_t in, Axis2 k, bool bias, const WeightInit& init,
                         std::mt19937_64& eng) {
  ConvWeights w;
  w.kernel = Tensor4(out, in, static_cast<std::size_t>(k.freq), static_cast<std::size_t>(k.time));
  if (bias) w.bias.assign(out, 0.0);
  if (std::holds_alternative<AllOnes>(init)) {
    std::fill(w.kernel.data().begin(), w.kernel.data().end(), 1.0);
    std::fill(w.bias.begin(), w.bias.end(), 1.0);
  } else {
    const auto& s = std::get<Seeded>(init);
    const double fan_in = static_cast<double>(in) * k.freq * k.time;
    const double a = s.scale * std::sqrt(3.0 / fan_in);
    for (double& v : w.kernel.data()) v = a * (2.0 * uniform01(eng) - 1.0);
    for (double& v : w.bias) v = a * (2.0 * uniform01(eng) - 1.0);
  }
  return w;
}

void check_explicit(const Explicit& ex, std::size_t layer, std::size_t out, std::size_t in, Axis2 k,
                    bool bias, NetworkWeights& into) {
  auto it = ex.layers.find(layer);
  if (it == ex.layers.end())
    throw EngineError("explicit weights missing for layer " + std::to_string(layer));
  const ConvWeights& w = it->second;
  const auto& d = w.kernel.dims();
  if (d[0] != out || d[1] != in || d[2] != static_cast<std::size_t>(k.freq) ||
      d[3] != static_cast<std::size_t>(k.time) || (bias ? w.bias.size() != out : !w.bias.empty()))
    throw EngineError("explicit weights for layer " + std::to_string(layer) + " have wrong shape");
  into.layers[layer] = w;
}

}  // namespace

NetworkWeights materialize_weights(const NetworkSpec& net, const WeightInit& init) {
  require_valid(net);
  NetworkWeights out;
  std::mt19937_64 eng(std::holds_alternative<Seeded>(init) ? std::get<Seeded>(init).seed : 0);
  const std::vector<int> after = channels_after(net);
  std::vector<std::size_t> residual_end(net.layers.size(), 0);
  for (const BlockSpan& s : block_spans(net))
    if (!s.dense) residual_end[s.begin] = s.end;

  auto emit = [&](std::size_t layer, std::size_t o, std::size_t in, Axis2 k, bool bias) {
    if (const auto* ex = std::get_if<Explicit>(&init))
      check_explicit(*ex, layer, o, in, k, bias, out);
    else
      out.layers[layer] = make_weights(o, in, k, bias, init, eng);
  };

  int channels = net.input_channels;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (const auto* c = l.as<Conv>()) {
      emit(i, static_cast<std::size_t>(c->out_channels), static_cast<std::size_t>(c->in_channels),
           c->kernel, c->has_bias);
    } else if (const auto* r = l.as<ResidualBegin>(); r && r->projection) {
      emit(i, static_cast<std::size_t>(after[residual_end[i]]), static_cast<std::size_t>(channels),
           r->projection->kernel, false);
    } else if (const auto* k = l.as<Classifier>()) {
      emit(i, static_cast<std::size_t>(k->classes), static_cast<std::size_t>(channels), {1, 1}, true);
    }
    channels = after[i];
  }
  return out;
}

namespace {

struct Box {
  std::size_t f0 = 0, f1 = 0, t0 = 0, t1 = 0;  // half-open

  void merge(const Box& o) {
    if (o.f0 >= o.f1 || o.t0 >= o.t1) return;
    if (f0 >= f1 || t0 >= t1) {
      *this = o;
      return;
    }
    f0 = std::min(f0, o.f0);
    f1 = std::max(f1, o.f1);
    t0 = std::min(t0, o.t0);
    t1 = std::max(t1, o.t1);
  }
};

// Input rows [lo, hi) touched by output rows [o0, o1) of a strided window.
std::pair<std::size_t, std::size_t> input_span(std::size_t o0, std::size_t o1, int stride, int pad,
                                               int kernel, int dilation, std::size_t n) {
  long long lo = static_cast<long long>(o0) * stride - pad;
  long long hi = static_cast<long long>(o1 - 1) * stride - pad +
                 static_cast<long long>(kernel - 1) * dilation + 1;
  lo = std::max(0LL, lo);
  hi = std::min(static_cast<long long>(n), hi);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Output indices x in [0, out) whose tap x*stride + offset lands in [0, n).
std::pair<std::size_t, std::size_t> valid_outputs(std::size_t out, int stride, long long offset,
                                                  std::size_t n) {
  long long lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long long hi = (static_cast<long long>(n) - 1 - offset);
  hi = hi < 0 ? 0 : hi / stride + 1;
  hi = std::min(hi, static_cast<long long>(out));
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

TapeNode conv_node(const Tensor4& in, Axis2 kernel, Axis2 stride, Axis2 dilation,
                   const ConvWeights& w, bool relu, std::size_t layer) {
  if (w.kernel.channels() != in.channels())
    throw EngineError("layer " + std::to_string(layer) + ": expects " +
                      std::to_string(w.kernel.channels()) + " input channels, got " +
                      std::to_string(in.channels()));
  TapeNode node;
  node.op = OpKind::conv;
  node.layer = layer;
  node.kernel = kernel;
  node.stride = stride;
  node.dilation = dilation;
  node.relu = relu;
  node.weights = &w;
  node.padding = {same_pad(in.freq(), kernel.freq, stride.freq, dilation.freq),
                  same_pad(in.time(), kernel.time, stride.time, dilation.time)};

  const std::size_t F = in.freq(), T = in.time();
  const std::size_t OF = out_size(F, stride.freq), OT = out_size(T, stride.time);
  const std::size_t outc = w.kernel.batch(), inc = in.channels();
  node.value = Tensor4(in.batch(), outc, OF, OT);

  for (std::size_t n = 0; n < in.batch(); ++n) {
    for (std::size_t o = 0; o < outc; ++o) {
      std::span<double> dst = node.value.plane(n, o);
      if (!w.bias.empty()) std::fill(dst.begin(), dst.end(), w.bias[o]);
      for (std::size_t i = 0; i < inc; ++i) {
        std::span<const double> src = in.plane(n, i);
        for (int a = 0; a < kernel.freq; ++a) {
          const long long off_f = static_cast<long long>(a) * dilation.freq - node.padding.freq;
          auto [y0, y1] = valid_outputs(OF, stride.freq, off_f, F);
          for (int b = 0; b < kernel.time; ++b) {
            const double wv = w.kernel.at(o, i, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            if (wv == 0.0) continue;
            const long long off_t = static_cast<long long>(b) * dilation.time - node.padding.time;
            auto [x0, x1] = valid_outputs(OT, stride.time, off_t, T);
            for (std::size_t y = y0; y < y1; ++y) {
              const double* srow =
                  src.data() + static_cast<std::size_t>(static_cast<long long>(y) * stride.freq + off_f) * T;
              double* drow = dst.data() + y * OT;
              if (stride.time == 1) {
                const double* s = srow + off_t;
                for (std::size_t x = x0; x < x1; ++x) drow[x] += wv * s[x];
              } else {
                for (std::size_t x = x0; x < x1; ++x)
                  drow[x] += wv * srow[static_cast<long long>(x) * stride.time + off_t];
              }
            }
          }
        }
      }
      if (relu)
        for (double& v : dst) v = v > 0.0 ? v : 0.0;
    }
  }
  return node;
}

TapeNode pool_node(const Tensor4& in, const Pool& p, std::size_t layer) {
  TapeNode node;
  node.op = OpKind::pool;
  node.layer = layer;
  node.kernel = p.kernel;
  node.stride = p.stride;
  node.pool_kind = p.kind;
  node.padding = {same_pad(in.freq(), p.kernel.freq, p.stride.freq, 1),
                  same_pad(in.time(), p.kernel.time, p.stride.time, 1)};
  const std::size_t F = in.freq(), T = in.time();
  const std::size_t OF = out_size(F, p.stride.freq), OT = out_size(T, p.stride.time);
  node.value = Tensor4(in.batch(), in.channels(), OF, OT);
  if (p.kind == PoolKind::max) node.argmax.assign(node.value.size(), 0);

  for (std::size_t n = 0; n < in.batch(); ++n) {
    for (std::size_t c = 0; c < in.channels(); ++c) {
      std::span<const double> src = in.plane(n, c);
      for (std::size_t y = 0; y < OF; ++y) {
        auto [iy0, iy1] = input_span(y, y + 1, p.stride.freq, node.padding.freq, p.kernel.freq, 1, F);
        for (std::size_t x = 0; x < OT; ++x) {
          auto [ix0, ix1] = input_span(x, x + 1, p.stride.time, node.padding.time, p.kernel.time, 1, T);
          const std::size_t out_off = node.value.offset(n, c, y, x);
          if (p.kind == PoolKind::max) {
            double best = 0.0;
            std::size_t best_at = iy0 * T + ix0;
            bool first = true;
            for (std::size_t iy = iy0; iy < iy1; ++iy)
              for (std::size_t ix = ix0; ix < ix1; ++ix) {
                const double v = src[iy * T + ix];
                if (first || v > best) {
                  best = v;
                  best_at = iy * T + ix;
                  first = false;
                }
              }
            node.value.data()[out_off] = best;
            node.argmax[out_off] = best_at;
          } else {
            double sum = 0.0;
            for (std::size_t iy = iy0; iy < iy1; ++iy)
              for (std::size_t ix = ix0; ix < ix1; ++ix) sum += src[iy * T + ix];
            node.value.data()[out_off] = sum / static_cast<double>((iy1 - iy0) * (ix1 - ix0));
          }
        }
      }
    }
  }
  return node;
}

void check_spatial(const Tensor4& t, std::size_t layer) {
  if (t.freq() == 0 || t.time() == 0)
    throw EngineError("dimension underflow at layer " + std::to_string(layer) + ": " +
                      std::to_string(t.freq()) + "x" + std::to_string(t.time()));
}

}  // namespace

ForwardResult forward(const NetworkSpec& net, const WeightInit& init, const Tensor4& input) {
  return forward(net, std::make_shared<const NetworkWeights>(materialize_weights(net, init)), input);
}

ForwardResult forward(const NetworkSpec& net, std::shared_ptr<const NetworkWeights> weights,
                      const Tensor4& input) {
  require_valid(net);
  if (input.channels() != static_cast<std::size_t>(net.input_channels))
    throw EngineError("input has " + std::to_string(input.channels()) + " channels, network expects " +
                      std::to_string(net.input_channels));
  if (input.batch() == 0) throw EngineError("empty batch");
  check_spatial(input, 0);

  Tape tape;
  tape.weights = std::move(weights);
  auto& nodes = tape.nodes;
  auto push = [&](TapeNode node) {
    nodes.push_back(std::move(node));
    return static_cast<int>(nodes.size()) - 1;
  };
  auto weights_for = [&](std::size_t layer) -> const ConvWeights& {
    auto it = tape.weights->layers.find(layer);
    if (it == tape.weights->layers.end())
      throw EngineError("no weights for layer " + std::to_string(layer));
    return it->second;
  };

  TapeNode in_node;
  in_node.value = input;
  int cur = push(std::move(in_node));
  int block_in = -1;
  std::size_t block_begin = 0;
  std::optional<Projection> projection;
  bool in_dense = false;
  int feature = -1;

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (const auto* c = l.as<Conv>()) {
      int out = push(conv_node(nodes[static_cast<std::size_t>(cur)].value, c->kernel, c->stride,
                               c->dilation, weights_for(i), c->activation == Activation::relu, i));
      nodes.back().inputs = {cur};
      check_spatial(nodes.back().value, i);
      if (in_dense) {
        const Tensor4& a = nodes[static_cast<std::size_t>(cur)].value;
        const Tensor4& b = nodes[static_cast<std::size_t>(out)].value;
        TapeNode cat;
        cat.op = OpKind::concat;
        cat.layer = i;
        cat.inputs = {cur, out};
        cat.value = Tensor4(a.batch(), a.channels() + b.channels(), a.freq(), a.time());
        for (std::size_t n = 0; n < a.batch(); ++n) {
          for (std::size_t ch = 0; ch < a.channels(); ++ch)
            std::ranges::copy(a.plane(n, ch), cat.value.plane(n, ch).begin());
          for (std::size_t ch = 0; ch < b.channels(); ++ch)
            std::ranges::copy(b.plane(n, ch), cat.value.plane(n, a.channels() + ch).begin());
        }
        out = push(std::move(cat));
      }
      cur = out;
    } else if (const auto* p = l.as<Pool>()) {
      TapeNode node = pool_node(nodes[static_cast<std::size_t>(cur)].value, *p, i);
      node.inputs = {cur};
      check_spatial(node.value, i);
      cur = push(std::move(node));
    } else if (const auto* r = l.as<ResidualBegin>()) {
      block_in = cur;
      block_begin = i;
      projection = r->projection;
    } else if (l.is<ResidualEnd>()) {
      int shortcut = block_in;
      if (projection) {
        TapeNode node = conv_node(nodes[static_cast<std::size_t>(block_in)].value, projection->kernel,
                                  projection->stride, {1, 1}, weights_for(block_begin), false,
                                  block_begin);
        node.inputs = {block_in};
        shortcut = push(std::move(node));
      }
      const Tensor4& a = nodes[static_cast<std::size_t>(cur)].value;
      const Tensor4& b = nodes[static_cast<std::size_t>(shortcut)].value;
      if (a.dims() != b.dims())
        throw EngineError("residual block at layer " + std::to_string(block_begin) +
                          ": shortcut shape does not match main path");
      TapeNode add;
      add.op = OpKind::add;
      add.layer = i;
      add.inputs = {cur, shortcut};
      add.value = a;
      auto dst = add.value.data();
      auto src = b.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      cur = push(std::move(add));
    } else if (l.is<DenseBegin>()) {
      in_dense = true;
    } else if (l.is<DenseEnd>()) {
      in_dense = false;
    } else if (l.is<GlobalAvgPool>()) {
      feature = cur;
      const Tensor4& a = nodes[static_cast<std::size_t>(cur)].value;
      TapeNode g;
      g.op = OpKind::global_avg;
      g.layer = i;
      g.inputs = {cur};
      g.value = Tensor4(a.batch(), a.channels(), 1, 1);
      const double area = static_cast<double>(a.freq() * a.time());
      for (std::size_t n = 0; n < a.batch(); ++n)
        for (std::size_t ch = 0; ch < a.channels(); ++ch) {
          double s = 0.0;
          for (double v : a.plane(n, ch)) s += v;
          g.value.at(n, ch, 0, 0) = s / area;
        }
      cur = push(std::move(g));
    } else if (l.is<Classifier>()) {
      TapeNode node = conv_node(nodes[static_cast<std::size_t>(cur)].value, {1, 1}, {1, 1}, {1, 1},
                                weights_for(i), false, i);
      node.op = OpKind::classifier;
      node.inputs = {cur};
      cur = push(std::move(node));
    }
  }
  tape.feature_node = feature >= 0 ? feature : cur;
  tape.output_node = cur;
  ForwardResult result;
  result.output = tape.nodes[static_cast<std::size_t>(cur)].value;
  result.tape = std::move(tape);
  return result;
}

namespace {

void check_location(const Tensor4& feat, Pixel2 loc, const ChannelMode& mode) {
  if (loc.freq >= feat.freq() || loc.time >= feat.time())
    throw EngineError("location (" + std::to_string(loc.freq) + ", " + std::to_string(loc.time) +
                      ") outside the " + std::to_string(feat.freq()) + "x" +
                      std::to_string(feat.time()) + " feature map");
  if (const auto* s = std::get_if<SingleChannel>(&mode); s && s->index >= feat.channels())
    throw EngineError("channel " + std::to_string(s->index) + " out of range");
}

double seeded_sum(const Tensor4& feat, Pixel2 loc, const ChannelMode& mode, std::size_t n) {
  if (const auto* s = std::get_if<SingleChannel>(&mode)) return feat.at(n, s->index, loc.freq, loc.time);
  double sum = 0.0;
  for (std::size_t c = 0; c < feat.channels(); ++c) sum += feat.at(n, c, loc.freq, loc.time);
  return sum;
}

void conv_backward(const TapeNode& node, const Tensor4& in, const Tensor4& grad_out, const Box& box,
                   Tensor4& grad_in, Box& in_box) {
  const ConvWeights& w = *node.weights;
  const std::size_t F = in.freq(), T = in.time();
  const std::size_t outc = grad_out.channels(), inc = in.channels();

  Tensor4 g = grad_out;
  if (node.relu) {
    auto gv = g.data();
    auto v = node.value.data();
    for (std::size_t k = 0; k < gv.size(); ++k)
      if (!(v[k] > 0.0)) gv[k] = 0.0;
  }

  for (std::size_t n = 0; n < in.batch(); ++n)
    for (std::size_t o = 0; o < outc; ++o) {
      std::span<const double> gsrc = g.plane(n, o);
      for (std::size_t i = 0; i < inc; ++i) {
        std::span<double> dst = grad_in.plane(n, i);
        for (int a = 0; a < node.kernel.freq; ++a) {
          const long long off_f = static_cast<long long>(a) * node.dilation.freq - node.padding.freq;
          for (int b = 0; b < node.kernel.time; ++b) {
            const double wv = w.kernel.at(o, i, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            if (wv == 0.0) continue;
            const long long off_t = static_cast<long long>(b) * node.dilation.time - node.padding.time;
            for (std::size_t y = box.f0; y < box.f1; ++y) {
              const long long iy = static_cast<long long>(y) * node.stride.freq + off_f;
              if (iy < 0 || iy >= static_cast<long long>(F)) continue;
              for (std::size_t x = box.t0; x < box.t1; ++x) {
                const long long ix = static_cast<long long>(x) * node.stride.time + off_t;
                if (ix < 0 || ix >= static_cast<long long>(T)) continue;
                dst[static_cast<std::size_t>(iy) * T + static_cast<std::size_t>(ix)] +=
                    wv * gsrc[y * grad_out.time() + x];
              }
            }
          }
        }
      }
    }
  auto [f0, f1] = input_span(box.f0, box.f1, node.stride.freq, node.padding.freq, node.kernel.freq,
                             node.dilation.freq, F);
  auto [t0, t1] = input_span(box.t0, box.t1, node.stride.time, node.padding.time, node.kernel.time,
                             node.dilation.time, T);
  in_box.merge({f0, f1, t0, t1});
}

void pool_backward(const TapeNode& node, const Tensor4& in, const Tensor4& grad_out, const Box& box,
                   Tensor4& grad_in, Box& in_box) {
  const std::size_t F = in.freq(), T = in.time();
  for (std::size_t n = 0; n < in.batch(); ++n)
    for (std::size_t c = 0; c < in.channels(); ++c) {
      std::span<double> dst = grad_in.plane(n, c);
      for (std::size_t y = box.f0; y < box.f1; ++y)
        for (std::size_t x = box.t0; x < box.t1; ++x) {
          const std::size_t off = grad_out.offset(n, c, y, x);
          const double gv = grad_out.data()[off];
          if (gv == 0.0) continue;
          if (node.pool_kind == PoolKind::max) {
            dst[node.argmax[off]] += gv;
          } else {
            auto [iy0, iy1] = input_span(y, y + 1, node.stride.freq, node.padding.freq, node.kernel.freq, 1, F);
            auto [ix0, ix1] = input_span(x, x + 1, node.stride.time, node.padding.time, node.kernel.time, 1, T);
            const double share = gv / static_cast<double>((iy1 - iy0) * (ix1 - ix0));
            for (std::size_t iy = iy0; iy < iy1; ++iy)
              for (std::size_t ix = ix0; ix < ix1; ++ix) dst[iy * T + ix] += share;
          }
        }
    }
  auto [f0, f1] = input_span(box.f0, box.f1, node.stride.freq, node.padding.freq, node.kernel.freq, 1, F);
  auto [t0, t1] = input_span(box.t0, box.t1, node.stride.time, node.padding.time, node.kernel.time, 1, T);
  in_box.merge({f0, f1, t0, t1});
}

}  // namespace

Tensor4 backward_from_pixel(const Tape& tape, Pixel2 location, ChannelMode mode) {
  const auto& nodes = tape.nodes;
  const auto feat_idx = static_cast<std::size_t>(tape.feature_node);
  const Tensor4& feat = nodes[feat_idx].value;
  check_location(feat, location, mode);

  std::vector<Tensor4> grads(nodes.size());
  std::vector<Box> boxes(nodes.size());
  std::vector<bool> live(nodes.size(), false);
  auto ensure = [&](std::size_t k) {
    if (!live[k]) {
      const auto& d = nodes[k].value.dims();
      grads[k] = Tensor4(d[0], d[1], d[2], d[3]);
      live[k] = true;
    }
  };

  ensure(feat_idx);
  for (std::size_t n = 0; n < feat.batch(); ++n) {
    if (const auto* s = std::get_if<SingleChannel>(&mode)) {
      grads[feat_idx].at(n, s->index, location.freq, location.time) = 1.0;
    } else {
      for (std::size_t c = 0; c < feat.channels(); ++c)
        grads[feat_idx].at(n, c, location.freq, location.time) = 1.0;
    }
  }
  boxes[feat_idx] = {location.freq, location.freq + 1, location.time, location.time + 1};

  for (std::size_t k = feat_idx + 1; k-- > 0;) {
    if (!live[k]) continue;
    const TapeNode& node = nodes[k];
    switch (node.op) {
      case OpKind::input:
        break;
      case OpKind::conv: {
        const auto src = static_cast<std::size_t>(node.inputs[0]);
        ensure(src);
        conv_backward(node, nodes[src].value, grads[k], boxes[k], grads[src], boxes[src]);
        break;
      }
      case OpKind::pool: {
        const auto src = static_cast<std::size_t>(node.inputs[0]);
        ensure(src);
        pool_backward(node, nodes[src].value, grads[k], boxes[k], grads[src], boxes[src]);
        break;
      }
      case OpKind::add:
        for (int in : node.inputs) {
          const auto src = static_cast<std::size_t>(in);
          ensure(src);
          auto dst = grads[src].data();
          auto g = grads[k].data();
          for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += g[e];
          boxes[src].merge(boxes[k]);
        }
        break;
      case OpKind::concat: {
        std::size_t ch_offset = 0;
        for (int in : node.inputs) {
          const auto src = static_cast<std::size_t>(in);
          ensure(src);
          const std::size_t chans = nodes[src].value.channels();
          for (std::size_t n = 0; n < node.value.batch(); ++n)
            for (std::size_t c = 0; c < chans; ++c) {
              auto dst = grads[src].plane(n, c);
              auto g = grads[k].plane(n, ch_offset + c);
              for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += g[e];
            }
          ch_offset += chans;
          boxes[src].merge(boxes[k]);
        }
        break;
      }
      case OpKind::global_avg:
      case OpKind::classifier:
        throw EngineError("backward seeded past the feature map");
    }
    if (k != 0) grads[k] = Tensor4();  // release
  }
  if (!live[0]) {
    const auto& d = nodes[0].value.dims();
    return Tensor4(d[0], d[1], d[2], d[3]);
  }
  return std::move(grads[0]);
}

double finite_diff_gradient(const NetworkSpec& net, std::shared_ptr<const NetworkWeights> weights,
                            const Tensor4& input, Pixel2 location, std::size_t channel, Pixel2 pixel,
                            ChannelMode mode) {
  Tensor4 x = input.sample(0);
  double& v = x.at(0, channel, pixel.freq, pixel.time);
  const double orig = v;
  const double h = 1e-5 * std::max(1.0, std::abs(orig));
  auto eval = [&] {
    ForwardResult r = forward(net, weights, x);
    const Tensor4& feat = r.tape.nodes[static_cast<std::size_t>(r.tape.feature_node)].value;
    check_location(feat, location, mode);
    return seeded_sum(feat, location, mode, 0);
  };
  v = orig + h;
  const double up = eval();
  v = orig - h;
  const double down = eval();
  return (up - down) / (2.0 * h);
}

Pixel2 center_location(const NetworkSpec& net, std::size_t freq, std::size_t time) {
  for (const Layer& l : net.layers) {
    if (l.is<GlobalAvgPool>()) break;
    Axis2 s{1, 1};
    if (const auto* c = l.as<Conv>()) s = c->stride;
    if (const auto* p = l.as<Pool>()) s = p->stride;
    freq = out_size(freq, s.freq);
    time = out_size(time, s.time);
  }
  return {freq / 2, time / 2};
}

ErfMap estimate_erf(const NetworkSpec& net, const WeightInit& init, const Tensor4& inputs,
                    const ErfOptions& opts) {
  if (inputs.batch() == 0) throw EngineError("estimate_erf needs at least one sample");
  auto weights = std::make_shared<const NetworkWeights>(materialize_weights(net, init));
  const Pixel2 loc = std::holds_alternative<Pixel2>(opts.location)
                         ? std::get<Pixel2>(opts.location)
                         : center_location(net, inputs.freq(), inputs.time());

  const std::size_t batch = inputs.batch();
  const std::size_t F = inputs.freq(), T = inputs.time();
  std::vector<std::vector<double>> per_sample(batch);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(batch);

  auto worker = [&] {
    for (std::size_t n = next++; n < batch; n = next++) {
      try {
        ForwardResult r = forward(net, weights, inputs.sample(n));
        Tensor4 g = backward_from_pixel(r.tape, loc, opts.channels);
        std::vector<double> grid(F * T, 0.0);
        for (std::size_t c = 0; c < g.channels(); ++c) {
          auto plane = g.plane(0, c);
          for (std::size_t e = 0; e < grid.size(); ++e) grid[e] += std::abs(plane[e]);
        }
        per_sample[n] = std::move(grid);
      } catch (...) {
        errors[n] = std::current_exception();
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(batch)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ErfMap map;
  map.raw = Grid2{F, T, std::vector<double>(F * T, 0.0)};
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t e = 0; e < F * T; ++e) map.raw.values[e] += per_sample[n][e];
  for (double& v : map.raw.values) v /= static_cast<double>(batch);

  double peak = 0.0;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t)
      if (map.raw.at(f, t) > peak) {
        peak = map.raw.at(f, t);
        map.peak = {f, t};
      }

  map.grid = Grid2{F, T, std::vector<double>(F * T, 0.0)};
  if (peak == 0.0) {
    map.degenerate = true;
    return map;
  }
  for (std::size_t e = 0; e < F * T; ++e) map.grid.values[e] = map.raw.values[e] / peak;

  std::size_t f0 = F, f1 = 0, t0 = T, t1 = 0;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t)
      if (map.grid.at(f, t) > kSupportThreshold) {
        f0 = std::min(f0, f);
        f1 = std::max(f1, f + 1);
        t0 = std::min(t0, t);
        t1 = std::max(t1, t + 1);
      }
  map.support.origin = {f0, t0};
  map.support.extent = {static_cast<int>(f1 - f0), static_cast<int>(t1 - t0)};
  return map;
}

Tensor4 constant_input(std::size_t batch, std::size_t channels, std::size_t freq, std::size_t time,
                       double value) {
  return Tensor4(batch, channels, freq, time, value);
}

Tensor4 random_input(std::size_t batch, std::size_t channels, std::size_t freq, std::size_t time,
                     std::uint64_t seed, double lo, double hi) {
  Tensor4 t(batch, channels, freq, time);
  std::mt19937_64 eng(seed);
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(eng);
  return t;
}

}  // namespace rfkit::erf
