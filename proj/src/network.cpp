#include "rfkit/network.hpp"

#include <sstream>

#include "overloaded.hpp"

namespace rfkit {

namespace {

using detail::overloaded;

std::string stride_tag(Axis2 s) {
  return s.is_square() ? std::to_string(s.freq) : s.str();
}

bool positive(Axis2 a) { return a.freq >= 1 && a.time >= 1; }

}  // namespace

std::string describe(const LayerKind& layer) {
  return std::visit(
      overloaded{
          [](const Conv& c) {
            std::string s = "conv" + c.kernel.str() + "s" + stride_tag(c.stride);
            if (c.dilation != Axis2{1, 1}) s += "d" + stride_tag(c.dilation);
            return s;
          },
          [](const Pool& p) {
            return std::string(p.kind == PoolKind::max ? "maxpool" : "avgpool") + p.kernel.str() +
                   "s" + stride_tag(p.stride);
          },
          [](const ResidualBegin& r) {
            if (!r.projection) return std::string("resblock");
            return "resblock[proj" + r.projection->kernel.str() + "s" +
                   stride_tag(r.projection->stride) + "]";
          },
          [](const ResidualEnd&) { return std::string("end-resblock"); },
          [](const DenseBegin& d) { return "denseblock[g" + std::to_string(d.growth_rate) + "]"; },
          [](const DenseEnd&) { return std::string("end-denseblock"); },
          [](const GlobalAvgPool&) { return std::string("gap"); },
          [](const Classifier& c) { return "classifier" + std::to_string(c.classes); },
      },
      layer);
}

std::string to_string(DiagKind kind) {
  switch (kind) {
    case DiagKind::bad_geometry: return "bad geometry";
    case DiagKind::channel_mismatch: return "channel mismatch";
    case DiagKind::unbalanced_block: return "unbalanced block";
    case DiagKind::nested_block: return "nested block";
    case DiagKind::empty_block: return "empty block";
    case DiagKind::stride_mismatch: return "stride mismatch";
    case DiagKind::dense_layer: return "invalid dense layer";
    case DiagKind::bad_tail: return "bad tail";
  }
  return "unknown";
}

namespace {

std::string join_diagnostics(const std::vector<Diagnostic>& diags) {
  std::ostringstream os;
  for (std::size_t i = 0; i < diags.size(); ++i) {
    if (i) os << "; ";
    os << "layer " << diags[i].layer << ": " << diags[i].message;
  }
  return os.str();
}

struct OpenBlock {
  std::size_t begin = 0;
  bool dense = false;
  int entering_channels = 0;
  int growth = 0;
  Axis2 stride_product{1, 1};
  int convs = 0;
  std::optional<Projection> projection;
};

}  // namespace

ValidationError::ValidationError(std::vector<Diagnostic> diags)
    : std::runtime_error(join_diagnostics(diags)), diags_(std::move(diags)) {}

std::vector<Diagnostic> validate_network(const NetworkSpec& net) {
  std::vector<Diagnostic> out;
  auto report = [&](std::size_t i, DiagKind k, std::string msg) {
    out.push_back({i, k, to_string(k) + ": " + std::move(msg)});
  };

  if (net.input_channels < 1) report(0, DiagKind::bad_geometry, "input_channels must be >= 1");

  int channels = net.input_channels;
  std::optional<OpenBlock> open;
  bool seen_gap = false;
  const std::size_t n = net.layers.size();

  for (std::size_t i = 0; i < n; ++i) {
    const LayerKind& kind = net.layers[i].kind;
    std::visit(
        overloaded{
            [&](const Conv& c) {
              if (!positive(c.kernel) || !positive(c.stride) || !positive(c.dilation) ||
                  c.out_channels < 1)
                report(i, DiagKind::bad_geometry, "conv sizes and channels must be >= 1");
              if (seen_gap) report(i, DiagKind::bad_tail, "conv after global average pool");
              if (c.in_channels != channels)
                report(i, DiagKind::channel_mismatch,
                       "conv expects " + std::to_string(c.in_channels) + " input channels but " +
                           std::to_string(channels) + " are available");
              if (open && open->dense) {
                if (c.stride != Axis2{1, 1})
                  report(i, DiagKind::dense_layer, "dense block convs must have stride 1x1");
                if (c.out_channels != open->growth)
                  report(i, DiagKind::dense_layer,
                         "dense block conv must emit growth_rate=" + std::to_string(open->growth) +
                             " channels");
                channels = channels + c.out_channels;
              } else {
                channels = c.out_channels;
              }
              if (open) {
                open->stride_product = open->stride_product * c.stride;
                ++open->convs;
              }
            },
            [&](const Pool& p) {
              if (!positive(p.kernel) || !positive(p.stride))
                report(i, DiagKind::bad_geometry, "pool sizes must be >= 1");
              if (seen_gap) report(i, DiagKind::bad_tail, "pool after global average pool");
              if (open && open->dense)
                report(i, DiagKind::dense_layer, "pooling is not allowed inside a dense block");
              if (open) open->stride_product = open->stride_product * p.stride;
            },
            [&](const ResidualBegin& r) {
              if (seen_gap) report(i, DiagKind::bad_tail, "block after global average pool");
              if (open) {
                report(i, DiagKind::nested_block, "blocks cannot be nested");
                return;
              }
              if (r.projection && (!positive(r.projection->kernel) || !positive(r.projection->stride)))
                report(i, DiagKind::bad_geometry, "projection sizes must be >= 1");
              open = OpenBlock{i, false, channels, 0, {1, 1}, 0, r.projection};
            },
            [&](const ResidualEnd&) {
              if (!open || open->dense) {
                report(i, DiagKind::unbalanced_block, "residual block end without matching start");
                return;
              }
              if (open->convs == 0)
                report(open->begin, DiagKind::empty_block, "residual block has no conv");
              if (open->projection) {
                if (open->projection->stride != open->stride_product)
                  report(open->begin, DiagKind::stride_mismatch,
                         "shortcut stride " + open->projection->stride.str() +
                             " != main path stride " + open->stride_product.str());
              } else {
                if (open->stride_product != Axis2{1, 1})
                  report(open->begin, DiagKind::stride_mismatch,
                         "identity shortcut but main path stride is " + open->stride_product.str());
                if (open->entering_channels != channels)
                  report(open->begin, DiagKind::channel_mismatch,
                         "identity shortcut carries " + std::to_string(open->entering_channels) +
                             " channels but main path emits " + std::to_string(channels));
              }
              open.reset();
            },
            [&](const DenseBegin& d) {
              if (seen_gap) report(i, DiagKind::bad_tail, "block after global average pool");
              if (open) {
                report(i, DiagKind::nested_block, "blocks cannot be nested");
                return;
              }
              if (d.growth_rate < 1) report(i, DiagKind::bad_geometry, "growth rate must be >= 1");
              open = OpenBlock{i, true, channels, d.growth_rate, {1, 1}, 0, std::nullopt};
            },
            [&](const DenseEnd&) {
              if (!open || !open->dense) {
                report(i, DiagKind::unbalanced_block, "dense block end without matching start");
                return;
              }
              if (open->convs == 0)
                report(open->begin, DiagKind::empty_block, "dense block has no conv");
              open.reset();
            },
            [&](const GlobalAvgPool&) {
              if (open) report(i, DiagKind::bad_tail, "global average pool inside a block");
              if (seen_gap) report(i, DiagKind::bad_tail, "duplicate global average pool");
              seen_gap = true;
            },
            [&](const Classifier& c) {
              if (c.classes < 1) report(i, DiagKind::bad_geometry, "classes must be >= 1");
              if (i + 1 != n) report(i, DiagKind::bad_tail, "classifier must be the last layer");
              if (!seen_gap)
                report(i, DiagKind::bad_tail, "classifier must follow a global average pool");
              channels = c.classes;
            },
        },
        kind);
  }
  if (open) report(open->begin, DiagKind::unbalanced_block, "block is never closed");
  return out;
}

void require_valid(const NetworkSpec& net) {
  auto diags = validate_network(net);
  if (!diags.empty()) throw ValidationError(std::move(diags));
}

std::vector<BlockSpan> block_spans(const NetworkSpec& net) {
  std::vector<BlockSpan> spans;
  std::optional<BlockSpan> open;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (l.is<ResidualBegin>() || l.is<DenseBegin>()) {
      open = BlockSpan{i, i, l.is<DenseBegin>()};
    } else if ((l.is<ResidualEnd>() || l.is<DenseEnd>()) && open) {
      open->end = i;
      spans.push_back(*open);
      open.reset();
    }
  }
  return spans;
}

std::vector<int> channels_after(const NetworkSpec& net) {
  std::vector<int> out;
  out.reserve(net.layers.size());
  int channels = net.input_channels;
  bool in_dense = false;
  for (const Layer& l : net.layers) {
    if (const auto* c = l.as<Conv>()) {
      channels = in_dense ? channels + c->out_channels : c->out_channels;
    } else if (l.is<DenseBegin>()) {
      in_dense = true;
    } else if (l.is<DenseEnd>()) {
      in_dense = false;
    } else if (const auto* k = l.as<Classifier>()) {
      channels = k->classes;
    }
    out.push_back(channels);
  }
  return out;
}

void infer_in_channels(NetworkSpec& net) {
  int channels = net.input_channels;
  bool in_dense = false;
  for (Layer& l : net.layers) {
    if (auto* c = l.as<Conv>()) {
      c->in_channels = channels;
      channels = in_dense ? channels + c->out_channels : c->out_channels;
    } else if (l.is<DenseBegin>()) {
      in_dense = true;
    } else if (l.is<DenseEnd>()) {
      in_dense = false;
    } else if (const auto* k = l.as<Classifier>()) {
      channels = k->classes;
    }
  }
}

void rederive_shortcuts(NetworkSpec& net) {
  for (const BlockSpan& span : block_spans(net)) {
    if (span.dense) continue;
    Axis2 product{1, 1};
    for (std::size_t i = span.begin + 1; i < span.end; ++i) {
      if (const auto* c = net.layers[i].as<Conv>()) product = product * c->stride;
      if (const auto* p = net.layers[i].as<Pool>()) product = product * p->stride;
    }
    auto& begin = *net.layers[span.begin].as<ResidualBegin>();
    if (begin.projection) {
      begin.projection->stride = product;
    } else if (product != Axis2{1, 1}) {
      begin.projection = Projection{{1, 1}, product};
    }
  }
}

ParamCount count_params(const NetworkSpec& net) {
  ParamCount pc;
  const std::vector<int> after = channels_after(net);
  auto conv_params = [](Axis2 k, std::int64_t in, std::int64_t out, bool bn, bool bias) {
    std::int64_t p = std::int64_t{k.freq} * k.time * in * out;
    if (bias) p += out;
    if (bn) p += 2 * out;
    return p;
  };

  std::vector<std::size_t> residual_end(net.layers.size(), 0);
  for (const BlockSpan& s : block_spans(net))
    if (!s.dense) residual_end[s.begin] = s.end;

  int channels = net.input_channels;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    std::int64_t p = 0;
    if (const auto* c = l.as<Conv>()) {
      p = conv_params(c->kernel, c->in_channels, c->out_channels, c->has_batchnorm, c->has_bias);
    } else if (const auto* r = l.as<ResidualBegin>(); r && r->projection) {
      const int out = after[residual_end[i]];
      p = conv_params(r->projection->kernel, channels, out, true, false);
    } else if (const auto* k = l.as<Classifier>()) {
      p = std::int64_t{channels} * k->classes + k->classes;
    }
    pc.by_layer.emplace_back(i, p);
    pc.total += p;
    channels = after[i];
  }
  return pc;
}

NetworkBuilder::NetworkBuilder(std::string name, int input_channels) {
  net_.name = std::move(name);
  net_.input_channels = input_channels;
}

NetworkBuilder& NetworkBuilder::conv(Axis2 kernel, Axis2 stride, int out_channels, ConvOpts opts) {
  Conv c;
  c.kernel = kernel;
  c.stride = stride;
  c.dilation = opts.dilation;
  c.out_channels = out_channels;
  c.has_batchnorm = opts.batchnorm;
  c.has_bias = opts.bias;
  c.activation = opts.activation;
  net_.layers.emplace_back(c);
  return *this;
}

NetworkBuilder& NetworkBuilder::pool(PoolKind kind, Axis2 kernel, Axis2 stride) {
  net_.layers.emplace_back(Pool{kind, kernel, stride});
  return *this;
}

NetworkBuilder& NetworkBuilder::begin_residual(std::optional<Projection> projection) {
  net_.layers.emplace_back(ResidualBegin{projection});
  return *this;
}

NetworkBuilder& NetworkBuilder::end_residual() {
  net_.layers.emplace_back(ResidualEnd{});
  return *this;
}

NetworkBuilder& NetworkBuilder::begin_dense(int growth_rate) {
  net_.layers.emplace_back(DenseBegin{growth_rate});
  return *this;
}

NetworkBuilder& NetworkBuilder::end_dense() {
  net_.layers.emplace_back(DenseEnd{});
  return *this;
}

NetworkBuilder& NetworkBuilder::global_avg_pool() {
  net_.layers.emplace_back(GlobalAvgPool{});
  return *this;
}

NetworkBuilder& NetworkBuilder::classifier(int classes) {
  net_.layers.emplace_back(Classifier{classes});
  return *this;
}

NetworkSpec NetworkBuilder::build() const {
  NetworkSpec out = net_;
  infer_in_channels(out);
  return out;
}

}  // namespace rfkit
