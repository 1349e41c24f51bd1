#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "rfkit/network.hpp"
#include "rfkit/tensor.hpp"

namespace rfkit::erf {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kernel laid out as (out, in, freq, time). Bias is empty when the layer has none.
/// The classifier uses a (classes, features, 1, 1) kernel.
struct ConvWeights {
  Tensor4 kernel;
  std::vector<double> bias;
};

struct AllOnes {};

/// Uniform in [-a, a] with a = scale * sqrt(3 / fan_in), drawn from a
/// mt19937_64 stream in layer order.
struct Seeded {
  std::uint64_t seed = 0;
  double scale = 1.0;
};

/// Weights keyed by layer index: convs at their own index, projection
/// shortcuts at the ResidualBegin index, the classifier at its index.
struct Explicit {
  std::map<std::size_t, ConvWeights> layers;
};

using WeightInit = std::variant<AllOnes, Seeded, Explicit>;

struct NetworkWeights {
  std::map<std::size_t, ConvWeights> layers;
};

NetworkWeights materialize_weights(const NetworkSpec& net, const WeightInit& init);

struct Pixel2 {
  std::size_t freq = 0;
  std::size_t time = 0;

  bool operator==(const Pixel2&) const = default;
};

enum class OpKind { input, conv, pool, add, concat, global_avg, classifier };

struct TapeNode {
  OpKind op = OpKind::input;
  std::vector<int> inputs;
  Tensor4 value;
  std::size_t layer = 0;  // originating layer index (input: 0)

  // conv / pool geometry
  Axis2 kernel{1, 1};
  Axis2 stride{1, 1};
  Axis2 dilation{1, 1};
  Axis2 padding{0, 0};  // leading zero-padding per axis
  bool relu = false;
  PoolKind pool_kind = PoolKind::max;
  const ConvWeights* weights = nullptr;
  std::vector<std::size_t> argmax;  // max pool: flat plane offset of the chosen input
};

/// Execution record of one forward pass. Holds its own copy of the weights.
struct Tape {
  std::vector<TapeNode> nodes;
  int feature_node = 0;  // last spatial map before global averaging
  int output_node = 0;
  std::shared_ptr<const NetworkWeights> weights;
};

struct ForwardResult {
  Tensor4 output;
  Tape tape;
};

/// Conv layers use "same" zero padding (output size ceil(n / stride)); pools
/// use the same geometry with padded taps excluded. Batchnorm is the identity.
/// A residual block adds its shortcut to the main path output.
ForwardResult forward(const NetworkSpec& net, const WeightInit& init, const Tensor4& input);
ForwardResult forward(const NetworkSpec& net, std::shared_ptr<const NetworkWeights> weights,
                      const Tensor4& input);

struct AllChannels {};
struct SingleChannel {
  std::size_t index = 0;
};
using ChannelMode = std::variant<AllChannels, SingleChannel>;

/// Seeds 1.0 at `location` of the feature map (every sample; all channels or
/// one) and returns d(seed . features)/d(input).
Tensor4 backward_from_pixel(const Tape& tape, Pixel2 location, ChannelMode mode = AllChannels{});

/// Central difference of the seeded feature sum with respect to input element
/// (sample 0, channel, pixel). Step h = 1e-5 * max(1, |x|).
double finite_diff_gradient(const NetworkSpec& net, std::shared_ptr<const NetworkWeights> weights,
                            const Tensor4& input, Pixel2 location, std::size_t channel,
                            Pixel2 pixel, ChannelMode mode = AllChannels{});

/// Row-major (freq, time) grid.
struct Grid2 {
  std::size_t freq = 0;
  std::size_t time = 0;
  std::vector<double> values;

  double& at(std::size_t f, std::size_t t) { return values[f * time + t]; }
  double at(std::size_t f, std::size_t t) const { return values[f * time + t]; }
  bool operator==(const Grid2&) const = default;
};

struct SupportBox {
  Pixel2 origin;
  Axis2 extent{0, 0};
};

struct ErfMap {
  Grid2 grid;  // normalized so the peak is 1 (all zero when degenerate)
  Grid2 raw;   // batch-averaged absolute gradient before normalization
  Pixel2 peak;
  SupportBox support;
  bool degenerate = false;
};

/// Entries above this fraction of the peak count towards the support box.
inline constexpr double kSupportThreshold = 1e-12;

struct CenterLocation {};
using ErfLocation = std::variant<CenterLocation, Pixel2>;

struct ErfOptions {
  ErfLocation location = CenterLocation{};
  ChannelMode channels = AllChannels{};
  unsigned workers = 1;
};

/// Per sample: forward, backward from the chosen pixel, |gradient| summed over
/// input channels. Samples are reduced in index order, so the result does not
/// depend on the worker count.
ErfMap estimate_erf(const NetworkSpec& net, const WeightInit& init, const Tensor4& inputs,
                    const ErfOptions& opts = {});

/// Center of the feature map the network produces for an input of this size.
Pixel2 center_location(const NetworkSpec& net, std::size_t freq, std::size_t time);

Tensor4 constant_input(std::size_t batch, std::size_t channels, std::size_t freq, std::size_t time,
                       double value = 1.0);
/// Uniform in [lo, hi) from a seeded mt19937_64 stream.
Tensor4 random_input(std::size_t batch, std::size_t channels, std::size_t freq, std::size_t time,
                     std::uint64_t seed, double lo = 0.0, double hi = 1.0);

}  // namespace rfkit::erf
