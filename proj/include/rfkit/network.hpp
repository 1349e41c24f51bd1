#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rfkit/axis.hpp"

namespace rfkit {

enum class Activation { relu, linear };
enum class PoolKind { max, average };

struct Conv {
  Axis2 kernel{1, 1};
  Axis2 stride{1, 1};
  Axis2 dilation{1, 1};
  int in_channels = 1;
  int out_channels = 1;
  bool has_batchnorm = true;
  bool has_bias = false;
  Activation activation = Activation::relu;

  bool operator==(const Conv&) const = default;
};

struct Pool {
  PoolKind kind = PoolKind::max;
  Axis2 kernel{2, 2};
  Axis2 stride{2, 2};

  bool operator==(const Pool&) const = default;
};

/// 1xN projection on the residual shortcut. Counted as a conv with batchnorm and no bias.
struct Projection {
  Axis2 kernel{1, 1};
  Axis2 stride{1, 1};

  bool operator==(const Projection&) const = default;
};

struct ResidualBegin {
  std::optional<Projection> projection;  // nullopt: identity shortcut

  bool operator==(const ResidualBegin&) const = default;
};
struct ResidualEnd {
  bool operator==(const ResidualEnd&) const = default;
};
struct DenseBegin {
  int growth_rate = 1;

  bool operator==(const DenseBegin&) const = default;
};
struct DenseEnd {
  bool operator==(const DenseEnd&) const = default;
};
struct GlobalAvgPool {
  bool operator==(const GlobalAvgPool&) const = default;
};
struct Classifier {
  int classes = 1;

  bool operator==(const Classifier&) const = default;
};

using LayerKind = std::variant<Conv, Pool, ResidualBegin, ResidualEnd, DenseBegin, DenseEnd,
                               GlobalAvgPool, Classifier>;

struct SourceLoc {
  int line = 0;
  int column = 0;
};

struct Layer {
  LayerKind kind;
  SourceLoc loc;  // 0:0 when built programmatically

  Layer() = default;
  template <typename T>
  Layer(T k, SourceLoc l = {}) : kind(std::move(k)), loc(l) {}

  template <typename T>
  bool is() const { return std::holds_alternative<T>(kind); }
  template <typename T>
  const T* as() const { return std::get_if<T>(&kind); }
  template <typename T>
  T* as() { return std::get_if<T>(&kind); }

  // Structural equality ignores source positions.
  bool operator==(const Layer& other) const { return kind == other.kind; }
};

struct NetworkSpec {
  std::string name = "unnamed";
  int input_channels = 1;
  std::vector<Layer> layers;

  bool operator==(const NetworkSpec&) const = default;
};

/// Short human-readable tag such as "conv5x5s2" or "maxpool2x2s2".
std::string describe(const LayerKind& layer);

// ---------------------------------------------------------------------------
// Validation

enum class DiagKind {
  bad_geometry,
  channel_mismatch,
  unbalanced_block,
  nested_block,
  empty_block,
  stride_mismatch,
  dense_layer,
  bad_tail,
};

struct Diagnostic {
  std::size_t layer = 0;
  DiagKind kind = DiagKind::bad_geometry;
  std::string message;
};

std::string to_string(DiagKind kind);

std::vector<Diagnostic> validate_network(const NetworkSpec& net);

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

/// Throws ValidationError if validate_network reports anything.
void require_valid(const NetworkSpec& net);

// ---------------------------------------------------------------------------
// Structure helpers

struct BlockSpan {
  std::size_t begin = 0;  // index of the begin marker
  std::size_t end = 0;    // index of the matching end marker
  bool dense = false;
};

/// Top-level blocks in network order. Assumes markers are balanced.
std::vector<BlockSpan> block_spans(const NetworkSpec& net);

/// Channel count produced after each layer (same length as layers).
std::vector<int> channels_after(const NetworkSpec& net);

/// Recomputes every conv's in_channels from the chain. Used by the parser and
/// by rewrites that remove layers.
void infer_in_channels(NetworkSpec& net);

/// Sets each residual shortcut's stride to its main path's stride product,
/// promoting identity shortcuts to 1x1 projections where needed.
void rederive_shortcuts(NetworkSpec& net);

// ---------------------------------------------------------------------------
// Parameter counting

struct ParamCount {
  std::int64_t total = 0;
  std::vector<std::pair<std::size_t, std::int64_t>> by_layer;
};

/// conv: kf*kt*in*out (+out bias) (+2*out batchnorm); projection shortcuts as
/// convs with batchnorm; classifier: features*classes + classes.
ParamCount count_params(const NetworkSpec& net);

// ---------------------------------------------------------------------------
// Programmatic construction

class NetworkBuilder {
 public:
  explicit NetworkBuilder(std::string name, int input_channels = 1);

  struct ConvOpts {
    Axis2 dilation{1, 1};
    bool batchnorm = true;
    bool bias = false;
    Activation activation = Activation::relu;
  };

  NetworkBuilder& conv(Axis2 kernel, Axis2 stride, int out_channels, ConvOpts opts);
  NetworkBuilder& conv(Axis2 kernel, Axis2 stride, int out_channels) {
    return conv(kernel, stride, out_channels, ConvOpts{});
  }
  NetworkBuilder& pool(PoolKind kind, Axis2 kernel, Axis2 stride);
  NetworkBuilder& max_pool2() { return pool(PoolKind::max, {2, 2}, {2, 2}); }
  NetworkBuilder& begin_residual(std::optional<Projection> projection = std::nullopt);
  NetworkBuilder& end_residual();
  NetworkBuilder& begin_dense(int growth_rate);
  NetworkBuilder& end_dense();
  NetworkBuilder& global_avg_pool();
  NetworkBuilder& classifier(int classes);

  /// Fills in conv in_channels; does not validate.
  NetworkSpec build() const;

 private:
  NetworkSpec net_;
};

}  // namespace rfkit
