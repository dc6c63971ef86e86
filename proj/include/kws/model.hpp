#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kws/numerics.hpp"
#include "kws/rng.hpp"
#include "kws/spectrogram.hpp"

namespace kws {

// One SVDF layer. Encoder layers are followed by a linear bottleneck of
// `bottleneck` units; decoder layers use bottleneck = 0 (none).
struct SvdfLayerSpec {
  int nodes = 1;
  int memory = 1;
  int bottleneck = 0;

  friend bool operator==(const SvdfLayerSpec&, const SvdfLayerSpec&) = default;
};

struct ModelConfig {
  int input_bins = 16;
  std::vector<SvdfLayerSpec> encoder;
  std::vector<SvdfLayerSpec> decoder;

  // 16 bins; 4 x (32 nodes, memory 8, bottleneck 16); 3 x (16 nodes, memory 16).
  static ModelConfig desk_default();

  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Offsets of one layer's blocks inside the flat parameter vector. Blocks are
// stored in the order: feature filters (N x D), time filters (N x T), biases
// (N), then bottleneck weights (Nb x N) and bottleneck biases (Nb).
struct LayerLayout {
  int input_dim = 0;
  int nodes = 0;
  int memory = 0;
  int bottleneck = 0;
  std::size_t feature_filters = 0;
  std::size_t time_filters = 0;
  std::size_t biases = 0;
  std::size_t bottleneck_weights = 0;
  std::size_t bottleneck_biases = 0;

  int output_dim() const { return bottleneck > 0 ? bottleneck : nodes; }
  std::size_t end() const;
};

class ModelLayout {
 public:
  explicit ModelLayout(const ModelConfig& config);

  // Encoder layers first, then decoder layers.
  const std::vector<LayerLayout>& layers() const { return layers_; }
  std::size_t output_weights() const { return output_weights_; }
  std::size_t output_bias() const { return output_bias_; }
  int output_input_dim() const { return output_input_dim_; }
  std::size_t total() const { return total_; }
  int input_bins() const { return input_bins_; }

 private:
  std::vector<LayerLayout> layers_;
  std::size_t output_weights_ = 0;
  std::size_t output_bias_ = 0;
  int output_input_dim_ = 0;
  std::size_t total_ = 0;
  int input_bins_ = 0;
};

std::size_t param_count(const ModelConfig& config);

// Glorot-uniform filter matrices, zero biases.
ParamVector init_params(const ModelConfig& config, Rng& rng);

inline constexpr double kLogitClamp = 30.0;

// Read-only view of one SVDF layer's filters.
struct SvdfLayerParams {
  int nodes = 0;
  int input_dim = 0;
  int memory = 0;
  std::span<const double> feature_filters;  // nodes x input_dim, row-major
  std::span<const double> time_filters;     // nodes x memory, row-major; column 0 = current frame
  std::span<const double> biases;           // nodes

  static SvdfLayerParams view(const ParamVector& params, const LayerLayout& layer);
};

// Per-node ring buffer of the last `memory` feature-filter outputs.
class SvdfState {
 public:
  SvdfState() = default;
  SvdfState(int nodes, int memory);

  void reset();
  int nodes() const { return nodes_; }
  int memory() const { return memory_; }

  // Filtered output of `node` from `lag` frames ago (0 = current).
  double at(int node, int lag) const;

  // Pushes this frame's filtered outputs, evicting the oldest.
  void push(std::span<const double> filtered);

 private:
  int nodes_ = 0;
  int memory_ = 0;
  int head_ = 0;
  std::vector<double> buffer_;
};

/// One streaming step of an SVDF layer:
///   s_n(t)  = feature_filters[n] . x_t
///   out_n(t) = ReLU(sum_tau time_filters[n][tau] * s_n(t - tau) + bias_n)
/// with s_n at negative times reading as zero. `state` advances by one frame.
void svdf_forward(const SvdfLayerParams& layer, SvdfState& state, std::span<const double> x,
                  std::span<double> out);

// Per-frame keyword probabilities, each strictly inside (0, 1).
using FrameScores = std::vector<double>;

// Frame-by-frame scorer that keeps SVDF memories between calls.
class StreamingModel {
 public:
  StreamingModel(const ParamVector& params, const ModelConfig& config);

  void reset();
  double push_frame(std::span<const double> frame);
  double push_frame(std::span<const float> frame);

 private:
  const ParamVector* params_;
  ModelLayout layout_;
  std::vector<SvdfState> states_;
  std::vector<std::vector<double>> activations_;
  std::vector<double> input_;
};

// Scores every frame of `frames`. Computes the whole utterance at once; the
// result is identical (to rounding) to feeding StreamingModel frame by frame.
FrameScores model_forward(const ParamVector& params, const ModelConfig& config,
                          const Spectrogram& frames);

FrameScores model_forward_streaming(const ParamVector& params, const ModelConfig& config,
                                    const Spectrogram& frames);

/// Mean over frames of binary cross-entropy.
double frame_bce_loss(std::span<const double> scores, std::span<const std::uint8_t> targets);

struct LossAndGradient {
  double loss = 0.0;
  ParamVector gradient;
};

/// Loss and its gradient with respect to every parameter, backpropagated
/// through the whole utterance.
LossAndGradient model_backward(const ParamVector& params, const ModelConfig& config,
                               const Spectrogram& frames, std::span<const std::uint8_t> targets);

}  // namespace kws
