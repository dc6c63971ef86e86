#include "kws/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "kws/errors.hpp"

namespace kws {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrixMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutRowMatrixMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VectorMap = Eigen::Map<const Vector>;
using MutVectorMap = Eigen::Map<Vector>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_logit(double z) { return std::clamp(z, -kLogitClamp, kLogitClamp); }

void check_inputs(const ParamVector& params, const ModelLayout& layout, const Spectrogram& frames) {
  if (params.size() != layout.total()) {
    throw UsageError("model: parameter vector has " + std::to_string(params.size()) +
                     " entries, config needs " + std::to_string(layout.total()));
  }
  if (frames.bins != layout.input_bins()) {
    throw UsageError("model: frame width " + std::to_string(frames.bins) +
                     " does not match input_bins " + std::to_string(layout.input_bins()));
  }
  if (frames.frames < 1 ||
      frames.values.size() != static_cast<std::size_t>(frames.frames) * frames.bins) {
    throw UsageError("model: malformed spectrogram");
  }
}

Matrix to_matrix(const Spectrogram& frames) {
  Matrix x(frames.frames, frames.bins);
  for (int t = 0; t < frames.frames; ++t) {
    for (int b = 0; b < frames.bins; ++b) x(t, b) = frames.at(t, b);
  }
  return x;
}

// Intermediate values of one layer kept for the backward pass.
struct LayerTrace {
  Matrix input;     // F x D
  Matrix filtered;  // F x N, s_n(t)
  Matrix pre;       // F x N, pre-activation
  Matrix hidden;    // F x N, ReLU output
  Matrix output;    // F x Nb (or alias of hidden when no bottleneck)
};

void layer_forward(const ParamVector& params, const LayerLayout& l, LayerTrace& tr) {
  const int frames = static_cast<int>(tr.input.rows());
  RowMatrixMap a(params.data() + l.feature_filters, l.nodes, l.input_dim);
  RowMatrixMap b(params.data() + l.time_filters, l.nodes, l.memory);
  VectorMap bias(params.data() + l.biases, l.nodes);

  tr.filtered.noalias() = tr.input * a.transpose();
  tr.pre.resize(frames, l.nodes);
  tr.pre.rowwise() = bias.transpose();
  for (int n = 0; n < l.nodes; ++n) {
    for (int tau = 0; tau < std::min(l.memory, frames); ++tau) {
      tr.pre.col(n).tail(frames - tau) += b(n, tau) * tr.filtered.col(n).head(frames - tau);
    }
  }
  tr.hidden = tr.pre.cwiseMax(0.0);
  if (l.bottleneck > 0) {
    RowMatrixMap w(params.data() + l.bottleneck_weights, l.bottleneck, l.nodes);
    VectorMap c(params.data() + l.bottleneck_biases, l.bottleneck);
    tr.output.noalias() = tr.hidden * w.transpose();
    tr.output.rowwise() += c.transpose();
  } else {
    tr.output = tr.hidden;
  }
}

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Vector raw_logits;
  FrameScores scores;
};

ForwardTrace run_forward(const ParamVector& params, const ModelLayout& layout,
                         const Spectrogram& frames) {
  ForwardTrace trace;
  trace.layers.resize(layout.layers().size());
  Matrix current = to_matrix(frames);
  for (std::size_t i = 0; i < layout.layers().size(); ++i) {
    LayerTrace& tr = trace.layers[i];
    tr.input = std::move(current);
    layer_forward(params, layout.layers()[i], tr);
    current = tr.output;
  }
  VectorMap w(params.data() + layout.output_weights(), layout.output_input_dim());
  trace.raw_logits = current * w;
  trace.raw_logits.array() += params[layout.output_bias()];
  trace.scores.resize(static_cast<std::size_t>(frames.frames));
  for (int t = 0; t < frames.frames; ++t) {
    trace.scores[t] = sigmoid(clamp_logit(trace.raw_logits(t)));
  }
  return trace;
}

}  // namespace

ModelConfig ModelConfig::desk_default() {
  ModelConfig c;
  c.input_bins = 16;
  c.encoder.assign(4, SvdfLayerSpec{32, 8, 16});
  c.decoder.assign(3, SvdfLayerSpec{16, 16, 0});
  return c;
}

void ModelConfig::validate() const {
  if (input_bins < 1) throw UsageError("model: input_bins must be >= 1");
  if (encoder.empty() && decoder.empty()) throw UsageError("model: at least one SVDF layer required");
  for (const auto& l : encoder) {
    if (l.nodes < 1 || l.memory < 1 || l.bottleneck < 1) {
      throw UsageError("model: encoder layers need nodes, memory and bottleneck >= 1");
    }
  }
  for (const auto& l : decoder) {
    if (l.nodes < 1 || l.memory < 1) throw UsageError("model: decoder layers need nodes, memory >= 1");
    if (l.bottleneck != 0) throw UsageError("model: decoder layers have no bottleneck");
  }
}

std::size_t LayerLayout::end() const {
  if (bottleneck > 0) return bottleneck_biases + static_cast<std::size_t>(bottleneck);
  return biases + static_cast<std::size_t>(nodes);
}

ModelLayout::ModelLayout(const ModelConfig& config) {
  config.validate();
  input_bins_ = config.input_bins;
  std::size_t offset = 0;
  int dim = config.input_bins;
  auto add = [&](const SvdfLayerSpec& spec) {
    LayerLayout l;
    l.input_dim = dim;
    l.nodes = spec.nodes;
    l.memory = spec.memory;
    l.bottleneck = spec.bottleneck;
    l.feature_filters = offset;
    l.time_filters = l.feature_filters + static_cast<std::size_t>(l.nodes) * l.input_dim;
    l.biases = l.time_filters + static_cast<std::size_t>(l.nodes) * l.memory;
    l.bottleneck_weights = l.biases + static_cast<std::size_t>(l.nodes);
    l.bottleneck_biases = l.bottleneck_weights + static_cast<std::size_t>(l.bottleneck) * l.nodes;
    offset = l.end();
    dim = l.output_dim();
    layers_.push_back(l);
  };
  for (const auto& s : config.encoder) add(s);
  for (const auto& s : config.decoder) add(s);
  output_input_dim_ = dim;
  output_weights_ = offset;
  output_bias_ = offset + static_cast<std::size_t>(dim);
  total_ = output_bias_ + 1;
}

std::size_t param_count(const ModelConfig& config) { return ModelLayout(config).total(); }

ParamVector init_params(const ModelConfig& config, Rng& rng) {
  const ModelLayout layout(config);
  ParamVector p(layout.total(), 0.0);
  auto fill = [&](std::size_t offset, int rows, int cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-s, s);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) p[offset + i] = u(rng);
  };
  for (const auto& l : layout.layers()) {
    fill(l.feature_filters, l.nodes, l.input_dim);
    fill(l.time_filters, l.nodes, l.memory);
    if (l.bottleneck > 0) fill(l.bottleneck_weights, l.bottleneck, l.nodes);
  }
  fill(layout.output_weights(), 1, layout.output_input_dim());
  return p;
}

SvdfLayerParams SvdfLayerParams::view(const ParamVector& params, const LayerLayout& l) {
  SvdfLayerParams v;
  v.nodes = l.nodes;
  v.input_dim = l.input_dim;
  v.memory = l.memory;
  const std::span<const double> all = params.span();
  v.feature_filters = all.subspan(l.feature_filters, static_cast<std::size_t>(l.nodes) * l.input_dim);
  v.time_filters = all.subspan(l.time_filters, static_cast<std::size_t>(l.nodes) * l.memory);
  v.biases = all.subspan(l.biases, static_cast<std::size_t>(l.nodes));
  return v;
}

SvdfState::SvdfState(int nodes, int memory)
    : nodes_(nodes), memory_(memory), buffer_(static_cast<std::size_t>(nodes) * memory, 0.0) {
  if (nodes < 1 || memory < 1) throw UsageError("SvdfState: nodes and memory must be >= 1");
}

void SvdfState::reset() {
  std::fill(buffer_.begin(), buffer_.end(), 0.0);
  head_ = 0;
}

double SvdfState::at(int node, int lag) const {
  const int slot = ((head_ - lag) % memory_ + memory_) % memory_;
  return buffer_[static_cast<std::size_t>(node) * memory_ + slot];
}

void SvdfState::push(std::span<const double> filtered) {
  head_ = (head_ + 1) % memory_;
  for (int n = 0; n < nodes_; ++n) buffer_[static_cast<std::size_t>(n) * memory_ + head_] = filtered[n];
}

void svdf_forward(const SvdfLayerParams& layer, SvdfState& state, std::span<const double> x,
                  std::span<double> out) {
  if (static_cast<int>(x.size()) != layer.input_dim) {
    throw UsageError("svdf_forward: input has " + std::to_string(x.size()) + " entries, layer expects " +
                     std::to_string(layer.input_dim));
  }
  if (static_cast<int>(out.size()) != layer.nodes) throw UsageError("svdf_forward: output size mismatch");
  if (state.nodes() != layer.nodes || state.memory() != layer.memory) {
    throw UsageError("svdf_forward: state shape does not match layer");
  }
  std::vector<double> filtered(static_cast<std::size_t>(layer.nodes));
  for (int n = 0; n < layer.nodes; ++n) {
    double s = 0.0;
    for (int d = 0; d < layer.input_dim; ++d) s += layer.feature_filters[n * layer.input_dim + d] * x[d];
    filtered[n] = s;
  }
  state.push(filtered);
  for (int n = 0; n < layer.nodes; ++n) {
    double acc = layer.biases[n];
    for (int tau = 0; tau < layer.memory; ++tau) acc += layer.time_filters[n * layer.memory + tau] * state.at(n, tau);
    out[n] = std::max(acc, 0.0);
  }
}

StreamingModel::StreamingModel(const ParamVector& params, const ModelConfig& config)
    : params_(&params), layout_(config) {
  if (params.size() != layout_.total()) throw UsageError("StreamingModel: parameter count mismatch");
  for (const auto& l : layout_.layers()) {
    states_.emplace_back(l.nodes, l.memory);
    activations_.emplace_back(static_cast<std::size_t>(l.nodes));
  }
  input_.resize(static_cast<std::size_t>(layout_.input_bins()));
}

void StreamingModel::reset() {
  for (auto& s : states_) s.reset();
}

double StreamingModel::push_frame(std::span<const float> frame) {
  if (static_cast<int>(frame.size()) != layout_.input_bins()) {
    throw UsageError("StreamingModel: frame width mismatch");
  }
  std::copy(frame.begin(), frame.end(), input_.begin());
  return push_frame(std::span<const double>(input_));
}

double StreamingModel::push_frame(std::span<const double> frame) {
  const ParamVector& p = *params_;
  std::vector<double> x(frame.begin(), frame.end());
  for (std::size_t i = 0; i < layout_.layers().size(); ++i) {
    const LayerLayout& l = layout_.layers()[i];
    svdf_forward(SvdfLayerParams::view(p, l), states_[i], x, activations_[i]);
    if (l.bottleneck > 0) {
      std::vector<double> y(static_cast<std::size_t>(l.bottleneck));
      for (int j = 0; j < l.bottleneck; ++j) {
        double acc = p[l.bottleneck_biases + j];
        for (int n = 0; n < l.nodes; ++n) acc += p[l.bottleneck_weights + static_cast<std::size_t>(j) * l.nodes + n] * activations_[i][n];
        y[j] = acc;
      }
      x = std::move(y);
    } else {
      x = activations_[i];
    }
  }
  double z = p[layout_.output_bias()];
  for (int j = 0; j < layout_.output_input_dim(); ++j) z += p[layout_.output_weights() + j] * x[j];
  return sigmoid(clamp_logit(z));
}

FrameScores model_forward(const ParamVector& params, const ModelConfig& config,
                          const Spectrogram& frames) {
  const ModelLayout layout(config);
  check_inputs(params, layout, frames);
  return run_forward(params, layout, frames).scores;
}

FrameScores model_forward_streaming(const ParamVector& params, const ModelConfig& config,
                                    const Spectrogram& frames) {
  const ModelLayout layout(config);
  check_inputs(params, layout, frames);
  StreamingModel model(params, config);
  FrameScores scores(static_cast<std::size_t>(frames.frames));
  for (int t = 0; t < frames.frames; ++t) {
    scores[t] = model.push_frame(std::span<const float>(frames.values).subspan(
        static_cast<std::size_t>(t) * frames.bins, static_cast<std::size_t>(frames.bins)));
  }
  return scores;
}

double frame_bce_loss(std::span<const double> scores, std::span<const std::uint8_t> targets) {
  if (scores.size() != targets.size()) throw UsageError("frame_bce_loss: length mismatch");
  if (scores.empty()) throw UsageError("frame_bce_loss: no frames");
  double sum = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const double p = scores[t];
    if (!(p > 0.0 && p < 1.0)) throw UsageError("frame_bce_loss: score outside (0, 1)");
    sum -= targets[t] ? std::log(p) : std::log1p(-p);
  }
  return sum / static_cast<double>(scores.size());
}

LossAndGradient model_backward(const ParamVector& params, const ModelConfig& config,
                               const Spectrogram& frames, std::span<const std::uint8_t> targets) {
  const ModelLayout layout(config);
  check_inputs(params, layout, frames);
  if (targets.size() != static_cast<std::size_t>(frames.frames)) {
    throw UsageError("model_backward: targets length does not match frame count");
  }
  const ForwardTrace trace = run_forward(params, layout, frames);
  const int nframes = frames.frames;

  LossAndGradient result;
  result.loss = frame_bce_loss(trace.scores, targets);
  result.gradient = ParamVector(layout.total(), 0.0);
  ParamVector& grad = result.gradient;

  // d loss / d logit = (p - y) / F, zero where the clamp is active.
  Vector dlogit(nframes);
  for (int t = 0; t < nframes; ++t) {
    const double z = trace.raw_logits(t);
    dlogit(t) = (z < -kLogitClamp || z > kLogitClamp)
                    ? 0.0
                    : (trace.scores[t] - static_cast<double>(targets[t])) / nframes;
  }

  const Matrix& top = trace.layers.back().output;
  VectorMap w_out(params.data() + layout.output_weights(), layout.output_input_dim());
  MutVectorMap(grad.data() + layout.output_weights(), layout.output_input_dim()).noalias() =
      top.transpose() * dlogit;
  grad[layout.output_bias()] = dlogit.sum();

  Matrix d_out = dlogit * w_out.transpose();  // F x output_dim
  for (std::size_t i = layout.layers().size(); i-- > 0;) {
    const LayerLayout& l = layout.layers()[i];
    const LayerTrace& tr = trace.layers[i];
    Matrix d_hidden;
    if (l.bottleneck > 0) {
      RowMatrixMap w(params.data() + l.bottleneck_weights, l.bottleneck, l.nodes);
      MutRowMatrixMap(grad.data() + l.bottleneck_weights, l.bottleneck, l.nodes).noalias() =
          d_out.transpose() * tr.hidden;
      MutVectorMap(grad.data() + l.bottleneck_biases, l.bottleneck) = d_out.colwise().sum().transpose();
      d_hidden.noalias() = d_out * w;
    } else {
      d_hidden = std::move(d_out);
    }

    const Matrix d_pre = d_hidden.cwiseProduct((tr.pre.array() > 0.0).cast<double>().matrix());
    MutVectorMap(grad.data() + l.biases, l.nodes) = d_pre.colwise().sum().transpose();

    RowMatrixMap b(params.data() + l.time_filters, l.nodes, l.memory);
    MutRowMatrixMap grad_b(grad.data() + l.time_filters, l.nodes, l.memory);
    Matrix d_filtered = Matrix::Zero(nframes, l.nodes);
    for (int n = 0; n < l.nodes; ++n) {
      for (int tau = 0; tau < std::min(l.memory, nframes); ++tau) {
        const int len = nframes - tau;
        grad_b(n, tau) = d_pre.col(n).tail(len).dot(tr.filtered.col(n).head(len));
        d_filtered.col(n).head(len) += b(n, tau) * d_pre.col(n).tail(len);
      }
    }

    RowMatrixMap a(params.data() + l.feature_filters, l.nodes, l.input_dim);
    MutRowMatrixMap(grad.data() + l.feature_filters, l.nodes, l.input_dim).noalias() =
        d_filtered.transpose() * tr.input;
    if (i > 0) d_out.noalias() = d_filtered * a;
  }
  return result;
}

}  // namespace kws
