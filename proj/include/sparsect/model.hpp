#pragma once

// Layer-DAG description of ResAttUnet and the half-width U-Net baseline.
//
// A NetworkGraph owns its parameters and batch-norm running statistics. The
// layer list is stored in topological order; forward() replays it onto a
// Tape.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsect/autodiff.hpp"
#include "sparsect/error.hpp"
#include "sparsect/ops.hpp"
#include "sparsect/precision.hpp"
#include "sparsect/rng.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

struct ModelConfig {
  std::vector<std::int64_t> encoder_filters{32, 64, 128, 256, 512};
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  int kernel = 3;
  int pad = 1;
  bool use_attention = true;
  bool use_residual = true;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  static ModelConfig resattunet() { return {}; }
  static ModelConfig unet() {
    ModelConfig c;
    c.use_attention = false;
    c.use_residual = false;
    return c;
  }

  /// Spatial divisor required of inputs (one halving per pooling stage).
  std::int64_t size_multiple() const { return std::int64_t{1} << (encoder_filters.size() - 1); }

  void validate() const {
    if (encoder_filters.size() != 5) throw ParameterError("encoder_filters must have 5 entries");
    if (encoder_filters[0] < 1) throw ParameterError("encoder_filters must be positive");
    for (std::size_t i = 1; i < encoder_filters.size(); ++i)
      if (encoder_filters[i] != 2 * encoder_filters[i - 1])
        throw ParameterError("encoder_filters must double at every level");
    if (kernel < 1 || kernel % 2 == 0) throw ParameterError("kernel must be odd and positive");
    if (pad * 2 + 1 != kernel) throw ParameterError("pad must preserve spatial size (pad = kernel/2)");
    if (in_channels < 1 || out_channels < 1) throw ParameterError("channel counts must be positive");
    if (!(bn_eps > 0)) throw ParameterError("bn_eps must be positive");
  }
};

enum class LayerKind { input, conv, conv_transpose, batchnorm, relu, sigmoid, maxpool, add, mul, concat };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_transpose";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::add: return "add";
    case LayerKind::mul: return "mul";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

struct Layer {
  LayerKind kind = LayerKind::input;
  std::string name;
  std::vector<int> inputs;
  int stride = 1;
  int pad = 0;
  std::string weight;  // conv weight / bn gamma
  std::string bias;    // conv bias / bn beta
  int input_index = 0;

  /// Layers kept in FP32 under the O2 policy.
  bool precision_exempt() const { return kind == LayerKind::batchnorm; }
};

template <class T>
struct NamedParameter {
  std::string name;
  Parameter<T> param;
};

template <class T>
class NetworkGraph {
 public:
  NetworkGraph() = default;
  NetworkGraph(std::string model_name, ModelConfig cfg) : model_name_(std::move(model_name)), cfg_(std::move(cfg)) {}

  const std::string& model_name() const noexcept { return model_name_; }
  const ModelConfig& config() const noexcept { return cfg_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<NamedParameter<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const noexcept { return params_; }
  std::map<std::string, ops::BatchNormStats<T>>& bn_stats() noexcept { return bn_stats_; }
  const std::map<std::string, ops::BatchNormStats<T>>& bn_stats() const noexcept { return bn_stats_; }
  int input_count() const noexcept { return inputs_; }
  /// Spatial multiple an input must satisfy; 1 for graphs without pooling.
  std::int64_t size_multiple() const noexcept { return size_multiple_; }
  void set_size_multiple(std::int64_t m) noexcept { size_multiple_ = m; }

  Parameter<T>& param(const std::string& name) { return params_.at(index_of(name)).param; }
  const Parameter<T>& param(const std::string& name) const { return params_.at(index_of(name)).param; }
  bool has_param(const std::string& name) const { return param_index_.count(name) != 0; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.param.master.size();
    return n;
  }

  // --- construction --------------------------------------------------------

  int add_input(std::string name) {
    Layer l;
    l.kind = LayerKind::input;
    l.name = std::move(name);
    l.input_index = inputs_++;
    return push(std::move(l));
  }

  int add_conv(int in, std::string name, std::int64_t cin, std::int64_t cout, int k, int stride, int pad) {
    Layer l{LayerKind::conv, name, {in}, stride, pad, name + ".weight", name + ".bias"};
    add_param(l.weight, Shape{cout, cin, k, k});
    add_param(l.bias, Shape{cout});
    return push(std::move(l));
  }

  int add_conv_transpose(int in, std::string name, std::int64_t cin, std::int64_t cout, int k, int stride) {
    Layer l{LayerKind::conv_transpose, name, {in}, stride, 0, name + ".weight", name + ".bias"};
    add_param(l.weight, Shape{cin, cout, k, k});
    add_param(l.bias, Shape{cout});
    return push(std::move(l));
  }

  int add_batchnorm(int in, std::string name, std::int64_t channels) {
    Layer l{LayerKind::batchnorm, name, {in}, 1, 0, name + ".gamma", name + ".beta"};
    add_param(l.weight, Shape{channels}, T(1));
    add_param(l.bias, Shape{channels});
    ops::BatchNormStats<T> stats(channels);
    stats.momentum = cfg_.bn_momentum;
    bn_stats_.emplace(name, std::move(stats));
    return push(std::move(l));
  }

  int add_unary(LayerKind kind, int in, std::string name, int stride = 1) {
    Layer l;
    l.kind = kind;
    l.name = std::move(name);
    l.inputs = {in};
    l.stride = stride;
    return push(std::move(l));
  }
  int add_binary(LayerKind kind, int a, int b, std::string name) {
    Layer l;
    l.kind = kind;
    l.name = std::move(name);
    l.inputs = {a, b};
    return push(std::move(l));
  }

  // --- numerics ------------------------------------------------------------

  /// He-uniform conv weights, zero biases, unit BN gamma.
  void initialize(std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (const Layer& l : layers_) {
      if (l.kind != LayerKind::conv && l.kind != LayerKind::conv_transpose) continue;
      Parameter<T>& w = param(l.weight);
      const Shape& s = w.master.shape();
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
      const double bound = std::sqrt(6.0 / fan_in);
      for (T& v : w.master.data()) v = static_cast<T>(rng.uniform(-bound, bound));
      w.compute = w.master;
    }
  }

  void apply_policy(const PrecisionPolicy& policy) {
    for (auto& p : params_) sparsect::apply_policy(p.param, policy);
  }

  void zero_grad() {
    for (auto& p : params_) p.param.zero_grad();
  }

  /// Shapes of every layer output for the given inputs.
  std::vector<Shape> resolve_shapes(const std::vector<Shape>& input_shapes) const {
    if (static_cast<int>(input_shapes.size()) != inputs_)
      throw GraphError("expected " + std::to_string(inputs_) + " input shapes");
    for (const Shape& s : input_shapes) check_input_shape(s);
    std::vector<Shape> out(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      auto in = [&](int k) -> const Shape& { return out[static_cast<std::size_t>(l.inputs[static_cast<std::size_t>(k)])]; };
      switch (l.kind) {
        case LayerKind::input: out[i] = input_shapes[static_cast<std::size_t>(l.input_index)]; break;
        case LayerKind::conv:
          out[i] = ops::conv2d_output_shape(in(0), param(l.weight).master.shape(), l.stride, l.pad);
          break;
        case LayerKind::conv_transpose:
          out[i] = ops::conv_transpose2d_output_shape(in(0), param(l.weight).master.shape(), l.stride);
          break;
        case LayerKind::maxpool: out[i] = ops::maxpool2d_output_shape(in(0), l.stride, l.stride); break;
        case LayerKind::batchnorm:
        case LayerKind::relu:
        case LayerKind::sigmoid: out[i] = in(0); break;
        case LayerKind::add:
          if (!(in(0) == in(1))) throw GraphError("add: shape mismatch in layer " + l.name);
          out[i] = in(0);
          break;
        case LayerKind::mul:
          if (!ops::mul_broadcasts(in(0), in(1))) throw GraphError("mul: shape mismatch in layer " + l.name);
          out[i] = in(0);
          break;
        case LayerKind::concat:
          if (in(0).n() != in(1).n() || in(0).h() != in(1).h() || in(0).w() != in(1).w())
            throw GraphError("concat: shape mismatch in layer " + l.name);
          out[i] = Shape{in(0).n(), in(0).c() + in(1).c(), in(0).h(), in(0).w()};
          break;
      }
    }
    return out;
  }

  /// Replays the graph onto `tape`. Train mode normalises with batch
  /// statistics and, when `update_stats` is set, advances the running stats.
  /// Returns the Var of every layer; the network output is the last entry.
  std::vector<Var> forward_all(Tape<T>& tape, const std::vector<Var>& inputs, ops::Mode mode,
                               bool update_stats = false) {
    if (static_cast<int>(inputs.size()) != inputs_) throw GraphError("forward: wrong number of inputs");
    for (Var v : inputs) check_input_shape(tape.value(v).shape());
    std::map<std::string, Var> bound;
    auto bind = [&](const std::string& name) {
      auto it = bound.find(name);
      if (it != bound.end()) return it->second;
      Var v = tape.parameter(param(name));
      bound.emplace(name, v);
      return v;
    };
    std::vector<Var> out(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      auto in = [&](int k) { return out[static_cast<std::size_t>(l.inputs[static_cast<std::size_t>(k)])]; };
      switch (l.kind) {
        case LayerKind::input: out[i] = inputs[static_cast<std::size_t>(l.input_index)]; break;
        case LayerKind::conv: out[i] = tape.conv2d(in(0), bind(l.weight), bind(l.bias), l.stride, l.pad); break;
        case LayerKind::conv_transpose:
          out[i] = tape.conv_transpose2d(in(0), bind(l.weight), bind(l.bias), l.stride);
          break;
        case LayerKind::batchnorm: {
          auto& stats = bn_stats_.at(l.name);
          ops::BatchNormStats<T>* s = (mode == ops::Mode::eval || update_stats) ? &stats : nullptr;
          out[i] = tape.batchnorm2d(in(0), bind(l.weight), bind(l.bias), cfg_.bn_eps, mode, s);
          break;
        }
        case LayerKind::relu: out[i] = tape.relu(in(0)); break;
        case LayerKind::sigmoid: out[i] = tape.sigmoid(in(0)); break;
        case LayerKind::maxpool: out[i] = tape.maxpool2d(in(0), l.stride, l.stride); break;
        case LayerKind::add: out[i] = tape.add(in(0), in(1)); break;
        case LayerKind::mul: out[i] = tape.mul(in(0), in(1)); break;
        case LayerKind::concat: out[i] = tape.concat(in(0), in(1)); break;
      }
    }
    return out;
  }

  Var forward(Tape<T>& tape, Var input, ops::Mode mode, bool update_stats = false) {
    return forward_all(tape, {input}, mode, update_stats).back();
  }

  /// Index of the first layer with the given name.
  std::optional<std::size_t> find_layer(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].name == name) return i;
    return std::nullopt;
  }

 private:
  std::size_t index_of(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) throw GraphError("unknown parameter '" + name + "'");
    return it->second;
  }

  void add_param(const std::string& name, Shape shape, T fill = T(0)) {
    if (param_index_.count(name)) throw GraphError("duplicate parameter '" + name + "'");
    param_index_.emplace(name, params_.size());
    params_.push_back({name, Parameter<T>(Tensor<T>::filled(shape, fill))});
  }

  int push(Layer l) {
    layers_.push_back(std::move(l));
    return static_cast<int>(layers_.size()) - 1;
  }

  void check_input_shape(const Shape& s) const {
    if (s.rank() != 4) throw DimensionError("network input must be rank 4, got " + s.str());
    if (s.h() % size_multiple_ != 0 || s.w() % size_multiple_ != 0)
      throw DimensionError("network input " + s.str() + " must have spatial dims divisible by " +
                           std::to_string(size_multiple_));
  }

  std::string model_name_;
  ModelConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<NamedParameter<T>> params_;
  std::map<std::string, std::size_t> param_index_;
  std::map<std::string, ops::BatchNormStats<T>> bn_stats_;
  int inputs_ = 0;
  std::int64_t size_multiple_ = 1;
};

// ---------------------------------------------------------------------------
// block builders

/// conv-BN-ReLU, conv-BN, (+ first activation when residual), ReLU. With
/// `residual` the skip spans only the second conv and adds its input.
template <class T>
int res_conv_block(NetworkGraph<T>& g, int x, const std::string& name, std::int64_t cin, std::int64_t cout,
                   bool residual) {
  const auto& cfg = g.config();
  int c1 = g.add_conv(x, name + ".conv1", cin, cout, cfg.kernel, 1, cfg.pad);
  int b1 = g.add_batchnorm(c1, name + ".bn1", cout);
  int y1 = g.add_unary(LayerKind::relu, b1, name + ".relu1");
  int c2 = g.add_conv(y1, name + ".conv2", cout, cout, cfg.kernel, 1, cfg.pad);
  int b2 = g.add_batchnorm(c2, name + ".bn2", cout);
  int pre = residual ? g.add_binary(LayerKind::add, b2, y1, name + ".add") : b2;
  return g.add_unary(LayerKind::relu, pre, name + ".relu2");
}

/// Gates decoder features `up` with a single-channel sigmoid map computed
/// from the skip and decoder features.
template <class T>
int attention_gate(NetworkGraph<T>& g, int skip, int up, const std::string& name, std::int64_t filters) {
  int a = g.add_conv(skip, name + ".skip_conv", filters, filters, 1, 1, 0);
  int b = g.add_conv(up, name + ".gate_conv", filters, filters, 1, 1, 0);
  int cat = g.add_binary(LayerKind::concat, a, b, name + ".concat");
  int act = g.add_unary(LayerKind::relu, cat, name + ".relu");
  int psi = g.add_conv(act, name + ".psi", 2 * filters, 1, 1, 1, 0);
  int alpha = g.add_unary(LayerKind::sigmoid, psi, name + ".alpha");
  return g.add_binary(LayerKind::mul, up, alpha, name + ".gated");
}

template <class T>
NetworkGraph<T> build_res_conv_block(std::int64_t cin, std::int64_t cout, bool residual = true,
                                     ModelConfig cfg = {}) {
  NetworkGraph<T> g("res_conv_block", cfg);
  int x = g.add_input("input");
  res_conv_block(g, x, "block", cin, cout, residual);
  return g;
}

/// Two inputs: skip features, then upsampled decoder features.
template <class T>
NetworkGraph<T> build_attention_gate(std::int64_t filters, ModelConfig cfg = {}) {
  NetworkGraph<T> g("attention_gate", cfg);
  int skip = g.add_input("skip");
  int up = g.add_input("up");
  attention_gate(g, skip, up, "att", filters);
  return g;
}

/// Encoder of residual blocks with 2x2 max-pooling, decoder of stride-2
/// transposed convs, optional attention gates on the upsampled path, skip
/// concatenation and a linear 1x1 head.
template <class T>
NetworkGraph<T> build_resattunet(const ModelConfig& cfg, std::uint64_t seed = 0) {
  cfg.validate();
  const bool full = cfg.use_attention && cfg.use_residual;
  const bool plain = !cfg.use_attention && !cfg.use_residual;
  NetworkGraph<T> g(full ? "resattunet" : plain ? "unet" : "resattunet_variant", cfg);
  g.set_size_multiple(cfg.size_multiple());
  const auto& f = cfg.encoder_filters;
  const std::size_t depth = f.size();

  int x = g.add_input("input");
  std::vector<int> skips;
  std::int64_t cin = cfg.in_channels;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string name = "enc" + std::to_string(i + 1);
    if (i > 0) x = g.add_unary(LayerKind::maxpool, x, name + ".pool", 2);
    x = res_conv_block(g, x, name, cin, f[i], cfg.use_residual);
    skips.push_back(x);
    cin = f[i];
  }
  for (std::size_t i = depth - 1; i-- > 0;) {
    const std::string name = "dec" + std::to_string(i + 1);
    int up = g.add_conv_transpose(x, name + ".up", f[i + 1], f[i], 2, 2);
    int fused = cfg.use_attention ? attention_gate(g, skips[i], up, name + ".att", f[i]) : up;
    int cat = g.add_binary(LayerKind::concat, skips[i], fused, name + ".concat");
    x = res_conv_block(g, cat, name, 2 * f[i], f[i], cfg.use_residual);
  }
  g.add_conv(x, "head", f[0], cfg.out_channels, 1, 1, 0);
  g.initialize(seed);
  return g;
}

/// Half-width U-Net: plain double-conv blocks and plain skip concatenation.
template <class T>
NetworkGraph<T> build_unet(ModelConfig cfg, std::uint64_t seed = 0) {
  cfg.use_attention = false;
  cfg.use_residual = false;
  return build_resattunet<T>(cfg, seed);
}

template <class T>
NetworkGraph<T> build_model(const std::string& name, ModelConfig cfg, std::uint64_t seed) {
  if (name == "resattunet") {
    cfg.use_attention = true;
    cfg.use_residual = true;
    return build_resattunet<T>(cfg, seed);
  }
  if (name == "unet") return build_unet<T>(cfg, seed);
  throw ParameterError("unknown model '" + name + "' (expected resattunet or unet)");
}

// ---------------------------------------------------------------------------
// memory accounting

struct LayerMemory {
  std::string name;
  LayerKind kind;
  std::size_t elements;
  std::size_t bytes;
};

struct MemoryReport {
  std::size_t parameters = 0;
  std::size_t activations = 0;
  std::size_t gradients = 0;
  std::vector<LayerMemory> layers;

  std::size_t total() const { return parameters + activations + gradients; }
};

/// Analytic byte accounting for one training step at the given input shape.
/// Activations are every layer output: 2 bytes/element under O2 unless the
/// layer is precision-exempt, 4 otherwise. O2 parameters hold an FP32 master
/// plus an FP16 compute copy; O2 gradients hold FP16 model grads plus FP32
/// master grads.
template <class T>
MemoryReport memory_report(const NetworkGraph<T>& graph, const PrecisionPolicy& policy,
                           const std::vector<Shape>& input_shapes) {
  const std::vector<Shape> shapes = graph.resolve_shapes(input_shapes);
  MemoryReport r;
  const bool half = policy.half();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Layer& l = graph.layers()[i];
    const std::size_t n = shapes[i].numel();
    const std::size_t b = n * ((half && !l.precision_exempt()) ? 2 : 4);
    r.layers.push_back({l.name, l.kind, n, b});
    r.activations += b;
  }
  const std::size_t np = graph.parameter_count();
  r.parameters = np * (half ? 6 : 4);
  r.gradients = np * (half ? 6 : 4);
  return r;
}

template <class T>
MemoryReport memory_report(const NetworkGraph<T>& graph, const PrecisionPolicy& policy, const Shape& input_shape) {
  return memory_report(graph, policy, std::vector<Shape>{input_shape});
}

}  // namespace sparsect
