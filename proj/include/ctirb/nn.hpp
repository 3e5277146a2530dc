#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctirb/common.hpp"

// Dense float64 tensors and a handful of layers with hand-written
// reverse-mode gradients. Activations flowing between layers are matrices
// (rows x cols); a single vector is a 1 x k matrix.
namespace ctirb::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool operator==(const Tensor&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name, Tensor initial);
  void zero_grad() { grad.fill(0.0); }
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

double sigmoid(double x);
std::vector<double> softmax(std::span<const double> x);

/// Binary cross-entropy on a logit; returns the loss and writes dL/dlogit.
double bce_with_logits(double logit, double target, double* dlogit = nullptr);

/// Per-layer record of a forward pass, sufficient for the exact backward.
struct LayerCache {
  Tensor input;
  Tensor output;
  std::vector<Tensor> steps;        // per-timestep state (LSTM), softmax weights (attention)
  std::vector<std::size_t> argmax;  // pooling winners
  /// Distance to the nearest non-differentiable point (pool tie, ReLU kink).
  double kink_margin = std::numeric_limits<double>::infinity();
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(std::size_t vocab, std::size_t dim, Rng& rng);

  Tensor forward(std::span<const int> ids) const;
  void backward(std::span<const int> ids, const Tensor& grad_out);

  std::size_t vocab() const { return table_.value.rows(); }
  std::size_t dim() const { return table_.value.cols(); }
  Parameter& table() { return table_; }
  const Parameter& table() const { return table_; }

 private:
  Parameter table_;
};

class Dense {
 public:
  Dense() = default;
  Dense(std::string name, std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& input, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // in x out
  Parameter bias_;    // 1 x out
};

enum class ActivationKind { relu, tanh, sigmoid };

class Activation {
 public:
  explicit Activation(ActivationKind kind = ActivationKind::relu) : kind_(kind) {}

  Tensor forward(const Tensor& input, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache);
  std::vector<Parameter*> parameters() { return {}; }
  std::vector<const Parameter*> parameters() const { return {}; }

 private:
  ActivationKind kind_;
};

/// Parallel 1-D convolutions of several widths over the token axis, each
/// followed by a global max over positions. Output is 1 x (widths * filters),
/// grouped by width. Sequences shorter than the widest filter are zero-padded.
class ConvMaxPool {
 public:
  ConvMaxPool() = default;
  ConvMaxPool(std::string name, std::size_t in_dim, std::vector<std::size_t> widths,
              std::size_t filters, Rng& rng);

  Tensor forward(const Tensor& input, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache);
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  std::size_t output_dim() const { return widths_.size() * filters_; }

 private:
  std::size_t in_dim_ = 0;
  std::vector<std::size_t> widths_;
  std::size_t filters_ = 0;
  std::vector<Parameter> kernels_;  // (width * in_dim) x filters, one per width
  std::vector<Parameter> biases_;   // 1 x filters
};

/// Single-layer LSTM returning every hidden state (rows = timesteps).
/// Gate order: input, forget, cell, output; each gate acts on [x_t, h_{t-1}].
class Lstm {
 public:
  Lstm() = default;
  Lstm(std::string name, std::size_t in_dim, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& input, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache);
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  std::size_t hidden() const { return hidden_; }
  std::size_t input_dim() const { return in_dim_; }

 private:
  std::size_t in_dim_ = 0;
  std::size_t hidden_ = 0;
  std::vector<Parameter> gate_weights_;  // 4 x ((in + H) x H)
  std::vector<Parameter> gate_biases_;   // 4 x (1 x H)
};

/// Additive attention pooling: e_i = tanh(h_i . w + b), alpha = softmax(e),
/// output = sum_i alpha_i h_i. The cache keeps alpha in steps[0] and e in steps[1].
class Attention {
 public:
  Attention() = default;
  Attention(std::string name, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& input, LayerCache& cache) const;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // H x 1
  Parameter bias_;    // 1 x 1
};

using Layer = std::variant<Dense, Activation, ConvMaxPool, Lstm, Attention>;

struct Trace {
  std::vector<int> ids;
  Tensor embedded;
  std::vector<LayerCache> caches;
  Tensor output;

  double kink_margin() const;
};

/// Token ids -> embedding lookup -> layer sequence.
class Graph {
 public:
  Graph() = default;
  Graph(Embedding embedding, std::vector<Layer> layers);

  /// `input_offset`, when given, is added to the looked-up embeddings
  /// (n x dim); used to nudge gradient checks off pooling ties.
  Trace forward(std::span<const int> ids, const Tensor* input_offset = nullptr) const;

  /// Accumulates parameter gradients (embedding table included) and returns
  /// dLoss/d(input embeddings), n x dim.
  Tensor backward(const Trace& trace, const Tensor& grad_output);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  Embedding& embedding() { return embedding_; }
  const Embedding& embedding() const { return embedding_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  Embedding embedding_;
  std::vector<Layer> layers_;
};

enum class Algorithm { sgd, adam };

struct OptimConfig {
  Algorithm algorithm = Algorithm::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> clip_norm;

  void validate() const;
};

class NonFiniteError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class Optimizer {
 public:
  explicit Optimizer(OptimConfig config);

  /// One update over `params`. Throws NonFiniteError, leaving values and
  /// state untouched, if any gradient is not finite.
  void step(std::span<Parameter* const> params);
  std::size_t steps() const { return steps_; }
  const OptimConfig& config() const { return config_; }

 private:
  OptimConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  /// Number of input perturbations applied to move off a non-differentiable point.
  int tie_breaks = 0;
};

/// Compares backward() against central differences of
/// L = sum_j BCE(output_j, target) for every parameter element.
/// Relative error is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const Graph& graph, std::span<const int> ids, double step = 1e-5,
                           double target = 1.0);

/// Checkpoint document: {"format_version": 1, "parameters": [{name, shape, values}]}.
nlohmann::json to_json(const Graph& graph);
/// Loads values into a graph of identical architecture.
void load_parameters(Graph& graph, const nlohmann::json& document);

inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace ctirb::nn
