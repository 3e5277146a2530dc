#include "ctirb/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace ctirb::nn {

namespace {

void require_cols(const Tensor& t, std::size_t cols, const char* layer) {
  if (t.shape.size() != 2 || t.cols() != cols) {
    throw ValidationError(std::string(layer) + ": expected input with " + std::to_string(cols) +
                          " columns, got " + std::to_string(t.shape.size() == 2 ? t.cols() : 0));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw ValidationError(std::string(what) + ": shape mismatch");
}

// y (rows x out) += x (rows x in) * w (in x out)
void matmul_add(const Tensor& x, const Tensor& w, Tensor& y) {
  const std::size_t rows = x.rows(), in = x.cols(), out = w.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values.data() + r * in;
    double* yr = y.values.data() + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wi = w.values.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wi[o];
    }
  }
}

double dtanh_from_output(double y) { return 1.0 - y * y; }
double dsigmoid_from_output(double y) { return y * (1.0 - y); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill) : shape(std::move(dims)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  values.assign(n, fill);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) { return Tensor({rows, cols}, fill); }

std::size_t Tensor::cols() const {
  if (shape.size() < 2) return 1;
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

void Tensor::fill(double v) { std::fill(values.begin(), values.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Parameter::Parameter(std::string n, Tensor initial) : name(std::move(n)), value(std::move(initial)) {
  grad = Tensor(value.shape, 0.0);
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::matrix(fan_in, fan_out);
  for (double& v : t.values) v = rng.uniform(-a, a);
  return t;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double m = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double bce_with_logits(double logit, double target, double* dlogit) {
  // log(1 + exp(-|z|)) form avoids overflow for large |z|
  const double loss = std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
  if (dlogit) *dlogit = sigmoid(logit) - target;
  return loss;
}

// ---------------------------------------------------------------- Embedding

Embedding::Embedding(std::size_t vocab, std::size_t dim, Rng& rng)
    : table_("embedding", xavier_uniform(vocab, dim, rng)) {}

Tensor Embedding::forward(std::span<const int> ids) const {
  const std::size_t d = dim();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab()) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(vocab()));
    }
    const auto src = table_.value.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

void Embedding::backward(std::span<const int> ids, const Tensor& grad_out) {
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto dst = table_.grad.row(static_cast<std::size_t>(ids[t]));
    const auto src = grad_out.row(t);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

// -------------------------------------------------------------------- Dense

Dense::Dense(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : weight_(name + ".weight", xavier_uniform(in, out, rng)), bias_(name + ".bias", Tensor::matrix(1, out)) {}

Tensor Dense::forward(const Tensor& input, LayerCache& cache) const {
  require_cols(input, weight_.value.rows(), "dense");
  Tensor out = Tensor::matrix(input.rows(), weight_.value.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy(bias_.value.values.begin(), bias_.value.values.end(), out.row(r).begin());
  }
  matmul_add(input, weight_.value, out);
  cache.input = input;
  return out;
}

Tensor Dense::backward(const Tensor& grad_out, const LayerCache& cache) {
  const Tensor& x = cache.input;
  const std::size_t in = weight_.value.rows(), out = weight_.value.cols();
  if (grad_out.rows() != x.rows() || grad_out.cols() != out) throw ValidationError("dense: gradient shape mismatch");
  Tensor dx = Tensor::matrix(x.rows(), in);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      const double g = grad_out.at(r, o);
      if (g == 0.0) continue;
      bias_.grad.values[o] += g;
      for (std::size_t i = 0; i < in; ++i) {
        weight_.grad.values[i * out + o] += x.at(r, i) * g;
        dx.at(r, i) += g * weight_.value.values[i * out + o];
      }
    }
  }
  return dx;
}

// --------------------------------------------------------------- Activation

Tensor Activation::forward(const Tensor& input, LayerCache& cache) const {
  Tensor out = input;
  for (double& v : out.values) {
    switch (kind_) {
      case ActivationKind::relu:
        cache.kink_margin = std::min(cache.kink_margin, std::abs(v));
        v = std::max(v, 0.0);
        break;
      case ActivationKind::tanh: v = std::tanh(v); break;
      case ActivationKind::sigmoid: v = sigmoid(v); break;
    }
  }
  cache.input = input;
  cache.output = out;
  return out;
}

Tensor Activation::backward(const Tensor& grad_out, const LayerCache& cache) {
  require_same(grad_out, cache.output, "activation");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    switch (kind_) {
      case ActivationKind::relu: dx.values[i] *= cache.input.values[i] > 0.0 ? 1.0 : 0.0; break;
      case ActivationKind::tanh: dx.values[i] *= dtanh_from_output(cache.output.values[i]); break;
      case ActivationKind::sigmoid: dx.values[i] *= dsigmoid_from_output(cache.output.values[i]); break;
    }
  }
  return dx;
}

// -------------------------------------------------------------- ConvMaxPool

ConvMaxPool::ConvMaxPool(std::string name, std::size_t in_dim, std::vector<std::size_t> widths,
                         std::size_t filters, Rng& rng)
    : in_dim_(in_dim), widths_(std::move(widths)), filters_(filters) {
  if (widths_.empty() || filters_ == 0) throw ValidationError("conv: need at least one width and one filter");
  for (std::size_t w : widths_) {
    if (w == 0) throw ValidationError("conv: width must be positive");
    const std::string tag = name + ".w" + std::to_string(w);
    kernels_.emplace_back(tag + ".kernel", xavier_uniform(w * in_dim_, filters_, rng));
    biases_.emplace_back(tag + ".bias", Tensor::matrix(1, filters_));
  }
}

std::vector<Parameter*> ConvMaxPool::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    out.push_back(&kernels_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

std::vector<const Parameter*> ConvMaxPool::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    out.push_back(&kernels_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

Tensor ConvMaxPool::forward(const Tensor& input, LayerCache& cache) const {
  require_cols(input, in_dim_, "conv");
  const std::size_t widest = *std::max_element(widths_.begin(), widths_.end());
  const std::size_t length = std::max(input.rows(), widest);
  Tensor padded = Tensor::matrix(length, in_dim_);
  std::copy(input.values.begin(), input.values.end(), padded.values.begin());

  Tensor out = Tensor::matrix(1, output_dim());
  cache.argmax.assign(output_dim(), 0);
  for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
    const std::size_t w = widths_[wi];
    const std::size_t positions = length - w + 1;
    const Tensor& k = kernels_[wi].value;
    Tensor z = Tensor::matrix(positions, filters_);
    for (std::size_t p = 0; p < positions; ++p) {
      std::copy(biases_[wi].value.values.begin(), biases_[wi].value.values.end(), z.row(p).begin());
      // the window rows p..p+w-1 are contiguous, so the window is a flat w*d vector
      const double* window = padded.values.data() + p * in_dim_;
      for (std::size_t i = 0; i < w * in_dim_; ++i) {
        const double xv = window[i];
        if (xv == 0.0) continue;
        const double* ki = k.values.data() + i * filters_;
        for (std::size_t f = 0; f < filters_; ++f) z.at(p, f) += xv * ki[f];
      }
    }
    for (std::size_t f = 0; f < filters_; ++f) {
      std::size_t best = 0;
      for (std::size_t p = 1; p < positions; ++p) {
        if (z.at(p, f) > z.at(best, f)) best = p;
      }
      for (std::size_t p = 0; p < positions; ++p) {
        if (p != best) cache.kink_margin = std::min(cache.kink_margin, z.at(best, f) - z.at(p, f));
      }
      out.at(0, wi * filters_ + f) = z.at(best, f);
      cache.argmax[wi * filters_ + f] = best;
    }
  }
  cache.input = input;
  cache.steps = {std::move(padded)};
  return out;
}

Tensor ConvMaxPool::backward(const Tensor& grad_out, const LayerCache& cache) {
  if (grad_out.size() != output_dim()) throw ValidationError("conv: gradient shape mismatch");
  const Tensor& padded = cache.steps.at(0);
  Tensor dpadded = Tensor::matrix(padded.rows(), in_dim_);
  for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
    const std::size_t w = widths_[wi];
    Tensor& k = kernels_[wi].value;
    Tensor& dk = kernels_[wi].grad;
    for (std::size_t f = 0; f < filters_; ++f) {
      const double g = grad_out.values[wi * filters_ + f];
      if (g == 0.0) continue;
      const std::size_t p = cache.argmax[wi * filters_ + f];
      biases_[wi].grad.values[f] += g;
      const double* window = padded.values.data() + p * in_dim_;
      double* dwindow = dpadded.values.data() + p * in_dim_;
      for (std::size_t i = 0; i < w * in_dim_; ++i) {
        dk.values[i * filters_ + f] += window[i] * g;
        dwindow[i] += k.values[i * filters_ + f] * g;
      }
    }
  }
  Tensor dx = Tensor::matrix(cache.input.rows(), in_dim_);
  std::copy_n(dpadded.values.begin(), dx.size(), dx.values.begin());
  return dx;
}

// --------------------------------------------------------------------- Lstm

namespace {
enum Gate : std::size_t { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };
// Layout of the per-step cache row, each block H wide.
enum Slot : std::size_t { sI, sF, sG, sO, sC, sTanhC, sHPrev, sCPrev, kSlots };
}  // namespace

Lstm::Lstm(std::string name, std::size_t in_dim, std::size_t hidden, Rng& rng) : in_dim_(in_dim), hidden_(hidden) {
  if (in_dim == 0 || hidden == 0) throw ValidationError("lstm: dimensions must be positive");
  static constexpr const char* kGateNames[] = {"input", "forget", "cell", "output"};
  for (std::size_t g = 0; g < 4; ++g) {
    gate_weights_.emplace_back(name + "." + kGateNames[g] + ".weight", xavier_uniform(in_dim + hidden, hidden, rng));
    gate_biases_.emplace_back(name + "." + kGateNames[g] + ".bias",
                              Tensor::matrix(1, hidden, g == kForget ? 1.0 : 0.0));
  }
}

std::vector<Parameter*> Lstm::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t g = 0; g < 4; ++g) {
    out.push_back(&gate_weights_[g]);
    out.push_back(&gate_biases_[g]);
  }
  return out;
}

std::vector<const Parameter*> Lstm::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t g = 0; g < 4; ++g) {
    out.push_back(&gate_weights_[g]);
    out.push_back(&gate_biases_[g]);
  }
  return out;
}

Tensor Lstm::forward(const Tensor& input, LayerCache& cache) const {
  require_cols(input, in_dim_, "lstm");
  const std::size_t n = input.rows(), H = hidden_, Z = in_dim_ + H;
  Tensor out = Tensor::matrix(n, H);
  std::vector<double> h(H, 0.0), c(H, 0.0), z(Z), pre(H);
  cache.steps.clear();
  cache.steps.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::copy(input.row(t).begin(), input.row(t).end(), z.begin());
    std::copy(h.begin(), h.end(), z.begin() + static_cast<std::ptrdiff_t>(in_dim_));
    Tensor step = Tensor::matrix(1, kSlots * H);
    double* s = step.values.data();
    std::copy(h.begin(), h.end(), s + sHPrev * H);
    std::copy(c.begin(), c.end(), s + sCPrev * H);
    for (std::size_t g = 0; g < 4; ++g) {
      const Tensor& w = gate_weights_[g].value;
      std::copy(gate_biases_[g].value.values.begin(), gate_biases_[g].value.values.end(), pre.begin());
      for (std::size_t i = 0; i < Z; ++i) {
        const double* wi = w.values.data() + i * H;
        for (std::size_t j = 0; j < H; ++j) pre[j] += z[i] * wi[j];
      }
      for (std::size_t j = 0; j < H; ++j) s[g * H + j] = g == kCell ? std::tanh(pre[j]) : sigmoid(pre[j]);
    }
    for (std::size_t j = 0; j < H; ++j) {
      c[j] = s[sF * H + j] * c[j] + s[sI * H + j] * s[sG * H + j];
      s[sC * H + j] = c[j];
      s[sTanhC * H + j] = std::tanh(c[j]);
      h[j] = s[sO * H + j] * s[sTanhC * H + j];
      out.at(t, j) = h[j];
    }
    cache.steps.push_back(std::move(step));
  }
  cache.input = input;
  return out;
}

Tensor Lstm::backward(const Tensor& grad_out, const LayerCache& cache) {
  const std::size_t n = cache.input.rows(), H = hidden_, Z = in_dim_ + H;
  if (grad_out.rows() != n || grad_out.cols() != H) throw ValidationError("lstm: gradient shape mismatch");
  Tensor dx = Tensor::matrix(n, in_dim_);
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), z(Z), dz(Z);
  std::array<std::vector<double>, 4> da;
  for (auto& v : da) v.assign(H, 0.0);

  for (std::size_t t = n; t-- > 0;) {
    const double* s = cache.steps[t].values.data();
    for (std::size_t j = 0; j < H; ++j) {
      const double dh = grad_out.at(t, j) + dh_next[j];
      const double i = s[sI * H + j], f = s[sF * H + j], g = s[sG * H + j], o = s[sO * H + j];
      const double tc = s[sTanhC * H + j];
      const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
      da[kOutput][j] = dh * tc * dsigmoid_from_output(o);
      da[kInput][j] = dc * g * dsigmoid_from_output(i);
      da[kCell][j] = dc * i * dtanh_from_output(g);
      da[kForget][j] = dc * s[sCPrev * H + j] * dsigmoid_from_output(f);
      dc_next[j] = dc * f;
    }
    std::copy(cache.input.row(t).begin(), cache.input.row(t).end(), z.begin());
    std::copy(s + sHPrev * H, s + sHPrev * H + H, z.begin() + static_cast<std::ptrdiff_t>(in_dim_));
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t g = 0; g < 4; ++g) {
      const double* w = gate_weights_[g].value.values.data();
      double* dw = gate_weights_[g].grad.values.data();
      double* db = gate_biases_[g].grad.values.data();
      for (std::size_t j = 0; j < H; ++j) db[j] += da[g][j];
      for (std::size_t r = 0; r < Z; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) {
          dw[r * H + j] += z[r] * da[g][j];
          acc += w[r * H + j] * da[g][j];
        }
        dz[r] += acc;
      }
    }
    std::copy_n(dz.begin(), in_dim_, dx.row(t).begin());
    std::copy(dz.begin() + static_cast<std::ptrdiff_t>(in_dim_), dz.end(), dh_next.begin());
  }
  return dx;
}

// ---------------------------------------------------------------- Attention

Attention::Attention(std::string name, std::size_t hidden, Rng& rng)
    : weight_(name + ".weight", xavier_uniform(hidden, 1, rng)), bias_(name + ".bias", Tensor::matrix(1, 1)) {}

Tensor Attention::forward(const Tensor& input, LayerCache& cache) const {
  const std::size_t H = weight_.value.rows();
  require_cols(input, H, "attention");
  const std::size_t n = input.rows();
  if (n == 0) throw ValidationError("attention: empty sequence");
  Tensor scores = Tensor::matrix(1, n);
  for (std::size_t t = 0; t < n; ++t) {
    double e = bias_.value.values[0];
    for (std::size_t j = 0; j < H; ++j) e += input.at(t, j) * weight_.value.values[j];
    scores.values[t] = std::tanh(e);
  }
  Tensor alpha = Tensor::matrix(1, n);
  alpha.values = softmax(scores.values);
  Tensor out = Tensor::matrix(1, H);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < H; ++j) out.values[j] += alpha.values[t] * input.at(t, j);
  }
  cache.input = input;
  cache.steps = {std::move(alpha), std::move(scores)};
  return out;
}

Tensor Attention::backward(const Tensor& grad_out, const LayerCache& cache) {
  const Tensor& h = cache.input;
  const std::size_t n = h.rows(), H = h.cols();
  if (grad_out.size() != H) throw ValidationError("attention: gradient shape mismatch");
  const auto& alpha = cache.steps.at(0).values;
  const auto& e = cache.steps.at(1).values;
  Tensor dh = Tensor::matrix(n, H);
  std::vector<double> dalpha(n, 0.0);
  double weighted = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < H; ++j) {
      dh.at(t, j) = alpha[t] * grad_out.values[j];
      dalpha[t] += grad_out.values[j] * h.at(t, j);
    }
    weighted += alpha[t] * dalpha[t];
  }
  for (std::size_t t = 0; t < n; ++t) {
    const double de = alpha[t] * (dalpha[t] - weighted);
    const double ds = de * dtanh_from_output(e[t]);
    bias_.grad.values[0] += ds;
    for (std::size_t j = 0; j < H; ++j) {
      weight_.grad.values[j] += ds * h.at(t, j);
      dh.at(t, j) += ds * weight_.value.values[j];
    }
  }
  return dh;
}

// -------------------------------------------------------------------- Graph

double Trace::kink_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : caches) m = std::min(m, c.kink_margin);
  return m;
}

Graph::Graph(Embedding embedding, std::vector<Layer> layers)
    : embedding_(std::move(embedding)), layers_(std::move(layers)) {}

Trace Graph::forward(std::span<const int> ids, const Tensor* input_offset) const {
  if (ids.empty()) throw ValidationError("forward: empty token sequence");
  Trace trace;
  trace.ids.assign(ids.begin(), ids.end());
  trace.embedded = embedding_.forward(ids);
  if (input_offset) {
    require_same(*input_offset, trace.embedded, "forward: input offset");
    for (std::size_t i = 0; i < trace.embedded.size(); ++i) trace.embedded.values[i] += input_offset->values[i];
  }
  Tensor current = trace.embedded;
  trace.caches.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    current = std::visit([&](const auto& layer) { return layer.forward(current, trace.caches[i]); }, layers_[i]);
  }
  if (!current.all_finite()) throw RuntimeFailure("forward: non-finite output");
  trace.output = std::move(current);
  return trace;
}

Tensor Graph::backward(const Trace& trace, const Tensor& grad_output) {
  if (trace.caches.size() != layers_.size()) throw ValidationError("backward: trace does not match graph");
  if (!grad_output.same_shape(trace.output)) throw ValidationError("backward: loss gradient shape mismatch");
  Tensor grad = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    grad = std::visit([&](auto& layer) { return layer.backward(grad, trace.caches[i]); }, layers_[i]);
  }
  embedding_.backward(trace.ids, grad);
  return grad;
}

std::vector<Parameter*> Graph::parameters() {
  std::vector<Parameter*> out{&embedding_.table()};
  for (auto& layer : layers_) {
    for (Parameter* p : std::visit([](auto& l) { return l.parameters(); }, layer)) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> Graph::parameters() const {
  std::vector<const Parameter*> out{&embedding_.table()};
  for (const auto& layer : layers_) {
    for (const Parameter* p : std::visit([](const auto& l) { return l.parameters(); }, layer)) out.push_back(p);
  }
  return out;
}

void Graph::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------- Optimizer

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (clip_norm && !(*clip_norm > 0.0)) throw ValidationError("clip_norm must be > 0");
}

Optimizer::Optimizer(OptimConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<Parameter* const> params) {
  double norm_sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in '" + p->name + "'; step aborted");
      norm_sq += g * g;
    }
  }
  double scale = 1.0;
  if (config_.clip_norm) {
    const double norm = std::sqrt(norm_sq);
    if (norm > *config_.clip_norm) scale = *config_.clip_norm / norm;
  }

  if (config_.algorithm == Algorithm::sgd) {
    for (Parameter* p : params) {
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value.values[i] -= config_.learning_rate * scale * p->grad.values[i];
    }
    ++steps_;
    return;
  }

  if (first_moment_.empty()) {
    for (const Parameter* p : params) {
      first_moment_.emplace_back(p->value.shape, 0.0);
      second_moment_.emplace_back(p->value.shape, 0.0);
    }
  }
  if (first_moment_.size() != params.size()) throw std::logic_error("optimizer reused with a different parameter set");
  const double t = static_cast<double>(steps_ + 1);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto& m = first_moment_[k].values;
    auto& v = second_moment_[k].values;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.values[i] * scale;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      p.value.values[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
  ++steps_;
}

// --------------------------------------------------------------- grad_check

namespace {

// Extended precision keeps the final rounding of L out of the difference
// quotient; at step 1e-5 one ulp of an O(1) loss is already ~2e-11 in slope.
long double summed_bce(const Tensor& output, double target) {
  long double loss = 0.0L;
  for (double v : output.values) {
    const long double z = v;
    loss += std::max(z, 0.0L) - z * target + std::log1p(std::exp(-std::abs(z)));
  }
  if (!std::isfinite(static_cast<double>(loss))) throw RuntimeFailure("grad_check: non-finite loss");
  return loss;
}

constexpr double kKinkThreshold = 1e-3;
constexpr int kMaxTieBreaks = 8;

}  // namespace

GradCheckResult grad_check(const Graph& graph, std::span<const int> ids, double step, double target) {
  if (!(step > 0.0 && step <= 1e-2)) throw ValidationError("grad_check: step must be in (0, 1e-2]");
  Graph g = graph;
  GradCheckResult result;

  // Move the evaluation point away from pooling ties and ReLU kinks, where
  // the analytic gradient is only a subgradient.
  std::optional<Tensor> offset;
  Trace trace = g.forward(ids);
  Rng jitter(stable_hash("grad_check.jitter"));
  while (trace.kink_margin() < kKinkThreshold && result.tie_breaks < kMaxTieBreaks) {
    if (!offset) offset = Tensor(trace.embedded.shape, 0.0);
    for (double& v : offset->values) v += jitter.uniform(-0.05, 0.05);
    ++result.tie_breaks;
    trace = g.forward(ids, &*offset);
  }
  const Tensor* off = offset ? &*offset : nullptr;

  g.zero_grad();
  Tensor dout(trace.output.shape, 0.0);
  for (std::size_t i = 0; i < dout.size(); ++i) bce_with_logits(trace.output.values[i], target, &dout.values[i]);
  summed_bce(trace.output, target);
  g.backward(trace, dout);

  for (Parameter* p : g.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value.values[i];
      p->value.values[i] = original + step;
      const long double plus = summed_bce(g.forward(ids, off).output, target);
      p->value.values[i] = original - step;
      const long double minus = summed_bce(g.forward(ids, off).output, target);
      p->value.values[i] = original;
      const double numeric = static_cast<double>((plus - minus) / (2.0L * step));
      const double analytic = p->grad.values[i];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (result.worst_parameter.empty() || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name;
      }
    }
  }
  return result;
}

// -------------------------------------------------------------- checkpoints

nlohmann::json to_json(const Graph& graph) {
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter* p : graph.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape}, {"values", p->value.values}});
  }
  return {{"format_version", kCheckpointFormatVersion}, {"parameters", std::move(params)}};
}

void load_parameters(Graph& graph, const nlohmann::json& document) {
  try {
    if (document.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw ValidationError("checkpoint: unsupported format_version");
    }
    const auto& entries = document.at("parameters");
    auto params = graph.parameters();
    if (entries.size() != params.size()) throw ValidationError("checkpoint: parameter count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& e = entries[k];
      if (e.at("name").get<std::string>() != params[k]->name) {
        throw ValidationError("checkpoint: expected parameter '" + params[k]->name + "'");
      }
      auto shape = e.at("shape").get<std::vector<std::size_t>>();
      auto values = e.at("values").get<std::vector<double>>();
      if (shape != params[k]->value.shape || values.size() != params[k]->value.size()) {
        throw ValidationError("checkpoint: shape mismatch for '" + params[k]->name + "'");
      }
      params[k]->value.values = std::move(values);
      params[k]->zero_grad();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace ctirb::nn
