#include "ctirb/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctirb/tokenize.hpp"

namespace ctirb {

// --------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
  index_.emplace("<pad>", kPad);
  index_.emplace("<unk>", kUnk);
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& record : corpus.records()) {
    for (const auto& token : record.tokens()) ++counts[normalize_token(token)];
  }
  Vocabulary vocab;
  for (const auto& [token, count] : counts) {
    if (count < min_count || vocab.index_.contains(token)) continue;
    vocab.index_.emplace(token, static_cast<int>(vocab.tokens_.size()));
    vocab.tokens_.push_back(token);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(normalize_token(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens, std::size_t max_tokens) const {
  std::vector<int> ids;
  ids.reserve(std::min(tokens.size(), max_tokens));
  for (std::size_t i = 0; i < tokens.size() && i < max_tokens; ++i) ids.push_back(id(tokens[i]));
  return ids;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& document) {
  const auto tokens = document.get<std::vector<std::string>>();
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw ValidationError("vocabulary must start with <pad>, <unk>");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (!vocab.index_.emplace(tokens[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary entry '" + tokens[i] + "'");
    }
    vocab.tokens_.push_back(tokens[i]);
  }
  return vocab;
}

// -------------------------------------------------------------------- rates

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (patience && *patience < 1) throw ValidationError("patience must be >= 1");
  optimizer.validate();
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth == 1) {
    ++(predicted == 1 ? tp : fn);
  } else {
    ++(predicted == 1 ? fp : tn);
  }
}

namespace {
std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall) {
  if (!precision || !recall || *precision + *recall == 0.0) return std::nullopt;
  return 2.0 * *precision * *recall / (*precision + *recall);
}

Rates compute_rates(const ConfusionMatrix& m) {
  Rates r;
  r.fpr = ratio(m.fp, m.fp + m.tn);
  r.tpr = ratio(m.tp, m.tp + m.fn);
  r.recall = r.tpr;
  r.precision = ratio(m.tp, m.tp + m.fp);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

ConfusionMatrix confusion_at(const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < scores.size(); ++i) m.add(labels[i], scores[i] >= tau ? 1 : 0);
  return m;
}

// ------------------------------------------------------------------- fitting

namespace detail {

void require_both_labels(const Corpus& train) {
  if (train.count(0) == 0 || train.count(1) == 0) {
    throw ValidationError("single-class training set: both labels are required");
  }
}

namespace {

double logit_of(const nn::Graph& graph, const std::vector<int>& ids) { return graph.forward(ids).output.values[0]; }

double validation_f1(const nn::Graph& graph, const std::vector<Example>& val, double threshold) {
  ConfusionMatrix m;
  for (const auto& ex : val) {
    m.add(static_cast<int>(ex.label), nn::sigmoid(logit_of(graph, ex.ids)) >= threshold ? 1 : 0);
  }
  return compute_rates(m).f1.value_or(0.0);
}

}  // namespace

FitResult fit_binary(nn::Graph& graph, const std::vector<Example>& train, const std::vector<Example>& val,
                     const TrainConfig& config, double threshold) {
  config.validate();
  if (train.empty()) throw ValidationError("empty training set");
  nn::Optimizer optimizer(config.optimizer);
  Rng rng(derive_seed(config.seed, "train.shuffle"));
  auto params = graph.parameters();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  FitResult result;
  std::vector<std::vector<double>> best_values;
  double best_f1 = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      graph.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = train[order[k]];
        const nn::Trace trace = graph.forward(ex.ids);
        nn::Tensor dout(trace.output.shape, 0.0);
        const double loss = nn::bce_with_logits(trace.output.values[0], ex.label, &dout.values[0]);
        if (!std::isfinite(loss)) throw RuntimeFailure("non-finite training loss");
        epoch_loss += loss;
        dout.values[0] *= scale;
        graph.backward(trace, dout);
      }
      optimizer.step(params);
    }

    EpochStats stats{epoch, epoch_loss / static_cast<double>(train.size()), std::nullopt};
    if (!val.empty()) {
      const double f1 = validation_f1(graph, val, threshold);
      stats.val_f1 = f1;
      if (f1 >= best_f1) {
        best_f1 = f1;
        result.selected_epoch = epoch;
        best_values.clear();
        for (const auto* p : params) best_values.push_back(p->value.values);
        stale = 0;
      } else {
        ++stale;
      }
    } else {
      result.selected_epoch = epoch;
    }
    result.history.push_back(stats);
    if (config.patience && stale >= *config.patience) break;
  }

  if (!best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.values = best_values[i];
  }
  graph.zero_grad();
  return result;
}

}  // namespace detail

// -------------------------------------------------------------------- model

void ClassifierConfig::validate() const {
  if (embed_dim < 1 || filters < 1) throw ValidationError("embed_dim and filters must be >= 1");
  if (widths.empty()) throw ValidationError("at least one filter width is required");
  for (std::size_t w : widths) {
    if (w < 1) throw ValidationError("filter widths must be >= 1");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0, 1)");
}

ClassifierModel::ClassifierModel(Vocabulary vocab, ClassifierConfig config, std::uint64_t init_seed)
    : vocab_(std::move(vocab)), config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(init_seed, "classifier.init"));
  nn::Embedding embedding(vocab_.size(), config_.embed_dim, rng);
  nn::ConvMaxPool conv("conv", config_.embed_dim, config_.widths, config_.filters, rng);
  const std::size_t pooled = conv.output_dim();
  graph_ = nn::Graph(std::move(embedding), {std::move(conv), nn::Activation(nn::ActivationKind::relu),
                                            nn::Dense("head", pooled, 1, rng)});
}

std::vector<int> ClassifierModel::encode(const TextRecord& record) const {
  return vocab_.encode(record.tokens(), record.max_len);
}

double ClassifierModel::probability(const std::vector<int>& ids) const {
  if (ids.empty()) throw ValidationError("cannot classify an empty token sequence");
  return nn::sigmoid(graph_.forward(ids).output.values[0]);
}

Prediction ClassifierModel::predict_tokens(const std::vector<std::string>& tokens) const {
  const double p = probability(vocab_.encode(tokens));
  return {p, p >= config_.threshold ? 1 : 0};
}

Prediction ClassifierModel::predict(const TextRecord& record) const {
  const double p = probability(encode(record));
  return {p, p >= config_.threshold ? 1 : 0};
}

nn::Tensor ClassifierModel::input_gradient(const TextRecord& record, double label) const {
  const auto ids = encode(record);
  if (ids.empty()) throw ValidationError("cannot take gradients of an empty token sequence");
  nn::Graph scratch = graph_;
  scratch.zero_grad();
  const nn::Trace trace = scratch.forward(ids);
  nn::Tensor dout(trace.output.shape, 0.0);
  nn::bce_with_logits(trace.output.values[0], label, &dout.values[0]);
  return scratch.backward(trace, dout);
}

nlohmann::json ClassifierModel::to_json() const {
  return {{"kind", "classifier"},
          {"config",
           {{"embed_dim", config_.embed_dim},
            {"filters", config_.filters},
            {"widths", config_.widths},
            {"threshold", config_.threshold}}},
          {"vocabulary", vocab_.to_json()},
          {"weights", nn::to_json(graph_)}};
}

ClassifierModel ClassifierModel::from_json(const nlohmann::json& document) {
  try {
    if (document.at("kind") != "classifier") throw ValidationError("not a classifier checkpoint");
    const auto& c = document.at("config");
    ClassifierConfig config;
    config.embed_dim = c.at("embed_dim").get<std::size_t>();
    config.filters = c.at("filters").get<std::size_t>();
    config.widths = c.at("widths").get<std::vector<std::size_t>>();
    config.threshold = c.at("threshold").get<double>();
    ClassifierModel model(Vocabulary::from_json(document.at("vocabulary")), config, 0);
    nn::load_parameters(model.graph_, document.at("weights"));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("classifier checkpoint: ") + e.what());
  }
}

// ----------------------------------------------------------------- training

namespace {

std::vector<detail::Example> encode_all(const ClassifierModel& model, const Corpus& corpus) {
  std::vector<detail::Example> out;
  out.reserve(corpus.size());
  for (const auto& record : corpus.records()) {
    auto ids = model.encode(record);
    if (ids.empty()) throw ValidationError("record '" + record.id + "' has no tokens");
    out.push_back({std::move(ids), static_cast<double>(record.label)});
  }
  return out;
}

}  // namespace

ClassifierTraining train_classifier(const Corpus& train, const Corpus& val, const ClassifierConfig& model_config,
                                    const TrainConfig& train_config) {
  detail::require_both_labels(train);
  train_config.validate();
  ClassifierModel model(Vocabulary::build(train), model_config, train_config.seed);
  const auto train_examples = encode_all(model, train);
  const auto val_examples = encode_all(model, val);
  auto fit = detail::fit_binary(model.graph(), train_examples, val_examples, train_config, model_config.threshold);
  return {std::move(model), std::move(fit.history), fit.selected_epoch};
}

Evaluation evaluate(const ClassifierModel& model, const Corpus& dataset) {
  if (dataset.empty()) throw ValidationError("cannot evaluate on an empty dataset");
  Evaluation out;
  for (const auto& record : dataset.records()) out.confusion.add(record.label, model.predict(record).label);
  out.rates = compute_rates(out.confusion);
  return out;
}

ClassifierTraining retrain_with(const Corpus& base_train, const std::vector<TextRecord>& injected, const Corpus& val,
                                const ClassifierConfig& model_config, const TrainConfig& train_config) {
  for (const auto& record : injected) {
    if (record.label != 0 && record.label != 1) {
      throw ValidationError("invalid label " + std::to_string(record.label) + " on injected record '" + record.id + "'");
    }
  }
  std::vector<TextRecord> combined = base_train.records();
  combined.insert(combined.end(), injected.begin(), injected.end());
  return train_classifier(Corpus(std::move(combined)), val, model_config, train_config);
}

}  // namespace ctirb
