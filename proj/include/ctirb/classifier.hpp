#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/corpus.hpp"
#include "ctirb/nn.hpp"

namespace ctirb {

/// Case-folded token -> id map. Id 0 is padding, id 1 stands for every
/// token not seen while building.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  static Vocabulary build(const Corpus& corpus, std::size_t min_count = 1);

  int id(std::string_view token) const;
  std::vector<int> encode(const std::vector<std::string>& tokens, std::size_t max_tokens = 256) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& document);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  nn::OptimConfig optimizer{.algorithm = nn::Algorithm::adam, .learning_rate = 0.005, .clip_norm = 5.0};
  std::uint64_t seed = 1;
  /// Stop after this many epochs without a validation-F1 improvement.
  std::optional<std::size_t> patience;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // from 1
  double mean_loss = 0.0;
  std::optional<double> val_f1;
};

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void add(int truth, int predicted);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Ratios with a zero denominator are absent rather than 0.
struct Rates {
  std::optional<double> fpr, tpr, precision, recall, f1;
};

Rates compute_rates(const ConfusionMatrix& m);
/// Harmonic mean of the two ratios; absent when either is absent or both are 0.
std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall);

/// Confusion matrix of thresholded scores (label 1 iff score >= tau).
ConfusionMatrix confusion_at(const std::vector<double>& scores, const std::vector<int>& labels, double tau);

struct ClassifierConfig {
  std::size_t embed_dim = 32;
  std::size_t filters = 16;
  std::vector<std::size_t> widths{3, 4, 5};
  double threshold = 0.5;

  void validate() const;
};

struct Prediction {
  double probability = 0.0;
  int label = 0;
};

struct Evaluation {
  ConfusionMatrix confusion;
  Rates rates;
};

/// Embedding -> parallel convolutions with global max-pool -> ReLU -> dense logit.
class ClassifierModel {
 public:
  ClassifierModel() = default;
  ClassifierModel(Vocabulary vocab, ClassifierConfig config, std::uint64_t init_seed);

  Prediction predict(const TextRecord& record) const;
  Prediction predict_tokens(const std::vector<std::string>& tokens) const;
  double probability(const std::vector<int>& ids) const;

  /// dBCE(label)/d(input embeddings), one row per (truncated) token.
  nn::Tensor input_gradient(const TextRecord& record, double label) const;

  std::vector<int> encode(const TextRecord& record) const;

  const Vocabulary& vocabulary() const { return vocab_; }
  const ClassifierConfig& config() const { return config_; }
  nn::Graph& graph() { return graph_; }
  const nn::Graph& graph() const { return graph_; }
  const nn::Tensor& embedding_table() const { return graph_.embedding().table().value; }

  nlohmann::json to_json() const;
  static ClassifierModel from_json(const nlohmann::json& document);

 private:
  Vocabulary vocab_;
  ClassifierConfig config_;
  nn::Graph graph_;
};

struct ClassifierTraining {
  ClassifierModel model;
  std::vector<EpochStats> history;
  /// Epoch whose parameters were kept (best validation F1, latest on ties;
  /// the last epoch when no validation set is given).
  std::size_t selected_epoch = 0;
};

ClassifierTraining train_classifier(const Corpus& train, const Corpus& val, const ClassifierConfig& model_config,
                                    const TrainConfig& train_config);

Evaluation evaluate(const ClassifierModel& model, const Corpus& dataset);

/// Trains from a fresh initialisation on base_train plus the injected
/// records. base_train is not modified.
ClassifierTraining retrain_with(const Corpus& base_train, const std::vector<TextRecord>& injected, const Corpus& val,
                                const ClassifierConfig& model_config, const TrainConfig& train_config);

namespace detail {

struct Example {
  std::vector<int> ids;
  double label = 0.0;
};

/// Mini-batch BCE training shared by the classifier and the saliency model.
/// `score` maps a graph and ids to a probability; it is used for validation F1.
struct FitResult {
  std::vector<EpochStats> history;
  std::size_t selected_epoch = 0;
};

FitResult fit_binary(nn::Graph& graph, const std::vector<Example>& train, const std::vector<Example>& val,
                     const TrainConfig& config, double threshold);

void require_both_labels(const Corpus& train);

}  // namespace detail

}  // namespace ctirb
