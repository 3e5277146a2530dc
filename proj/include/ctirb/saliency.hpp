#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/classifier.hpp"

namespace ctirb {

struct SaliencyConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden = 16;
  std::size_t top_k = 3;

  void validate() const;
};

struct AttentionProfile {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::vector<double> alpha;   // softmax of scores
  std::vector<double> scores;  // e_i = tanh(h_i . w + b)
  std::vector<std::size_t> top_k;
  std::size_t k = 3;

  /// Surfaces of the selected tokens, in selection order.
  std::vector<std::string> key_tokens() const;
  nlohmann::json to_json() const;
};

/// Indices of the k largest weights, descending; ties go to the lower index.
std::vector<std::size_t> top_k_indices(const std::vector<double>& alpha, std::size_t k);

/// Embedding -> LSTM -> attention pooling -> dense logit.
class SaliencyModel {
 public:
  SaliencyModel() = default;
  SaliencyModel(Vocabulary vocab, SaliencyConfig config, std::uint64_t init_seed);

  AttentionProfile attention_weights(const TextRecord& record) const;
  AttentionProfile attention_weights(const std::string& id, const std::vector<std::string>& tokens) const;
  double probability(const TextRecord& record) const;

  const Vocabulary& vocabulary() const { return vocab_; }
  const SaliencyConfig& config() const { return config_; }
  nn::Graph& graph() { return graph_; }
  const nn::Graph& graph() const { return graph_; }
  nn::Attention& attention();
  const nn::Attention& attention() const;

  nlohmann::json to_json() const;
  static SaliencyModel from_json(const nlohmann::json& document);

 private:
  Vocabulary vocab_;
  SaliencyConfig config_;
  nn::Graph graph_;
};

struct SaliencyTraining {
  SaliencyModel model;
  std::vector<EpochStats> history;
  std::size_t selected_epoch = 0;
};

/// BCE on the relevance label through the attention-pooled context.
SaliencyTraining train_saliency(const Corpus& train, const Corpus& val, const SaliencyConfig& model_config,
                                const TrainConfig& train_config);

Evaluation evaluate(const SaliencyModel& model, const Corpus& dataset, double threshold = 0.5);

}  // namespace ctirb
