#include "ctirb/saliency.hpp"

#include <algorithm>
#include <numeric>

namespace ctirb {

void SaliencyConfig::validate() const {
  if (embed_dim < 1 || hidden < 1) throw ValidationError("saliency dimensions must be >= 1");
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
}

std::vector<std::size_t> top_k_indices(const std::vector<double>& alpha, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  std::vector<std::size_t> order(alpha.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

std::vector<std::string> AttentionProfile::key_tokens() const {
  std::vector<std::string> out;
  for (std::size_t i : top_k) out.push_back(tokens[i]);
  return out;
}

nlohmann::json AttentionProfile::to_json() const {
  return {{"id", id}, {"tokens", tokens}, {"alpha", alpha}, {"top_k", top_k}};
}

SaliencyModel::SaliencyModel(Vocabulary vocab, SaliencyConfig config, std::uint64_t init_seed)
    : vocab_(std::move(vocab)), config_(config) {
  config_.validate();
  Rng rng(derive_seed(init_seed, "saliency.init"));
  nn::Embedding embedding(vocab_.size(), config_.embed_dim, rng);
  nn::Lstm lstm("lstm", config_.embed_dim, config_.hidden, rng);
  nn::Attention attention("attention", config_.hidden, rng);
  nn::Dense head("readout", config_.hidden, 1, rng);
  graph_ = nn::Graph(std::move(embedding), {std::move(lstm), std::move(attention), std::move(head)});
}

nn::Attention& SaliencyModel::attention() { return std::get<nn::Attention>(graph_.layers().at(1)); }
const nn::Attention& SaliencyModel::attention() const { return std::get<nn::Attention>(graph_.layers().at(1)); }

AttentionProfile SaliencyModel::attention_weights(const std::string& id, const std::vector<std::string>& tokens) const {
  AttentionProfile profile;
  profile.id = id;
  profile.k = config_.top_k;
  profile.ids = vocab_.encode(tokens);
  if (profile.ids.empty()) throw ValidationError("attention needs a non-empty token sequence");
  profile.tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(profile.ids.size()));
  const nn::Trace trace = graph_.forward(profile.ids);
  const nn::LayerCache& att = trace.caches.at(1);
  profile.alpha = att.steps.at(0).values;
  profile.scores = att.steps.at(1).values;
  profile.top_k = top_k_indices(profile.alpha, profile.k);
  return profile;
}

AttentionProfile SaliencyModel::attention_weights(const TextRecord& record) const {
  auto tokens = record.tokens();
  if (tokens.size() > record.max_len) tokens.resize(record.max_len);
  return attention_weights(record.id, tokens);
}

double SaliencyModel::probability(const TextRecord& record) const {
  const auto ids = vocab_.encode(record.tokens(), record.max_len);
  if (ids.empty()) throw ValidationError("cannot score an empty token sequence");
  return nn::sigmoid(graph_.forward(ids).output.values[0]);
}

nlohmann::json SaliencyModel::to_json() const {
  return {{"kind", "saliency"},
          {"config", {{"embed_dim", config_.embed_dim}, {"hidden", config_.hidden}, {"top_k", config_.top_k}}},
          {"vocabulary", vocab_.to_json()},
          {"weights", nn::to_json(graph_)}};
}

SaliencyModel SaliencyModel::from_json(const nlohmann::json& document) {
  try {
    if (document.at("kind") != "saliency") throw ValidationError("not a saliency checkpoint");
    const auto& c = document.at("config");
    SaliencyConfig config{c.at("embed_dim").get<std::size_t>(), c.at("hidden").get<std::size_t>(),
                          c.at("top_k").get<std::size_t>()};
    SaliencyModel model(Vocabulary::from_json(document.at("vocabulary")), config, 0);
    nn::load_parameters(model.graph_, document.at("weights"));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("saliency checkpoint: ") + e.what());
  }
}

SaliencyTraining train_saliency(const Corpus& train, const Corpus& val, const SaliencyConfig& model_config,
                                const TrainConfig& train_config) {
  detail::require_both_labels(train);
  train_config.validate();
  SaliencyModel model(Vocabulary::build(train), model_config, train_config.seed);
  auto encode = [&](const Corpus& corpus) {
    std::vector<detail::Example> out;
    for (const auto& record : corpus.records()) {
      auto ids = model.vocabulary().encode(record.tokens(), record.max_len);
      if (ids.empty()) throw ValidationError("record '" + record.id + "' has no tokens");
      out.push_back({std::move(ids), static_cast<double>(record.label)});
    }
    return out;
  };
  auto fit = detail::fit_binary(model.graph(), encode(train), encode(val), train_config, 0.5);
  return {std::move(model), std::move(fit.history), fit.selected_epoch};
}

Evaluation evaluate(const SaliencyModel& model, const Corpus& dataset, double threshold) {
  if (dataset.empty()) throw ValidationError("cannot evaluate on an empty dataset");
  Evaluation out;
  for (const auto& record : dataset.records()) {
    out.confusion.add(record.label, model.probability(record) >= threshold ? 1 : 0);
  }
  out.rates = compute_rates(out.confusion);
  return out;
}

}  // namespace ctirb
