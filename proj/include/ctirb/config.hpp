#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/attacks.hpp"
#include "ctirb/classifier.hpp"
#include "ctirb/corpus.hpp"
#include "ctirb/generation.hpp"
#include "ctirb/pipeline.hpp"
#include "ctirb/remote.hpp"
#include "ctirb/saliency.hpp"

namespace ctirb {

struct CorpusSection {
  /// Absent: a synthetic corpus is generated.
  std::optional<std::filesystem::path> path;
  CorpusFormat format = CorpusFormat::jsonl;
  std::size_t synthetic_records = 2000;
  double positive_fraction = 0.5;
  SplitFractions split{};
};

inline TrainConfig ten_epochs() {
  TrainConfig t;
  t.epochs = 10;
  return t;
}

struct ModelSection {
  ClassifierConfig classifier;
  TrainConfig train = ten_epochs();
};

struct SaliencySection {
  SaliencyConfig model;
  TrainConfig train = ten_epochs();
};

struct GenerationSection {
  std::string backend = "fallback";
  PromptTemplate prompt;
  RemoteConfig remote;
  /// Test-split positives used as FaN sources (0 = all of them).
  std::size_t sources = 200;
  double theta = 0.8;
  std::size_t max_iters = 5;
  std::size_t concurrency = 4;
  std::size_t paraphrases = 10;
};

enum class ScheduleKind { scaled, random, explicit_counts };

struct AttackSection {
  std::map<StreamKind, std::size_t> flood_volumes{{StreamKind::fan, 676},
                                                  {StreamKind::fap_paraphrase, 7689},
                                                  {StreamKind::fap_rule, 1635}};
  std::size_t arrivals_per_tick = 50;
  ScheduleKind schedule = ScheduleKind::scaled;
  std::vector<std::size_t> counts;  // explicit_counts only
  std::size_t rounds = 7;           // random only
  std::size_t lo = 50;
  std::size_t hi = 150;
  /// Retraining epochs per poisoning round.
  std::size_t poison_epochs = 10;
};

struct PipelineSection {
  PipelineConfig config;
  double target_rejection = ValidationOracle::kDefaultTargetRejection;
  std::size_t arrivals_per_tick = 50;
};

struct MetricsSection {
  std::optional<double> bandwidth;
  /// Cap on records per gradient profile (0 = no cap).
  std::size_t max_records = 200;
};

/// One run's configuration. Every section must be present (it may be an
/// empty object); unknown keys are rejected at every level.
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "runs";
  CorpusSection corpus;
  ModelSection model;
  SaliencySection saliency;
  GenerationSection generation;
  AttackSection attack;
  PipelineSection pipeline;
  MetricsSection metrics;

  static const std::vector<std::string>& section_names();
  /// global seed XOR stable_hash(section name)
  std::uint64_t section_seed(std::string_view section) const;
  /// Pushes derived section seeds into the nested configs.
  void apply_seeds();
  void validate() const;

  static RunConfig from_json(const nlohmann::json& document);
  static RunConfig load(const std::filesystem::path& path);
  /// Fully resolved form, suitable for a manifest; parses back to an equal config.
  nlohmann::json to_json() const;
};

}  // namespace ctirb
