#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "ctirb/attacks.hpp"
#include "ctirb/config.hpp"
#include "ctirb/metrics.hpp"

namespace ctirb {

/// Corpus, split and trained models shared by every run.
struct Desk {
  RunConfig config;
  Corpus corpus;
  CorpusSplit split;
  std::optional<ClassifierTraining> classifier;
  std::optional<SaliencyTraining> saliency;

  const ClassifierModel& model() const;
  const SaliencyModel& saliency_model() const;
};

Corpus load_or_generate_corpus(const RunConfig& config);

struct DeskOptions {
  bool classifier = true;
  bool saliency = true;
};

Desk prepare_desk(const RunConfig& config, DeskOptions options = {});

/// Held-out positives (test split, then val), sorted by id and capped at
/// generation.sources.
std::vector<TextRecord> held_out_sources(const Desk& desk);

std::unique_ptr<GenerationBackend> backend_for(const RunConfig& config);

struct FanCampaign {
  std::vector<TextRecord> sources;
  std::vector<AttentionProfile> profiles;
  RefinementResult refinement;
  /// The best variant's batch; emitted FaNs carry classifier and oracle verdicts.
  std::vector<FanRecord> fans;
  /// Random-replacement baseline over the same sources.
  std::vector<FanRecord> baseline;
  ValidationOracle oracle;

  std::vector<FanRecord> emitted() const;
  /// Emitted, classified positive and accepted by the oracle, as label-1 records.
  std::vector<TextRecord> accepted_false_positives() const;
};

/// Saliency -> refinement loop -> oracle calibration on the emitted texts.
FanCampaign run_fan_campaign(const Desk& desk, std::vector<TextRecord> sources, const GenerationBackend& backend,
                             std::uint64_t seed);

std::vector<std::size_t> resolve_schedule(const RunConfig& config, std::size_t pool_size);

struct PoisonRun {
  FanCampaign campaign;
  std::vector<std::size_t> schedule;
  std::vector<PoisonRoundLog> rounds;
};

/// FaN campaign over the train positives, then the poisoning rounds on the
/// frozen validation split.
PoisonRun run_poison_experiment(const Desk& desk, const GenerationBackend& backend);

struct FloodSources {
  std::map<StreamKind, std::vector<TextRecord>> streams;
  std::size_t unsubstitutable = 0;
  std::size_t paraphrase_short = 0;
};

FloodSources build_flood_sources(const Desk& desk, const FanCampaign& campaign, const GenerationBackend& backend);
FloodConfig flood_config(const RunConfig& config);

struct GradientRun {
  GradientProfile real;
  GradientProfile fake;
  GradientAlignment alignment;
  DensityEstimate real_density;
  DensityEstimate fake_density;
};

GradientRun run_gradient_metrics(const Desk& desk, const FanCampaign& campaign);

}  // namespace ctirb
