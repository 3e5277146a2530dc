#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/classifier.hpp"
#include "ctirb/generation.hpp"
#include "ctirb/pipeline.hpp"

namespace ctirb {

// -------------------------------------------------------------- threat model

enum class AttackKind { evasion, flooding, poisoning };
enum class DataKnowledge { none, approximate_osint };
enum class Inference { unknown, inferred };
enum class WeightKnowledge { none, full };
enum class AttackSetting { black_box, gray_box, white_box };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);
std::string to_string(AttackSetting setting);

/// The (data, features, algorithm, loss, weights) knowledge tuple.
struct AttackerKnowledge {
  DataKnowledge training_data = DataKnowledge::approximate_osint;
  Inference features = Inference::inferred;
  Inference algorithm = Inference::inferred;
  Inference loss = Inference::inferred;
  WeightKnowledge weights = WeightKnowledge::none;
  AttackSetting setting = AttackSetting::black_box;

  void validate() const;
  nlohmann::json to_json() const;
};

AttackerKnowledge describe_threat_model(AttackKind kind);

/// Drivers only implement the black-box setting.
void require_supported(const AttackerKnowledge& knowledge);

// ------------------------------------------------------------------ evasion

struct EvasionSample {
  std::string id;
  std::string source_id;
  double probability = 0.0;
  bool false_positive = false;
};

struct EvasionReport {
  std::size_t n_fans = 0;
  ConfusionMatrix confusion;  // only fp and tn are populated
  double fpr = 0.0;
  std::vector<EvasionSample> samples;
};

EvasionReport run_evasion(const ClassifierModel& classifier, const std::vector<FanRecord>& fans,
                          const AttackerKnowledge& knowledge = describe_threat_model(AttackKind::evasion));

// ----------------------------------------------------------------- flooding

enum class StreamKind { real_tp, fan, fap_paraphrase, fap_rule };
inline constexpr std::array<StreamKind, 4> kAllStreams{StreamKind::real_tp, StreamKind::fan,
                                                       StreamKind::fap_paraphrase, StreamKind::fap_rule};
std::string to_string(StreamKind kind);
StreamKind parse_stream_kind(std::string_view text);
/// FaN streams are scored against label 0, every other stream against label 1.
int stream_truth(StreamKind kind);

struct FloodConfig {
  std::map<StreamKind, std::size_t> volumes;
  std::uint64_t seed = 0;
  std::size_t arrivals_per_tick = 50;
  /// Keep ticking without arrivals until the dashboard queue is empty.
  bool drain = true;
  PipelineConfig pipeline;

  void validate() const;
  std::size_t total() const;
};

struct FloodSample {
  std::size_t sequence = 0;
  std::size_t tick = 0;
  StreamKind stream = StreamKind::real_tp;
  std::string id;
  double probability = 0.0;
  int predicted = 0;
  int truth = 0;

  nlohmann::json to_json() const;
};

struct StreamReport {
  StreamKind stream = StreamKind::real_tp;
  std::size_t volume = 0;
  ConfusionMatrix confusion;
  /// FPR for the FaN stream, TPR otherwise; empty when undefined.
  std::optional<double> rate;
};

struct FloodReport {
  std::vector<StreamReport> streams;  // in kAllStreams order, configured streams only
  std::vector<FloodSample> samples;
  std::vector<TickTelemetry> telemetry;
  std::size_t overflow = 0;
  std::size_t max_queue_depth = 0;
  std::vector<TextRecord> feedback;
};

/// Sources are cycled when a stream's volume exceeds its pool; repeats get
/// a "#n" id suffix.
FloodReport run_flooding(const ClassifierModel& classifier, const AlertJudge& judge, const FloodConfig& config,
                         const std::map<StreamKind, std::vector<TextRecord>>& sources,
                         const AttackerKnowledge& knowledge = describe_threat_model(AttackKind::flooding));

/// Per-stream confusion rebuilt from the per-sample log alone.
std::vector<StreamReport> recompute_streams(const std::vector<FloodSample>& samples);

// ---------------------------------------------------------------- poisoning

/// Default per-round FaN injection counts (9402 in total).
const std::vector<std::size_t>& reference_poison_schedule();

/// Scales `reference` to sum to `total` with largest-remainder rounding
/// (ties go to the earlier round).
std::vector<std::size_t> scale_schedule(const std::vector<std::size_t>& reference, std::size_t total);

/// `rounds` counts drawn uniformly from [lo, hi].
std::vector<std::size_t> random_schedule(std::size_t rounds, std::size_t lo, std::size_t hi, std::uint64_t seed);

std::vector<std::size_t> cumulative(const std::vector<std::size_t>& schedule);

struct PoisonConfig {
  ClassifierConfig model;
  TrainConfig train;
};

struct PoisonRoundLog {
  std::size_t round = 0;  // from 1
  std::size_t injected = 0;
  std::size_t cumulative = 0;
  ConfusionMatrix confusion;
  Rates rates;
};

/// Round r retrains from scratch on base_train plus the first cumulative(r)
/// FaNs (relabelled 1) and evaluates on `val`. Retraining keeps the last
/// epoch; `val` is never used for model selection.
std::vector<PoisonRoundLog> run_poisoning(const Corpus& base_train, const Corpus& val,
                                          const std::vector<TextRecord>& accepted_fans,
                                          const std::vector<std::size_t>& schedule, const PoisonConfig& config,
                                          const AttackerKnowledge& knowledge =
                                              describe_threat_model(AttackKind::poisoning));

}  // namespace ctirb
