#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/corpus.hpp"
#include "ctirb/generation.hpp"

namespace ctirb {

enum class Severity { critical, high, medium, low };
enum class Priority { urgent, asap, within_24h, low_priority };
enum class Verdict { pending, accepted, rejected };

std::string to_string(Severity s);
std::string to_string(Priority p);
std::string to_string(Verdict v);

struct ThreatScore {
  Severity severity = Severity::low;
  Priority priority = Priority::low_priority;
};

/// Bands are inclusive at the lower edge: 0.95 critical, 0.85 high, 0.70 medium.
ThreatScore score_probability(double probability);

struct Alert {
  TextRecord record;
  double probability = 0.0;
  int predicted = 1;
  std::optional<ThreatScore> score;
  std::size_t tick = 0;

  Verdict verdict() const { return verdict_; }
  /// pending -> accepted/rejected, once.
  void decide(bool accepted);

 private:
  Verdict verdict_ = Verdict::pending;
};

/// Sets the alert's severity and priority from its probability.
ThreatScore score_alert(Alert& alert);

struct PipelineConfig {
  std::size_t capacity = 100;
  double threshold = 0.5;
  double base_error_rate = 0.0;
  double overload_penalty = 0.2;
  double max_error_rate = 0.5;
  std::size_t validations_per_tick = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

using ProbabilityFn = std::function<double(const TextRecord&)>;
/// Analyst stand-in: true when the alert is judged genuine.
using AlertJudge = std::function<bool(const Alert&)>;

AlertJudge oracle_judge(const ValidationOracle& oracle);

struct TickTelemetry {
  std::size_t tick = 0;
  std::size_t arrived = 0;
  std::size_t positives = 0;
  std::size_t queued = 0;  // depth after the tick
  std::size_t dropped = 0;
  std::size_t validated = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::array<std::size_t, 4> severity{};  // accepted alerts by severity
  // running totals for the conservation check
  std::size_t total_positives = 0;
  std::size_t total_dropped = 0;
  std::size_t total_processed = 0;

  nlohmann::json to_json() const;
};

struct IngestOutcome {
  std::size_t positives = 0;
  std::size_t dropped = 0;
  std::vector<double> probabilities;  // one per input record
};

/// Tick-driven CTI pipeline: classify, queue, validate, score, feed back.
class Pipeline {
 public:
  Pipeline(ProbabilityFn probability, AlertJudge judge, PipelineConfig config = {});

  /// Classifies every record; predicted positives become alerts and are
  /// appended to the queue, or dropped when it is full.
  IngestOutcome ingest(const std::vector<TextRecord>& records);
  /// Dequeues the head and judges it. Throws when the queue is empty.
  Alert validate_next();
  /// base + penalty * depth / capacity, capped.
  double effective_error_rate() const;
  /// Ingest, then up to validations_per_tick validations.
  TickTelemetry step(const std::vector<TextRecord>& arrivals);

  std::vector<TextRecord> feedback_flush();

  std::size_t tick() const { return tick_; }
  std::size_t queue_depth() const { return queue_.size(); }
  std::size_t total_positives() const { return positives_; }
  std::size_t total_dropped() const { return dropped_; }
  std::size_t total_processed() const { return processed_; }
  std::size_t feedback_size() const { return feedback_.size(); }
  bool conserved() const { return positives_ == queue_.size() + dropped_ + processed_; }
  const std::vector<TickTelemetry>& telemetry() const { return telemetry_; }
  /// Classifier probabilities of the most recent step's arrivals.
  const std::vector<double>& last_probabilities() const { return last_probabilities_; }
  const PipelineConfig& config() const { return config_; }
  /// Tick-stamped ids of every queued alert, in order (for trace comparisons).
  std::vector<std::string> queue_ids() const;

 private:
  ProbabilityFn probability_;
  AlertJudge judge_;
  PipelineConfig config_;
  Rng rng_;
  std::deque<Alert> queue_;
  std::vector<TextRecord> feedback_;
  std::vector<TickTelemetry> telemetry_;
  std::vector<double> last_probabilities_;
  std::size_t tick_ = 0;
  std::size_t positives_ = 0;
  std::size_t dropped_ = 0;
  std::size_t processed_ = 0;
};

}  // namespace ctirb
