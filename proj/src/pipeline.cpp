#include "ctirb/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace ctirb {

std::string to_string(Severity s) {
  switch (s) {
    case Severity::critical: return "Critical";
    case Severity::high: return "High";
    case Severity::medium: return "Medium";
    case Severity::low: return "Low";
  }
  return "unknown";
}

std::string to_string(Priority p) {
  switch (p) {
    case Priority::urgent: return "Urgent";
    case Priority::asap: return "ASAP";
    case Priority::within_24h: return "Within24h";
    case Priority::low_priority: return "LowPriority";
  }
  return "unknown";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pending: return "pending";
    case Verdict::accepted: return "accepted";
    case Verdict::rejected: return "rejected";
  }
  return "unknown";
}

ThreatScore score_probability(double probability) {
  if (!std::isfinite(probability)) throw ValidationError("probability must be finite");
  if (probability >= 0.95) return {Severity::critical, Priority::urgent};
  if (probability >= 0.85) return {Severity::high, Priority::asap};
  if (probability >= 0.70) return {Severity::medium, Priority::within_24h};
  return {Severity::low, Priority::low_priority};
}

void Alert::decide(bool accepted) {
  if (verdict_ != Verdict::pending) throw ValidationError("alert '" + record.id + "' was already validated");
  verdict_ = accepted ? Verdict::accepted : Verdict::rejected;
}

ThreatScore score_alert(Alert& alert) {
  if (alert.predicted != 1) throw ValidationError("only positive alerts are scored");
  alert.score = score_probability(alert.probability);
  return *alert.score;
}

void PipelineConfig::validate() const {
  if (capacity < 1) throw ValidationError("dashboard capacity must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0, 1)");
  for (double rate : {base_error_rate, max_error_rate}) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("error rates must be in [0, 1]");
  }
  if (!(overload_penalty >= 0.0)) throw ValidationError("overload penalty must be >= 0");
}

AlertJudge oracle_judge(const ValidationOracle& oracle) {
  return [&oracle](const Alert& alert) { return oracle.accepts(alert.record.clean_text); };
}

nlohmann::json TickTelemetry::to_json() const {
  nlohmann::json hist = nlohmann::json::object();
  for (Severity s : {Severity::critical, Severity::high, Severity::medium, Severity::low}) {
    hist[to_string(s)] = severity[static_cast<std::size_t>(s)];
  }
  return {{"tick", tick},         {"arrived", arrived},   {"positives", positives}, {"queued", queued},
          {"dropped", dropped},   {"validated", validated}, {"accepted", accepted}, {"rejected", rejected},
          {"severity", hist}};
}

Pipeline::Pipeline(ProbabilityFn probability, AlertJudge judge, PipelineConfig config)
    : probability_(std::move(probability)),
      judge_(std::move(judge)),
      config_(config),
      rng_(derive_seed(config.seed, "pipeline.analyst")) {
  config_.validate();
  if (!probability_ || !judge_) throw ValidationError("pipeline needs a classifier and a judge");
}

IngestOutcome Pipeline::ingest(const std::vector<TextRecord>& records) {
  IngestOutcome out;
  out.probabilities.reserve(records.size());
  for (const auto& record : records) {
    const double p = probability_(record);
    out.probabilities.push_back(p);
    if (p < config_.threshold) continue;
    ++out.positives;
    ++positives_;
    if (queue_.size() >= config_.capacity) {
      ++out.dropped;
      ++dropped_;
      continue;
    }
    Alert alert;
    alert.record = record;
    alert.probability = p;
    alert.tick = tick_;
    queue_.push_back(std::move(alert));
  }
  return out;
}

double Pipeline::effective_error_rate() const {
  const double fill = static_cast<double>(queue_.size()) / static_cast<double>(config_.capacity);
  return std::min(config_.max_error_rate, config_.base_error_rate + config_.overload_penalty * fill);
}

Alert Pipeline::validate_next() {
  if (queue_.empty()) throw ValidationError("nothing to validate");
  const double error_rate = effective_error_rate();
  Alert alert = std::move(queue_.front());
  queue_.pop_front();
  ++processed_;
  bool accepted = judge_(alert);
  // the draw is taken even at rate 0 so traces do not depend on the rate
  if (rng_.uniform() < error_rate) accepted = !accepted;
  alert.decide(accepted);
  if (accepted) {
    score_alert(alert);
    TextRecord r = alert.record;
    r.label = 1;
    feedback_.push_back(std::move(r));
  }
  return alert;
}

TickTelemetry Pipeline::step(const std::vector<TextRecord>& arrivals) {
  ++tick_;
  TickTelemetry t;
  t.tick = tick_;
  t.arrived = arrivals.size();
  auto ingested = ingest(arrivals);
  last_probabilities_ = std::move(ingested.probabilities);
  t.positives = ingested.positives;
  t.dropped = ingested.dropped;
  for (std::size_t i = 0; i < config_.validations_per_tick && !queue_.empty(); ++i) {
    const Alert alert = validate_next();
    ++t.validated;
    if (alert.verdict() == Verdict::accepted) {
      ++t.accepted;
      ++t.severity[static_cast<std::size_t>(alert.score->severity)];
    } else {
      ++t.rejected;
    }
  }
  t.queued = queue_.size();
  t.total_positives = positives_;
  t.total_dropped = dropped_;
  t.total_processed = processed_;
  telemetry_.push_back(t);
  return t;
}

std::vector<TextRecord> Pipeline::feedback_flush() {
  std::vector<TextRecord> out;
  out.swap(feedback_);
  return out;
}

std::vector<std::string> Pipeline::queue_ids() const {
  std::vector<std::string> out;
  out.reserve(queue_.size());
  for (const auto& a : queue_) out.push_back(std::to_string(a.tick) + ":" + a.record.id);
  return out;
}

}  // namespace ctirb
