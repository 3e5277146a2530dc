#include "ctirb/attacks.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace ctirb {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::evasion: return "evasion";
    case AttackKind::flooding: return "flooding";
    case AttackKind::poisoning: return "poisoning";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view text) {
  for (AttackKind k : {AttackKind::evasion, AttackKind::flooding, AttackKind::poisoning}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError("unknown attack '" + std::string(text) + "'");
}

std::string to_string(AttackSetting setting) {
  switch (setting) {
    case AttackSetting::black_box: return "black_box";
    case AttackSetting::gray_box: return "gray_box";
    case AttackSetting::white_box: return "white_box";
  }
  return "unknown";
}

void AttackerKnowledge::validate() const {
  if (setting == AttackSetting::black_box && weights != WeightKnowledge::none) {
    throw ValidationError("a black-box attacker cannot know the model weights");
  }
}

nlohmann::json AttackerKnowledge::to_json() const {
  auto inference = [](Inference i) { return i == Inference::inferred ? "inferred" : "unknown"; };
  return {{"training_data", training_data == DataKnowledge::approximate_osint ? "approximate_osint" : "none"},
          {"features", inference(features)},
          {"algorithm", inference(algorithm)},
          {"loss", inference(loss)},
          {"weights", weights == WeightKnowledge::none ? "none" : "full"},
          {"setting", to_string(setting)}};
}

AttackerKnowledge describe_threat_model(AttackKind) {
  // every attack here uses the same black-box profile
  AttackerKnowledge k;
  k.validate();
  return k;
}

void require_supported(const AttackerKnowledge& knowledge) {
  knowledge.validate();
  if (knowledge.setting != AttackSetting::black_box) throw ValidationError("unsupported setting");
}

// ------------------------------------------------------------------ evasion

EvasionReport run_evasion(const ClassifierModel& classifier, const std::vector<FanRecord>& fans,
                          const AttackerKnowledge& knowledge) {
  require_supported(knowledge);
  if (fans.empty()) throw ValidationError("evasion needs at least one FaN");
  EvasionReport report;
  report.n_fans = fans.size();
  for (const auto& fan : fans) {
    const auto prediction = classifier.predict(fan.to_record(0));
    const bool fp = prediction.label == 1;
    report.confusion.add(0, prediction.label);
    report.samples.push_back({fan.id, fan.source_id, prediction.probability, fp});
  }
  report.fpr = static_cast<double>(report.confusion.fp) / static_cast<double>(report.n_fans);
  return report;
}

// ----------------------------------------------------------------- flooding

std::string to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::real_tp: return "real_tp";
    case StreamKind::fan: return "fan";
    case StreamKind::fap_paraphrase: return "fap_paraphrase";
    case StreamKind::fap_rule: return "fap_rule";
  }
  return "unknown";
}

StreamKind parse_stream_kind(std::string_view text) {
  for (StreamKind k : kAllStreams) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError("unknown stream '" + std::string(text) + "'");
}

int stream_truth(StreamKind kind) { return kind == StreamKind::fan ? 0 : 1; }

void FloodConfig::validate() const {
  if (total() == 0) throw ValidationError("flooding needs at least one non-empty stream");
  if (arrivals_per_tick < 1) throw ValidationError("arrivals_per_tick must be >= 1");
  pipeline.validate();
}

std::size_t FloodConfig::total() const {
  std::size_t n = 0;
  for (const auto& [_, v] : volumes) n += v;
  return n;
}

nlohmann::json FloodSample::to_json() const {
  return {{"sequence", sequence}, {"tick", tick},           {"stream", to_string(stream)}, {"id", id},
          {"probability", probability}, {"predicted", predicted}, {"truth", truth}};
}

namespace {

std::optional<double> stream_rate(StreamKind kind, const ConfusionMatrix& c) {
  const Rates r = compute_rates(c);
  return kind == StreamKind::fan ? r.fpr : r.tpr;
}

}  // namespace

std::vector<StreamReport> recompute_streams(const std::vector<FloodSample>& samples) {
  std::map<StreamKind, StreamReport> by_stream;
  for (const auto& s : samples) {
    auto& report = by_stream[s.stream];
    report.stream = s.stream;
    ++report.volume;
    report.confusion.add(s.truth, s.predicted);
  }
  std::vector<StreamReport> out;
  for (StreamKind k : kAllStreams) {
    if (auto it = by_stream.find(k); it != by_stream.end()) {
      it->second.rate = stream_rate(k, it->second.confusion);
      out.push_back(it->second);
    }
  }
  return out;
}

FloodReport run_flooding(const ClassifierModel& classifier, const AlertJudge& judge, const FloodConfig& config,
                         const std::map<StreamKind, std::vector<TextRecord>>& sources,
                         const AttackerKnowledge& knowledge) {
  require_supported(knowledge);
  config.validate();

  struct Item {
    StreamKind stream;
    TextRecord record;
  };
  std::vector<Item> items;
  items.reserve(config.total());
  for (StreamKind kind : kAllStreams) {
    const auto vit = config.volumes.find(kind);
    const std::size_t volume = vit == config.volumes.end() ? 0 : vit->second;
    if (volume == 0) continue;
    const auto sit = sources.find(kind);
    if (sit == sources.end() || sit->second.empty()) {
      throw ValidationError("stream '" + to_string(kind) + "' has a volume but no source records");
    }
    const auto& pool = sit->second;
    for (std::size_t i = 0; i < volume; ++i) {
      TextRecord r = pool[i % pool.size()];
      if (i >= pool.size()) r.id += "#" + std::to_string(i / pool.size());
      r.label = stream_truth(kind);
      items.push_back({kind, std::move(r)});
    }
  }
  Rng rng(derive_seed(config.seed, "flood.interleave"));
  rng.shuffle(items);

  Pipeline pipeline([&](const TextRecord& r) { return classifier.predict(r).probability; }, judge, config.pipeline);
  FloodReport report;
  report.samples.reserve(items.size());
  for (std::size_t start = 0; start < items.size(); start += config.arrivals_per_tick) {
    const std::size_t end = std::min(items.size(), start + config.arrivals_per_tick);
    std::vector<TextRecord> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(items[i].record);
    pipeline.step(batch);
    const auto& probabilities = pipeline.last_probabilities();
    for (std::size_t i = start; i < end; ++i) {
      FloodSample s;
      s.sequence = i;
      s.tick = pipeline.tick();
      s.stream = items[i].stream;
      s.id = items[i].record.id;
      s.probability = probabilities[i - start];
      s.predicted = s.probability >= config.pipeline.threshold ? 1 : 0;
      s.truth = stream_truth(items[i].stream);
      report.samples.push_back(std::move(s));
    }
    report.max_queue_depth = std::max(report.max_queue_depth, pipeline.queue_depth());
  }
  while (config.drain && pipeline.queue_depth() > 0) pipeline.step({});

  report.streams = recompute_streams(report.samples);
  for (auto& s : report.streams) {
    s.volume = config.volumes.at(s.stream);
  }
  report.telemetry = pipeline.telemetry();
  report.overflow = pipeline.total_dropped();
  report.feedback = pipeline.feedback_flush();
  return report;
}

// ---------------------------------------------------------------- poisoning

const std::vector<std::size_t>& reference_poison_schedule() {
  static const std::vector<std::size_t> schedule{500, 1000, 3000, 1500, 1242, 1492, 668};
  return schedule;
}

std::vector<std::size_t> scale_schedule(const std::vector<std::size_t>& reference, std::size_t total) {
  if (reference.empty()) throw ValidationError("schedule must have at least one round");
  const std::size_t ref_total = std::accumulate(reference.begin(), reference.end(), std::size_t{0});
  if (ref_total == 0) throw ValidationError("reference schedule is all zero");
  std::vector<std::size_t> out(reference.size());
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (total > 0 && reference[i] > std::numeric_limits<std::size_t>::max() / total) {
      throw ValidationError("schedule scaling overflows");
    }
    const std::size_t exact = reference[i] * total;
    out[i] = static_cast<std::size_t>(exact / ref_total);
    remainders.emplace_back(static_cast<std::size_t>(exact % ref_total), i);
    assigned += out[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++out[remainders[j].second];
  return out;
}

std::vector<std::size_t> random_schedule(std::size_t rounds, std::size_t lo, std::size_t hi, std::uint64_t seed) {
  if (rounds < 1) throw ValidationError("schedule must have at least one round");
  if (lo > hi) throw ValidationError("schedule range must satisfy lo <= hi");
  Rng rng(derive_seed(seed, "poison.schedule"));
  std::vector<std::size_t> out(rounds);
  for (auto& v : out) v = lo + rng.index(hi - lo + 1);
  return out;
}

std::vector<std::size_t> cumulative(const std::vector<std::size_t>& schedule) {
  std::vector<std::size_t> out(schedule.size());
  std::partial_sum(schedule.begin(), schedule.end(), out.begin());
  return out;
}

std::vector<PoisonRoundLog> run_poisoning(const Corpus& base_train, const Corpus& val,
                                          const std::vector<TextRecord>& accepted_fans,
                                          const std::vector<std::size_t>& schedule, const PoisonConfig& config,
                                          const AttackerKnowledge& knowledge) {
  require_supported(knowledge);
  if (schedule.empty()) throw ValidationError("schedule must have at least one round");
  if (val.empty()) throw ValidationError("poisoning needs a non-empty validation set");
  const auto totals = cumulative(schedule);
  if (totals.back() > accepted_fans.size()) {
    throw ValidationError("schedule exhausts the FaN pool (" + std::to_string(totals.back()) + " > " +
                          std::to_string(accepted_fans.size()) + ")");
  }
  std::vector<TextRecord> pool = accepted_fans;
  for (auto& r : pool) r.label = 1;

  std::vector<PoisonRoundLog> logs;
  for (std::size_t round = 0; round < schedule.size(); ++round) {
    const std::vector<TextRecord> injected(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(totals[round]));
    const auto trained = retrain_with(base_train, injected, Corpus{}, config.model, config.train);
    const auto eval = evaluate(trained.model, val);
    logs.push_back({round + 1, schedule[round], totals[round], eval.confusion, eval.rates});
  }
  return logs;
}

}  // namespace ctirb
