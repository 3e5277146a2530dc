#include "ctirb/config.hpp"

#include <set>

#include "ctirb/report.hpp"

namespace ctirb {

namespace {

using nlohmann::json;

/// Strict reader for one JSON object: remembers which keys were asked for
/// and rejects the rest in finish().
class Reader {
 public:
  Reader(const json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) throw ValidationError(label() + " must be a JSON object");
  }

  bool has(const char* key) const { return object_.contains(key); }

  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  Reader child(const char* key) {
    const json* v = find(key);
    if (v == nullptr) throw ValidationError("missing config section '" + path(key) + "'");
    return Reader(*v, path(key));
  }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ValidationError(path(key) + " must be a number");
      out = v->get<double>();
    }
  }

  void optional_number(const char* key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        throw ValidationError(path(key) + " must be a number or null");
      }
    }
  }

  template <typename T>
  void count(const char* key, T& out) {
    if (const json* v = find(key)) out = static_cast<T>(as_count(*v, path(key)));
  }

  void optional_count(const char* key, std::optional<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else {
        out = as_count(*v, path(key));
      }
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ValidationError(path(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  void strings(const char* key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ValidationError(path(key) + " must be an array of strings");
      out.clear();
      for (const auto& item : *v) {
        if (!item.is_string()) throw ValidationError(path(key) + " must be an array of strings");
        out.push_back(item.get<std::string>());
      }
    }
  }

  void counts(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ValidationError(path(key) + " must be an array of counts");
      out.clear();
      for (const auto& item : *v) out.push_back(as_count(item, path(key)));
    }
  }

  void finish() const {
    for (const auto& [key, _] : object_.items()) {
      if (!seen_.contains(key)) throw ValidationError("unknown config key '" + path(key) + "'");
    }
  }

  std::string path(std::string_view key) const { return where_.empty() ? std::string(key) : where_ + "." + std::string(key); }

 private:
  std::string label() const { return where_.empty() ? "config" : "config section '" + where_ + "'"; }

  static std::uint64_t as_count(const json& v, const std::string& where) {
    const bool non_negative = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!non_negative) throw ValidationError(where + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  const json& object_;
  std::string where_;
  std::set<std::string, std::less<>> seen_;
};

void read_train(Reader r, TrainConfig& t) {
  r.count("epochs", t.epochs);
  r.count("batch_size", t.batch_size);
  r.number("learning_rate", t.optimizer.learning_rate);
  std::string algorithm = t.optimizer.algorithm == nn::Algorithm::adam ? "adam" : "sgd";
  r.string("algorithm", algorithm);
  if (algorithm == "adam") {
    t.optimizer.algorithm = nn::Algorithm::adam;
  } else if (algorithm == "sgd") {
    t.optimizer.algorithm = nn::Algorithm::sgd;
  } else {
    throw ValidationError(r.path("algorithm") + " must be adam or sgd");
  }
  r.optional_number("clip_norm", t.optimizer.clip_norm);
  r.optional_count("patience", t.patience);
  r.finish();
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.optimizer.learning_rate},
          {"algorithm", t.optimizer.algorithm == nn::Algorithm::adam ? "adam" : "sgd"},
          {"clip_norm", t.optimizer.clip_norm ? json(*t.optimizer.clip_norm) : json(nullptr)},
          {"patience", t.patience ? json(*t.patience) : json(nullptr)}};
}

std::string schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::scaled: return "scaled";
    case ScheduleKind::random: return "random";
    case ScheduleKind::explicit_counts: return "explicit";
  }
  return "scaled";
}

}  // namespace

const std::vector<std::string>& RunConfig::section_names() {
  static const std::vector<std::string> names{"corpus", "model", "saliency", "generation",
                                              "attack", "pipeline", "metrics"};
  return names;
}

std::uint64_t RunConfig::section_seed(std::string_view section) const { return derive_seed(seed, section); }

void RunConfig::apply_seeds() {
  model.train.seed = section_seed("model");
  saliency.train.seed = section_seed("saliency");
  pipeline.config.seed = section_seed("pipeline");
}

void RunConfig::validate() const {
  if (!corpus.path) {
    if (corpus.synthetic_records < 10) throw ValidationError("corpus.synthetic_records must be >= 10");
    if (!(corpus.positive_fraction > 0.0 && corpus.positive_fraction < 1.0)) {
      throw ValidationError("corpus.positive_fraction must be in (0, 1)");
    }
  }
  model.classifier.validate();
  model.train.validate();
  saliency.model.validate();
  saliency.train.validate();
  generation.prompt.validate();
  generation.remote.validate();
  if (generation.backend != "fallback" && generation.backend != "template" && generation.backend != "remote") {
    throw ValidationError("generation.backend must be fallback or remote");
  }
  if (!(generation.theta > 0.0 && generation.theta <= 1.0)) throw ValidationError("generation.theta must be in (0, 1]");
  if (generation.max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (generation.concurrency < 1) throw ValidationError("generation.concurrency must be >= 1");
  if (generation.paraphrases < 1) throw ValidationError("generation.paraphrases must be >= 1");
  if (attack.arrivals_per_tick < 1) throw ValidationError("attack.arrivals_per_tick must be >= 1");
  if (attack.schedule == ScheduleKind::explicit_counts && attack.counts.empty()) {
    throw ValidationError("attack.poison_schedule must have at least one round");
  }
  if (attack.schedule == ScheduleKind::random && (attack.rounds < 1 || attack.lo > attack.hi)) {
    throw ValidationError("random poisoning schedule needs rounds >= 1 and lo <= hi");
  }
  if (attack.poison_epochs < 1) throw ValidationError("attack.poison_epochs must be >= 1");
  pipeline.config.validate();
  if (!(pipeline.target_rejection >= 0.0 && pipeline.target_rejection <= 1.0)) {
    throw ValidationError("pipeline.target_rejection must be in [0, 1]");
  }
  if (pipeline.arrivals_per_tick < 1) throw ValidationError("pipeline.arrivals_per_tick must be >= 1");
  if (metrics.bandwidth && !(*metrics.bandwidth > 0.0)) throw ValidationError("metrics.bandwidth must be positive");
}

RunConfig RunConfig::from_json(const json& document) {
  RunConfig cfg;
  Reader top(document, "");
  top.count("seed", cfg.seed);
  std::string out = cfg.out.string();
  top.string("out", out);
  cfg.out = out;

  {
    Reader r = top.child("corpus");
    if (const json* p = r.find("path"); p != nullptr && !p->is_null()) {
      if (!p->is_string()) throw ValidationError("corpus.path must be a string or null");
      cfg.corpus.path = p->get<std::string>();
    }
    std::string format = cfg.corpus.format == CorpusFormat::jsonl ? "jsonl" : "csv";
    r.string("format", format);
    cfg.corpus.format = parse_corpus_format(format);
    r.count("synthetic_records", cfg.corpus.synthetic_records);
    r.number("positive_fraction", cfg.corpus.positive_fraction);
    if (const json* s = r.find("split")) {
      if (!s->is_array() || s->size() != 3 || !(*s)[0].is_number() || !(*s)[1].is_number() || !(*s)[2].is_number()) {
        throw ValidationError("corpus.split must be [train, val, test]");
      }
      cfg.corpus.split = {(*s)[0].get<double>(), (*s)[1].get<double>(), (*s)[2].get<double>()};
    }
    r.finish();
  }
  {
    Reader r = top.child("model");
    r.count("embed_dim", cfg.model.classifier.embed_dim);
    r.count("filters", cfg.model.classifier.filters);
    r.counts("widths", cfg.model.classifier.widths);
    r.number("threshold", cfg.model.classifier.threshold);
    if (r.has("train")) read_train(r.child("train"), cfg.model.train);
    r.finish();
  }
  {
    Reader r = top.child("saliency");
    r.count("embed_dim", cfg.saliency.model.embed_dim);
    r.count("hidden", cfg.saliency.model.hidden);
    r.count("top_k", cfg.saliency.model.top_k);
    if (r.has("train")) read_train(r.child("train"), cfg.saliency.train);
    r.finish();
  }
  {
    Reader r = top.child("generation");
    auto& g = cfg.generation;
    r.string("backend", g.backend);
    r.string("intro", g.prompt.intro);
    if (r.has("constraints")) {
      std::vector<std::string> names;
      r.strings("constraints", names);
      g.prompt.constraints.clear();
      for (const auto& n : names) g.prompt.constraints.push_back(parse_constraint(n));
    }
    r.strings("replacement_domains", g.prompt.replacement_domains);
    r.count("structure_strength", g.prompt.structure_strength);
    r.count("sources", g.sources);
    r.number("theta", g.theta);
    r.count("max_iters", g.max_iters);
    r.count("concurrency", g.concurrency);
    r.count("paraphrases", g.paraphrases);
    if (r.has("remote")) {
      Reader rr = r.child("remote");
      rr.string("model", g.remote.model);
      rr.number("temperature", g.remote.temperature);
      std::size_t timeout = static_cast<std::size_t>(g.remote.timeout.count());
      std::size_t backoff = static_cast<std::size_t>(g.remote.initial_backoff.count());
      rr.count("timeout_ms", timeout);
      rr.count("max_attempts", g.remote.max_attempts);
      rr.count("initial_backoff_ms", backoff);
      g.remote.timeout = std::chrono::milliseconds(timeout);
      g.remote.initial_backoff = std::chrono::milliseconds(backoff);
      rr.finish();
    }
    r.finish();
  }
  {
    Reader r = top.child("attack");
    auto& a = cfg.attack;
    if (const json* v = r.find("flood_volumes")) {
      Reader vr(*v, "attack.flood_volumes");
      std::map<StreamKind, std::size_t> volumes;
      for (StreamKind k : kAllStreams) {
        const std::string name = to_string(k);
        if (vr.has(name.c_str())) vr.count(name.c_str(), volumes[k]);
      }
      vr.finish();
      a.flood_volumes = std::move(volumes);
    }
    r.count("arrivals_per_tick", a.arrivals_per_tick);
    if (const json* s = r.find("poison_schedule")) {
      if (s->is_array()) {
        a.schedule = ScheduleKind::explicit_counts;
        r.counts("poison_schedule", a.counts);
      } else if (*s == "scaled") {
        a.schedule = ScheduleKind::scaled;
      } else if (*s == "random") {
        a.schedule = ScheduleKind::random;
      } else {
        throw ValidationError("attack.poison_schedule must be \"scaled\", \"random\" or an array of counts");
      }
    }
    r.count("poison_rounds", a.rounds);
    r.count("poison_lo", a.lo);
    r.count("poison_hi", a.hi);
    r.count("poison_epochs", a.poison_epochs);
    r.finish();
  }
  {
    Reader r = top.child("pipeline");
    auto& p = cfg.pipeline;
    r.count("capacity", p.config.capacity);
    r.number("threshold", p.config.threshold);
    r.number("base_error_rate", p.config.base_error_rate);
    r.number("overload_penalty", p.config.overload_penalty);
    r.number("max_error_rate", p.config.max_error_rate);
    r.count("validations_per_tick", p.config.validations_per_tick);
    r.number("target_rejection", p.target_rejection);
    r.count("arrivals_per_tick", p.arrivals_per_tick);
    r.finish();
  }
  {
    Reader r = top.child("metrics");
    r.optional_number("bandwidth", cfg.metrics.bandwidth);
    r.count("max_records", cfg.metrics.max_records);
    r.finish();
  }
  top.finish();
  cfg.apply_seeds();
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json document;
  try {
    document = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig cfg = from_json(document);
  // corpus paths are relative to the config file
  if (cfg.corpus.path && cfg.corpus.path->is_relative()) cfg.corpus.path = path.parent_path() / *cfg.corpus.path;
  return cfg;
}

json RunConfig::to_json() const {
  json volumes = json::object();
  for (const auto& [k, v] : attack.flood_volumes) volumes[to_string(k)] = v;
  std::vector<std::string> constraints;
  for (Constraint c : generation.prompt.constraints) constraints.push_back(to_string(c));
  return {
      {"seed", seed},
      {"out", out.string()},
      {"corpus",
       {{"path", corpus.path ? json(corpus.path->string()) : json(nullptr)},
        {"format", corpus.format == CorpusFormat::jsonl ? "jsonl" : "csv"},
        {"synthetic_records", corpus.synthetic_records},
        {"positive_fraction", corpus.positive_fraction},
        {"split", {corpus.split.train, corpus.split.val, corpus.split.test}}}},
      {"model",
       {{"embed_dim", model.classifier.embed_dim},
        {"filters", model.classifier.filters},
        {"widths", model.classifier.widths},
        {"threshold", model.classifier.threshold},
        {"train", train_json(model.train)}}},
      {"saliency",
       {{"embed_dim", saliency.model.embed_dim},
        {"hidden", saliency.model.hidden},
        {"top_k", saliency.model.top_k},
        {"train", train_json(saliency.train)}}},
      {"generation",
       {{"backend", generation.backend},
        {"intro", generation.prompt.intro},
        {"constraints", constraints},
        {"replacement_domains", generation.prompt.replacement_domains},
        {"structure_strength", generation.prompt.structure_strength},
        {"sources", generation.sources},
        {"theta", generation.theta},
        {"max_iters", generation.max_iters},
        {"concurrency", generation.concurrency},
        {"paraphrases", generation.paraphrases},
        {"remote",
         {{"model", generation.remote.model},
          {"temperature", generation.remote.temperature},
          {"timeout_ms", generation.remote.timeout.count()},
          {"max_attempts", generation.remote.max_attempts},
          {"initial_backoff_ms", generation.remote.initial_backoff.count()}}}}},
      {"attack",
       {{"flood_volumes", volumes},
        {"arrivals_per_tick", attack.arrivals_per_tick},
        {"poison_schedule", attack.schedule == ScheduleKind::explicit_counts ? json(attack.counts)
                                                                              : json(schedule_name(attack.schedule))},
        {"poison_rounds", attack.rounds},
        {"poison_lo", attack.lo},
        {"poison_hi", attack.hi},
        {"poison_epochs", attack.poison_epochs}}},
      {"pipeline",
       {{"capacity", pipeline.config.capacity},
        {"threshold", pipeline.config.threshold},
        {"base_error_rate", pipeline.config.base_error_rate},
        {"overload_penalty", pipeline.config.overload_penalty},
        {"max_error_rate", pipeline.config.max_error_rate},
        {"validations_per_tick", pipeline.config.validations_per_tick},
        {"target_rejection", pipeline.target_rejection},
        {"arrivals_per_tick", pipeline.arrivals_per_tick}}},
      {"metrics",
       {{"bandwidth", metrics.bandwidth ? json(*metrics.bandwidth) : json(nullptr)},
        {"max_records", metrics.max_records}}},
  };
}

}  // namespace ctirb
