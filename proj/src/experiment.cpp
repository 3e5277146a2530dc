#include "ctirb/experiment.hpp"

#include <algorithm>

namespace ctirb {

const ClassifierModel& Desk::model() const {
  if (!classifier) throw ValidationError("desk has no trained classifier");
  return classifier->model;
}

const SaliencyModel& Desk::saliency_model() const {
  if (!saliency) throw ValidationError("desk has no trained saliency model");
  return saliency->model;
}

Corpus load_or_generate_corpus(const RunConfig& config) {
  if (config.corpus.path) return load_corpus(*config.corpus.path, config.corpus.format);
  auto spec = SyntheticCorpusSpec::defaults();
  spec.n_records = config.corpus.synthetic_records;
  spec.positive_fraction = config.corpus.positive_fraction;
  spec.seed = derive_seed(config.section_seed("corpus"), "synthetic");
  return generate_synthetic_corpus(spec);
}

Desk prepare_desk(const RunConfig& config, DeskOptions options) {
  Desk desk;
  desk.config = config;
  desk.corpus = load_or_generate_corpus(config);
  desk.split = split(desk.corpus, config.corpus.split, derive_seed(config.section_seed("corpus"), "split"));
  if (options.classifier) {
    desk.classifier = train_classifier(desk.split.train, desk.split.val, config.model.classifier, config.model.train);
  }
  if (options.saliency) {
    desk.saliency = train_saliency(desk.split.train, desk.split.val, config.saliency.model, config.saliency.train);
  }
  return desk;
}

std::vector<TextRecord> held_out_sources(const Desk& desk) {
  std::vector<TextRecord> out;
  for (const Corpus* part : {&desk.split.test, &desk.split.val}) {
    auto positives = part->filter_label(1).records();
    std::sort(positives.begin(), positives.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    out.insert(out.end(), positives.begin(), positives.end());
  }
  const std::size_t cap = desk.config.generation.sources;
  if (cap > 0 && out.size() > cap) out.resize(cap);
  return out;
}

std::unique_ptr<GenerationBackend> backend_for(const RunConfig& config) {
  return make_backend(config.generation.backend, config.generation.remote);
}

std::vector<FanRecord> FanCampaign::emitted() const {
  std::vector<FanRecord> out;
  for (const auto& f : fans) {
    if (f.emitted()) out.push_back(f);
  }
  return out;
}

std::vector<TextRecord> FanCampaign::accepted_false_positives() const {
  std::vector<TextRecord> out;
  for (const auto& f : fans) {
    if (f.emitted() && f.classified_positive.value_or(false) && f.oracle_accepted.value_or(false)) {
      out.push_back(f.to_record(1));
    }
  }
  return out;
}

FanCampaign run_fan_campaign(const Desk& desk, std::vector<TextRecord> sources, const GenerationBackend& backend,
                             std::uint64_t seed) {
  if (sources.empty()) throw ValidationError("FaN campaign needs at least one positive source record");
  const auto& cfg = desk.config;
  const auto& classifier = desk.model();
  FanCampaign c;
  c.sources = std::move(sources);
  c.profiles.reserve(c.sources.size());
  for (const auto& r : c.sources) c.profiles.push_back(desk.saliency_model().attention_weights(r));

  const PositiveClassifier classify = [&](const TextRecord& r) { return classifier.predict(r).label == 1; };
  c.refinement = refine_prompt_loop(c.sources, c.profiles, classify, backend, cfg.generation.theta,
                                    cfg.generation.max_iters, derive_seed(seed, "refine"), cfg.generation.prompt);
  c.fans = c.refinement.best_batch;

  c.oracle = ValidationOracle(tables::cyber_style_weights(), 1.0, 0.0, cfg.pipeline.target_rejection);
  std::vector<std::string> reference;
  for (const auto& f : c.fans) {
    if (f.emitted()) reference.push_back(f.text);
  }
  if (!reference.empty()) {
    c.oracle.calibrate(reference);
    for (auto& f : c.fans) {
      if (f.emitted()) validate_fan(f, c.oracle);
    }
  }

  const std::size_t k = cfg.saliency.model.top_k;
  const std::uint64_t baseline_seed = derive_seed(seed, "baseline");
  c.baseline.reserve(c.sources.size());
  for (const auto& r : c.sources) {
    auto f = random_replacement_fan(r, k, cfg.generation.prompt.replacement_domains, baseline_seed);
    f.classified_positive = classify(f.to_record(0));
    c.baseline.push_back(std::move(f));
  }
  return c;
}

std::vector<std::size_t> resolve_schedule(const RunConfig& config, std::size_t pool_size) {
  const auto& a = config.attack;
  switch (a.schedule) {
    case ScheduleKind::scaled: return scale_schedule(reference_poison_schedule(), pool_size);
    case ScheduleKind::random:
      return random_schedule(a.rounds, a.lo, a.hi, derive_seed(config.section_seed("attack"), "schedule"));
    case ScheduleKind::explicit_counts: return a.counts;
  }
  return {};
}

PoisonRun run_poison_experiment(const Desk& desk, const GenerationBackend& backend) {
  const auto& cfg = desk.config;
  PoisonRun run;
  auto sources = desk.split.train.filter_label(1).records();
  std::sort(sources.begin(), sources.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  run.campaign = run_fan_campaign(desk, std::move(sources), backend, derive_seed(cfg.section_seed("attack"), "poison"));
  const auto pool = run.campaign.accepted_false_positives();
  if (pool.empty()) throw ValidationError("no FaN was both classified positive and accepted; nothing to inject");
  run.schedule = resolve_schedule(cfg, pool.size());

  PoisonConfig pc;
  pc.model = cfg.model.classifier;
  pc.train = cfg.model.train;
  pc.train.epochs = cfg.attack.poison_epochs;
  pc.train.patience.reset();
  run.rounds = run_poisoning(desk.split.train, desk.split.val, pool, run.schedule, pc);
  return run;
}

FloodSources build_flood_sources(const Desk& desk, const FanCampaign& campaign, const GenerationBackend& backend) {
  const auto& cfg = desk.config;
  const std::uint64_t seed = cfg.section_seed("attack");
  FloodSources out;
  out.streams[StreamKind::real_tp] = campaign.sources;

  auto& fan = out.streams[StreamKind::fan];
  for (const auto& f : campaign.fans) {
    // the FaN stream is what survived the analyst pass
    if (f.emitted() && f.oracle_accepted.value_or(false)) fan.push_back(f.to_record(0));
  }

  auto& para = out.streams[StreamKind::fap_paraphrase];
  auto& rule = out.streams[StreamKind::fap_rule];
  const Lexicons& lexicons = desk.corpus.lexicons();
  for (const auto& r : campaign.sources) {
    const auto result = paraphrase_fap(r, backend, cfg.generation.paraphrases, derive_seed(seed, "paraphrase"));
    if (result.short_of_target) ++out.paraphrase_short;
    for (const auto& v : result.variants) para.push_back(v.to_record());
    try {
      rule.push_back(rulebased_fap(r, lexicons, derive_seed(seed, "rule")).to_record());
    } catch (const ValidationError&) {
      ++out.unsubstitutable;
    }
  }
  return out;
}

FloodConfig flood_config(const RunConfig& config) {
  FloodConfig fc;
  fc.volumes = config.attack.flood_volumes;
  fc.seed = derive_seed(config.section_seed("attack"), "flood");
  fc.arrivals_per_tick = config.attack.arrivals_per_tick;
  fc.pipeline = config.pipeline.config;
  return fc;
}

GradientRun run_gradient_metrics(const Desk& desk, const FanCampaign& campaign) {
  const auto& cfg = desk.config;
  auto cap = [&](std::vector<TextRecord> records) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    if (cfg.metrics.max_records > 0 && records.size() > cfg.metrics.max_records) {
      records.resize(cfg.metrics.max_records);
    }
    return records;
  };
  std::vector<TextRecord> fake;
  for (const auto& f : campaign.emitted()) fake.push_back(f.to_record(0));
  if (fake.empty()) throw ValidationError("no emitted FaNs to profile");

  GradientRun run;
  run.real = gradient_profile(desk.model(), cap(campaign.sources), 1.0, SampleSource::real);
  // FaNs are scored against the class they imitate
  run.fake = gradient_profile(desk.model(), cap(std::move(fake)), 1.0, SampleSource::fake);
  run.alignment = gradient_alignment(run.real, run.fake);
  run.real_density = kde(run.real.samples, cfg.metrics.bandwidth);
  run.fake_density = kde(run.fake.samples, cfg.metrics.bandwidth);
  return run;
}

}  // namespace ctirb
