#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/experiment.hpp"
#include "ctirb/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctirb;

namespace {

constexpr int kExitThresholdNotReached = 3;

struct GlobalOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> backend;
  bool quiet = false;
};

class Run {
 public:
  Run(std::string command, const GlobalOptions& options) : command_(std::move(command)), quiet_(options.quiet) {
    if (options.config) {
      config_ = RunConfig::load(*options.config);
      inputs_[*options.config] = sha256_file(*options.config);
    } else {
      config_ = RunConfig::from_json(default_document());
    }
    if (options.seed) {
      config_.seed = *options.seed;
      config_.apply_seeds();
    }
    if (options.out) config_.out = *options.out;
    if (options.backend) {
      if (*options.backend != "remote" && *options.backend != "fallback") {
        throw ValidationError("--backend must be remote or fallback");
      }
      config_.generation.backend = *options.backend;
    }
    config_.validate();
    if (config_.corpus.path) inputs_[config_.corpus.path->string()] = sha256_file(*config_.corpus.path);
  }

  const RunConfig& config() const { return config_; }

  void log(const std::string& message) const {
    if (!quiet_) std::cerr << "[" << command_ << "] " << message << '\n';
  }

  /// Writes manifest.json before any report.
  void begin(const std::vector<std::string>& reports) {
    fs::create_directories(config_.out);
    json seeds = json::object();
    for (const auto& s : RunConfig::section_names()) seeds[s] = config_.section_seed(s);
    json inputs = json::object();
    for (const auto& [path, hash] : inputs_) inputs[path] = hash;
    json hashed = config_.to_json();
    hashed.erase("out");  // where a run lands does not change what it computes
    const json manifest = {{"command", command_},
                           {"config", config_.to_json()},
                           {"config_sha256", sha256_hex(hashed.dump())},
                           {"section_seeds", seeds},
                           {"inputs", inputs},
                           {"reports", reports},
                           {"density_grid_points", kDensityGridPoints}};
    write_file_atomic(config_.out / "manifest.json", manifest.dump(2) + "\n");
  }

  void write(const std::string& name, const std::string& content) const {
    write_file_atomic(config_.out / name, content);
    log("wrote " + (config_.out / name).string());
  }

 private:
  static json default_document() {
    json doc = json::object();
    for (const auto& s : RunConfig::section_names()) doc[s] = json::object();
    return doc;
  }

  std::string command_;
  bool quiet_;
  RunConfig config_;
  std::map<std::string, std::string> inputs_;
};

std::string opt(const std::optional<double>& v) { return format_optional(v, 4); }
std::string opt_f1(const std::optional<double>& v) { return v ? format_f1(*v) : std::string(); }
std::string num(std::size_t v) { return std::to_string(v); }

template <typename Range, typename Fn>
std::string jsonl(const Range& items, Fn to_json) {
  std::string out;
  for (const auto& item : items) out += to_json(item).dump() + "\n";
  return out;
}

void add_eval_row(CsvWriter& csv, const std::string& split, const Evaluation& e) {
  csv.row({split, num(e.confusion.tp), num(e.confusion.fp), num(e.confusion.tn), num(e.confusion.fn),
           opt(e.rates.precision), opt(e.rates.recall), opt_f1(e.rates.f1)});
}

std::string history_csv(const std::vector<EpochStats>& history) {
  CsvWriter csv({"epoch", "mean_loss", "val_f1"});
  for (const auto& h : history) csv.row({num(h.epoch), format_exact(h.mean_loss), opt(h.val_f1)});
  return csv.str();
}

std::string density_csv(const std::vector<std::pair<std::string, const DensityEstimate*>>& densities) {
  CsvWriter csv({"source", "grid", "density", "bandwidth"});
  for (const auto& [name, d] : densities) {
    for (std::size_t i = 0; i < d->grid.size(); ++i) {
      csv.row({name, format_exact(d->grid[i]), format_exact(d->density[i]), format_exact(d->bandwidth)});
    }
  }
  return csv.str();
}

std::string refinement_csv(const RefinementResult& r) {
  CsvWriter csv({"iteration", "variant", "mutation", "generated", "emitted", "false_positives", "fp_ratio"});
  for (const auto& s : r.log) {
    csv.row({num(s.iteration), std::to_string(s.variant), s.mutation, num(s.generated), num(s.emitted),
             num(s.false_positives), format_rate(s.fp_ratio, 4)});
  }
  return csv.str();
}

// ------------------------------------------------------------------ corpus

int corpus_gen(const GlobalOptions& g) {
  Run run("corpus gen", g);
  run.begin({"corpus.jsonl", "split.csv"});
  const auto desk = prepare_desk(run.config(), {.classifier = false, .saliency = false});
  std::string corpus;
  for (const auto& r : desk.corpus.records()) corpus += to_jsonl(r) + "\n";
  run.write("corpus.jsonl", corpus);
  CsvWriter csv({"id", "split", "label"});
  for (const auto& [name, part] : {std::pair{"train", &desk.split.train}, std::pair{"val", &desk.split.val},
                                   std::pair{"test", &desk.split.test}}) {
    for (const auto& r : part->records()) csv.row({r.id, name, std::to_string(r.label)});
  }
  run.write("split.csv", csv.str());
  return 0;
}

int corpus_stats(const GlobalOptions& g) {
  Run run("corpus stats", g);
  run.begin({"corpus_stats.csv"});
  const auto desk = prepare_desk(run.config(), {.classifier = false, .saliency = false});
  CsvWriter csv({"metric", "value"});
  csv.row({"total", num(desk.corpus.size())});
  csv.row({"positive", num(desk.corpus.count(1))});
  csv.row({"negative", num(desk.corpus.count(0))});
  std::map<std::string, std::size_t> with_type;
  for (const auto& r : desk.corpus.records()) {
    std::set<std::string> types;
    for (const auto& e : r.entities) types.insert(to_string(e.type));
    for (const auto& t : types) ++with_type[t];
  }
  for (const auto& [t, n] : with_type) csv.row({"records_with_" + t, num(n)});
  csv.row({"train", num(desk.split.train.size())});
  csv.row({"val", num(desk.split.val.size())});
  csv.row({"test", num(desk.split.test.size())});
  run.write("corpus_stats.csv", csv.str());
  std::cout << desk.corpus.size() << " total / " << desk.corpus.count(1) << " positive\n";
  return 0;
}

// ------------------------------------------------------------------- train

int train_classifier_cmd(const GlobalOptions& g) {
  Run run("train classifier", g);
  run.begin({"classifier.json", "classifier_history.csv", "classifier_eval.csv"});
  const auto desk = prepare_desk(run.config(), {.classifier = true, .saliency = false});
  run.write("classifier.json", desk.model().to_json().dump() + "\n");
  run.write("classifier_history.csv", history_csv(desk.classifier->history));
  CsvWriter csv({"split", "tp", "fp", "tn", "fn", "precision", "recall", "f1"});
  add_eval_row(csv, "val", evaluate(desk.model(), desk.split.val));
  if (!desk.split.test.empty()) add_eval_row(csv, "test", evaluate(desk.model(), desk.split.test));
  run.write("classifier_eval.csv", csv.str());
  return 0;
}

int train_saliency_cmd(const GlobalOptions& g) {
  Run run("train saliency", g);
  run.begin({"saliency.json", "saliency_history.csv", "attention.jsonl"});
  const auto desk = prepare_desk(run.config(), {.classifier = false, .saliency = true});
  run.write("saliency.json", desk.saliency_model().to_json().dump() + "\n");
  run.write("saliency_history.csv", history_csv(desk.saliency->history));
  std::string profiles;
  for (const auto& r : held_out_sources(desk)) profiles += desk.saliency_model().attention_weights(r).to_json().dump() + "\n";
  run.write("attention.jsonl", profiles);
  return 0;
}

// ------------------------------------------------------------------ attack

int attack_evasion(const GlobalOptions& g) {
  Run run("attack evasion", g);
  run.begin({"evasion.csv", "refinement.csv", "fans.jsonl", "evasion_samples.jsonl"});
  const auto desk = prepare_desk(run.config());
  const auto backend = backend_for(run.config());
  run.log("generating FaNs with backend " + backend->name());
  const auto campaign =
      run_fan_campaign(desk, held_out_sources(desk), *backend, derive_seed(run.config().section_seed("attack"), "evasion"));
  const auto optimised = run_evasion(desk.model(), campaign.emitted());
  const auto baseline = run_evasion(desk.model(), campaign.baseline);

  CsvWriter csv({"method", "generator", "texts", "fp", "tn", "fpr"});
  csv.row({"optimised", backend->name(), num(optimised.n_fans), num(optimised.confusion.fp),
           num(optimised.confusion.tn), format_rate(optimised.fpr, 4)});
  csv.row({"random_replacement", "baseline", num(baseline.n_fans), num(baseline.confusion.fp),
           num(baseline.confusion.tn), format_rate(baseline.fpr, 4)});
  run.write("evasion.csv", csv.str());
  run.write("refinement.csv", refinement_csv(campaign.refinement));
  run.write("fans.jsonl", jsonl(campaign.fans, [](const FanRecord& f) { return f.lineage(); }));
  run.write("evasion_samples.jsonl", jsonl(optimised.samples, [](const EvasionSample& s) {
              return json{{"id", s.id}, {"source_id", s.source_id}, {"probability", s.probability},
                          {"false_positive", s.false_positive}};
            }));
  run.log("FPR " + format_rate(optimised.fpr, 4) + " vs baseline " + format_rate(baseline.fpr, 4));
  if (!campaign.refinement.reached) {
    std::cerr << "refinement stopped at FP ratio " << format_rate(campaign.refinement.best_ratio, 4) << " < theta "
              << run.config().generation.theta << '\n';
    return kExitThresholdNotReached;
  }
  return 0;
}

int attack_flood(const GlobalOptions& g) {
  Run run("attack flood", g);
  run.begin({"flooding.csv", "flooding_samples.jsonl", "telemetry.jsonl"});
  const auto desk = prepare_desk(run.config());
  const auto backend = backend_for(run.config());
  const auto campaign =
      run_fan_campaign(desk, held_out_sources(desk), *backend, derive_seed(run.config().section_seed("attack"), "evasion"));
  const auto sources = build_flood_sources(desk, campaign, *backend);
  run.log("rule-based FaP skipped " + num(sources.unsubstitutable) + " records without substitutable entities");
  const auto report =
      run_flooding(desk.model(), oracle_judge(campaign.oracle), flood_config(run.config()), sources.streams);

  CsvWriter csv({"stream", "volume", "tp", "fp", "tn", "fn", "fpr", "tpr"});
  for (const auto& s : report.streams) {
    const auto rates = compute_rates(s.confusion);
    csv.row({to_string(s.stream), num(s.volume), num(s.confusion.tp), num(s.confusion.fp), num(s.confusion.tn),
             num(s.confusion.fn), opt(rates.fpr), opt(rates.tpr)});
  }
  run.write("flooding.csv", csv.str());
  run.write("flooding_samples.jsonl", jsonl(report.samples, [](const FloodSample& s) { return s.to_json(); }));
  run.write("telemetry.jsonl", jsonl(report.telemetry, [](const TickTelemetry& t) { return t.to_json(); }));
  run.log("dashboard overflow " + num(report.overflow) + ", max depth " + num(report.max_queue_depth));
  return 0;
}

int attack_poison(const GlobalOptions& g) {
  Run run("attack poison", g);
  run.begin({"poisoning.csv", "poison_pool.jsonl"});
  const auto desk = prepare_desk(run.config());
  const auto backend = backend_for(run.config());
  const auto result = run_poison_experiment(desk, *backend);
  CsvWriter csv({"round", "FN", "FP", "recall", "precision", "f1", "injected", "cumulative"});
  for (const auto& r : result.rounds) {
    csv.row({num(r.round), num(r.confusion.fn), num(r.confusion.fp), opt(r.rates.recall), opt(r.rates.precision),
             opt_f1(r.rates.f1), num(r.injected), num(r.cumulative)});
  }
  run.write("poisoning.csv", csv.str());
  const auto pool = result.campaign.accepted_false_positives();
  run.write("poison_pool.jsonl", jsonl(pool, [](const TextRecord& r) { return json::parse(to_jsonl(r)); }));
  return 0;
}

// ----------------------------------------------------------------- metrics

int metrics_gradients(const GlobalOptions& g) {
  Run run("metrics gradients", g);
  run.begin({"gradients.csv", "gradient_density.csv"});
  const auto desk = prepare_desk(run.config());
  const auto backend = backend_for(run.config());
  const auto campaign =
      run_fan_campaign(desk, held_out_sources(desk), *backend, derive_seed(run.config().section_seed("attack"), "evasion"));
  const auto m = run_gradient_metrics(desk, campaign);
  CsvWriter csv({"metric", "fake", "real"});
  csv.row({"mean", format_exact(m.fake.mean), format_exact(m.real.mean)});
  csv.row({"variance", format_exact(m.fake.variance), format_exact(m.real.variance)});
  csv.row({"wasserstein_distance", "", format_exact(m.alignment.wasserstein)});
  csv.row({"kl_divergence", "", format_exact(m.alignment.kl_fake_to_real)});
  csv.row({"cosine_distance", "", format_exact(m.alignment.cosine_distance)});
  csv.row({"cosine_similarity", "", format_exact(m.alignment.cosine_similarity)});
  run.write("gradients.csv", csv.str());
  run.write("gradient_density.csv", density_csv({{"fake", &m.fake_density}, {"real", &m.real_density}}));
  return 0;
}

int metrics_similarity(const GlobalOptions& g) {
  Run run("metrics similarity", g);
  run.begin({"similarity.csv", "similarity_density.csv"});
  const auto desk = prepare_desk(run.config());
  const auto backend = backend_for(run.config());
  const auto campaign =
      run_fan_campaign(desk, held_out_sources(desk), *backend, derive_seed(run.config().section_seed("attack"), "evasion"));
  const auto report = similarity_distribution(campaign.emitted(), Corpus(campaign.sources), desk.model().vocabulary(),
                                              desk.model().embedding_table());
  CsvWriter csv({"id", "score"});
  for (const auto& e : report.entries) csv.row({e.id, format_exact(e.score)});
  run.write("similarity.csv", csv.str());
  const auto density = kde(report.scores(), run.config().metrics.bandwidth);
  run.write("similarity_density.csv", density_csv({{"fan_vs_source", &density}}));
  run.log("median similarity " + format_rate(report.quantile(0.5), 4));
  return 0;
}

// ---------------------------------------------------------------- pipeline

int pipeline_run(const GlobalOptions& g) {
  Run run("pipeline run", g);
  run.begin({"telemetry.jsonl", "pipeline_summary.csv"});
  const auto desk = prepare_desk(run.config(), {.classifier = true, .saliency = false});
  const auto& model = desk.model();
  // analyst stand-in without an attack: accept exactly the genuine positives
  const AlertJudge judge = [](const Alert& a) { return a.record.label == 1; };
  Pipeline pipeline([&](const TextRecord& r) { return model.predict(r).probability; }, judge,
                    run.config().pipeline.config);
  const auto& records = desk.split.test.empty() ? desk.split.val.records() : desk.split.test.records();
  const std::size_t per_tick = run.config().pipeline.arrivals_per_tick;
  for (std::size_t start = 0; start < records.size(); start += per_tick) {
    const auto end = std::min(records.size(), start + per_tick);
    pipeline.step(std::vector<TextRecord>(records.begin() + static_cast<std::ptrdiff_t>(start),
                                          records.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  while (pipeline.queue_depth() > 0) pipeline.step({});
  run.write("telemetry.jsonl", jsonl(pipeline.telemetry(), [](const TickTelemetry& t) { return t.to_json(); }));
  const auto feedback = pipeline.feedback_flush();
  CsvWriter csv({"metric", "value"});
  csv.row({"arrived", num(records.size())});
  csv.row({"positives", num(pipeline.total_positives())});
  csv.row({"dropped", num(pipeline.total_dropped())});
  csv.row({"processed", num(pipeline.total_processed())});
  csv.row({"feedback", num(feedback.size())});
  csv.row({"ticks", num(pipeline.tick())});
  csv.row({"conserved", pipeline.conserved() ? "true" : "false"});
  run.write("pipeline_summary.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial attack harness for CTI relevance classifiers"};
  app.require_subcommand(1);
  GlobalOptions g;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", g.seed, "global seed (section seeds are derived from it)");
    cmd->add_option("--out", g.out, "output directory");
    cmd->add_option("--backend", g.backend, "generation backend")->check(CLI::IsMember({"remote", "fallback"}));
    cmd->add_flag("--quiet", g.quiet, "no progress output");
  };

  using Handler = int (*)(const GlobalOptions&);
  const std::map<std::string, std::string> group_help{
      {"corpus", "Generate or summarise the labelled corpus"},
      {"train", "Train the relevance classifier or the saliency model"},
      {"attack", "Evasion, flooding and poisoning experiments"},
      {"metrics", "Gradient and embedding similarity analysis"},
      {"pipeline", "Replay the test split through the alert pipeline"},
  };
  const std::vector<std::tuple<std::string, std::string, std::string, Handler>> commands{
      {"corpus", "gen", "Write corpus.jsonl and split.csv", corpus_gen},
      {"corpus", "stats", "Label, entity and split counts", corpus_stats},
      {"train", "classifier", "Train and evaluate the CNN classifier", train_classifier_cmd},
      {"train", "saliency", "Train the attention model and dump weights", train_saliency_cmd},
      {"attack", "evasion", "FaN generation with prompt refinement", attack_evasion},
      {"attack", "flood", "Mixed FaN/FaP stream through the pipeline", attack_flood},
      {"attack", "poison", "Retrain with accepted FaNs over several rounds", attack_poison},
      {"metrics", "gradients", "Input-gradient statistics, real vs fake", metrics_gradients},
      {"metrics", "similarity", "Embedding cosine similarity of FaNs to sources", metrics_similarity},
      {"pipeline", "run", "Threat scoring and validation on the test split", pipeline_run},
  };
  std::map<std::string, CLI::App*> groups;
  Handler selected = nullptr;
  for (const auto& [group, action, help, handler] : commands) {
    auto*& parent = groups[group];
    if (parent == nullptr) {
      parent = app.add_subcommand(group, group_help.at(group));
      parent->require_subcommand(1);
    }
    auto* cmd = parent->add_subcommand(action, help);
    add_globals(cmd);
    cmd->callback([&selected, h = handler] { selected = h; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return selected(g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
}
