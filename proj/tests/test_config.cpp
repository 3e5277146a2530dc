#include <doctest.h>

#include <filesystem>

#include "ctirb/config.hpp"
#include "ctirb/report.hpp"

using namespace ctirb;
using nlohmann::json;

namespace {

json empty_sections() {
  json doc = json::object();
  for (const auto& s : RunConfig::section_names()) doc[s] = json::object();
  return doc;
}

}  // namespace

TEST_CASE("empty sections give the defaults") {
  const auto cfg = RunConfig::from_json(empty_sections());
  CHECK(cfg.seed == 7);
  CHECK(cfg.corpus.synthetic_records == 2000);
  CHECK(cfg.model.train.epochs == 10);
  CHECK(cfg.generation.theta == 0.8);
  CHECK(cfg.attack.schedule == ScheduleKind::scaled);
  RunConfig plain;
  plain.apply_seeds();
  CHECK(plain.to_json() == cfg.to_json());
}

TEST_CASE("section seeds are derived from the global seed") {
  auto doc = empty_sections();
  doc["seed"] = 11;
  const auto cfg = RunConfig::from_json(doc);
  CHECK(cfg.section_seed("model") == (11 ^ stable_hash("model")));
  CHECK(cfg.model.train.seed == cfg.section_seed("model"));
  CHECK(cfg.saliency.train.seed == cfg.section_seed("saliency"));
  CHECK(cfg.pipeline.config.seed == cfg.section_seed("pipeline"));
  CHECK(cfg.section_seed("model") != cfg.section_seed("saliency"));
}

TEST_CASE("strict keys and required sections") {
  auto doc = empty_sections();
  doc["model"]["epochz"] = 3;
  CHECK_THROWS_WITH_AS(RunConfig::from_json(doc), "unknown config key 'model.epochz'", ValidationError);

  doc = empty_sections();
  doc.erase("metrics");
  CHECK_THROWS_WITH_AS(RunConfig::from_json(doc), "missing config section 'metrics'", ValidationError);

  doc = empty_sections();
  doc["attack"]["poison_rounds"] = -2;
  CHECK_THROWS_AS(RunConfig::from_json(doc), ValidationError);

  doc = empty_sections();
  doc["generation"]["theta"] = 1.5;
  CHECK_THROWS_AS(RunConfig::from_json(doc), ValidationError);
}

TEST_CASE("serialised config reads back identically") {
  auto doc = empty_sections();
  doc["seed"] = 3;
  doc["corpus"]["synthetic_records"] = 123;
  doc["attack"]["poison_schedule"] = json::array({5, 6, 7});
  doc["metrics"]["bandwidth"] = 0.25;
  doc["pipeline"]["capacity"] = 40;
  const auto first = RunConfig::from_json(doc);
  const auto second = RunConfig::from_json(first.to_json());
  CHECK(first.to_json() == second.to_json());
  CHECK(second.attack.counts == std::vector<std::size_t>{5, 6, 7});
  CHECK(second.pipeline.config.capacity == 40);
  CHECK(second.metrics.bandwidth == 0.25);
}

TEST_CASE("relative corpus paths resolve against the config file") {
  const auto dir = std::filesystem::temp_directory_path() / "ctirb_config_test";
  std::filesystem::create_directories(dir);
  auto doc = empty_sections();
  doc["corpus"]["path"] = "data/corpus.jsonl";
  write_file_atomic(dir / "run.json", doc.dump());
  const auto cfg = RunConfig::load(dir / "run.json");
  CHECK(*cfg.corpus.path == dir / "data/corpus.jsonl");
  write_file_atomic(dir / "bad.json", "{");
  CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), ValidationError);
  std::filesystem::remove_all(dir);
}
