#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctirb/corpus.hpp"
#include "ctirb/saliency.hpp"
#include "ctirb/tables.hpp"

namespace ctirb {

// ------------------------------------------------------------------ prompts

enum class Constraint { avoid_security, preserve_structure, term_diversity, emphasize_key_terms };

std::string to_string(Constraint c);
Constraint parse_constraint(std::string_view text);

/// Everything about a FaN prompt except the per-record key tokens.
struct PromptTemplate {
  std::string intro = "The following message was posted on a security news feed.";
  std::vector<Constraint> constraints{Constraint::avoid_security, Constraint::preserve_structure,
                                      Constraint::term_diversity};
  std::vector<std::string> replacement_domains{"software performance", "system upgrades", "general IT issues"};
  int variant = 0;
  /// 1 = default wording; 2+ = strengthened "keep the sentence shape" directive.
  int structure_strength = 1;

  bool has(Constraint c) const;
  void validate() const;
  nlohmann::json to_json() const;
};

struct PromptSpec {
  PromptTemplate base;
  std::vector<std::string> key_tokens;

  void validate() const;
};

/// Key tokens are the profile's top-k surfaces.
PromptSpec make_prompt_spec(const PromptTemplate& base, const AttentionProfile& profile);

std::string build_fan_prompt(const TextRecord& record, const AttentionProfile& profile, const PromptSpec& spec);

/// One step of the refinement mutation library, applied cumulatively.
struct Mutation {
  std::string name;
  std::function<void(PromptTemplate&)> apply;
};

const std::vector<Mutation>& mutation_library();

// ----------------------------------------------------------------- backends

enum class BackendKind { remote_chat, template_fallback };

struct FanRequest {
  const TextRecord& record;
  const AttentionProfile& profile;
  const PromptSpec& spec;
  const std::string& prompt;
  std::uint64_t seed;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string name() const = 0;
  virtual BackendKind kind() const = 0;
  bool deterministic() const { return kind() == BackendKind::template_fallback; }

  /// Rewritten text for one FaN request.
  virtual std::string rewrite(const FanRequest& request) const = 0;
  /// Up to n candidate paraphrases, best first. May contain duplicates.
  virtual std::vector<std::string> paraphrase(const TextRecord& record, std::size_t n, std::uint64_t seed) const = 0;
};

using SubstitutionDictionary = std::map<std::string, std::vector<tables::Replacement>>;
using SynonymTable = std::map<std::string, std::vector<std::string>>;

/// Offline, deterministic engine driven by word tables.
///
/// FaN rewrite: key-token positions are copied; every other token whose
/// lowercase form is in the dictionary is replaced by one of its candidates
/// from the prompt's domains, and all other tokens are copied. With the
/// diversity directive the choice varies per position, otherwise per word.
/// Paraphrases come from the synonym table plus six clause templates.
class TemplateBackend final : public GenerationBackend {
 public:
  TemplateBackend();
  TemplateBackend(SubstitutionDictionary dictionary, SynonymTable synonyms);

  std::string name() const override { return "template"; }
  BackendKind kind() const override { return BackendKind::template_fallback; }
  std::string rewrite(const FanRequest& request) const override;
  std::vector<std::string> paraphrase(const TextRecord& record, std::size_t n, std::uint64_t seed) const override;

  std::vector<std::string> rewrite_tokens(const std::vector<std::string>& tokens, const std::vector<std::size_t>& keep,
                                          const PromptTemplate& prompt, std::string_view record_id,
                                          std::uint64_t seed) const;
  const SubstitutionDictionary& dictionary() const { return dictionary_; }
  const SynonymTable& synonyms() const { return synonyms_; }

 private:
  SubstitutionDictionary dictionary_;
  SynonymTable synonyms_;
};

// ---------------------------------------------------------------- FaN / FaP

enum class FanFlag { no_op, missing_key_token, too_long };
std::string to_string(FanFlag flag);

struct FanRecord {
  std::string id;
  std::string text;
  std::string source_id;
  std::vector<std::string> key_tokens;
  std::string backend;
  int prompt_variant = 0;
  std::optional<bool> classified_positive;  // FP when true, TN when false
  std::optional<bool> oracle_accepted;
  std::vector<FanFlag> flags;

  bool emitted() const { return flags.empty(); }
  /// Corpus-schema record with fake_machine provenance.
  TextRecord to_record(int label) const;
  nlohmann::json lineage() const;
};

FanRecord generate_fan(const TextRecord& record, const AttentionProfile& profile, const PromptSpec& spec,
                       const GenerationBackend& backend, std::uint64_t seed);

/// Generates one FaN per record with at most `concurrency` requests in
/// flight. Results are sorted by source id.
std::vector<FanRecord> generate_fan_batch(const std::vector<TextRecord>& records,
                                          const std::vector<AttentionProfile>& profiles, const PromptTemplate& base,
                                          const GenerationBackend& backend, std::uint64_t seed,
                                          std::size_t concurrency = 4);

/// Baseline: keep k random positions and replace every other token with a
/// random word from the replacement domains.
FanRecord random_replacement_fan(const TextRecord& record, std::size_t k, const std::vector<std::string>& domains,
                                 std::uint64_t seed);

enum class FapMethod { paraphrase, rule_based };
std::string to_string(FapMethod method);

struct Substitution {
  std::size_t start = 0;  // token span in the source record
  std::size_t end = 0;
  std::string old_surface;
  std::string new_surface;
  EntityType type = EntityType::product;
  std::string group;
};

struct FapRecord {
  std::string id;
  std::string text;
  std::string source_id;
  FapMethod method = FapMethod::paraphrase;
  std::vector<Substitution> substitutions;
  std::vector<EntitySpan> entities;  // spans in the output text
  std::vector<std::string> unsubstitutable;

  TextRecord to_record() const;
  nlohmann::json lineage() const;
};

struct ParaphraseResult {
  std::vector<FapRecord> variants;
  /// Set when fewer than the requested number of distinct variants exist.
  bool short_of_target = false;
};

ParaphraseResult paraphrase_fap(const TextRecord& record, const GenerationBackend& backend, std::size_t n = 10,
                                std::uint64_t seed = 0);

/// Replaces every replaceable entity with a uniform draw from its
/// (type, group) lexicon, excluding its own surface.
FapRecord rulebased_fap(const TextRecord& record, const Lexicons& lexicons, std::uint64_t seed);

// ------------------------------------------------------------------- oracle

/// Scripted stand-in for the analyst who rejects FaNs that do not read like
/// security content. score = (sum of style weights + pattern_weight * pattern
/// hits) / token count, capped at 1.
class ValidationOracle {
 public:
  static constexpr double kDefaultTargetRejection = 1340.0 / 11074.0;

  ValidationOracle();
  ValidationOracle(std::map<std::string, double> weights, double pattern_weight, double threshold,
                   double target_rejection = kDefaultTargetRejection);

  double score(std::string_view text) const;
  std::size_t pattern_hits(std::string_view text) const;
  bool accepts(std::string_view text) const { return score(text) >= threshold_; }

  /// Chooses the threshold whose rejection rate on `reference` is closest to
  /// the target. Thresholds are midpoints between adjacent distinct scores.
  void calibrate(const std::vector<std::string>& reference);
  double rejection_rate(const std::vector<std::string>& texts) const;

  double threshold() const { return threshold_; }
  double target_rejection() const { return target_; }
  bool calibrated() const { return calibrated_; }
  void set_threshold(double threshold);

 private:
  std::map<std::string, double> weights_;
  double pattern_weight_ = 1.0;
  double threshold_ = 0.0;
  double target_ = kDefaultTargetRejection;
  bool calibrated_ = false;
  std::vector<std::regex> patterns_;
};

/// Records the oracle verdict on the FaN. Requires a calibrated oracle.
bool validate_fan(FanRecord& fan, const ValidationOracle& oracle);

// --------------------------------------------------------------- refinement

using PositiveClassifier = std::function<bool(const TextRecord&)>;

struct RefinementStep {
  std::size_t iteration = 0;  // from 1
  int variant = 0;
  std::string mutation;       // "initial" for the first iteration
  std::size_t generated = 0;
  std::size_t emitted = 0;
  std::size_t false_positives = 0;
  double fp_ratio = 0.0;
};

struct RefinementResult {
  PromptTemplate best;
  double best_ratio = 0.0;
  bool reached = false;
  std::vector<RefinementStep> log;
  std::vector<FanRecord> best_batch;
};

/// Tries the initial prompt, then cumulative mutations, stopping at the first
/// variant whose emitted FaNs are classified positive at a rate >= theta.
RefinementResult refine_prompt_loop(const std::vector<TextRecord>& positives,
                                    const std::vector<AttentionProfile>& profiles, const PositiveClassifier& classify,
                                    const GenerationBackend& backend, double theta = 0.8, std::size_t max_iters = 5,
                                    std::uint64_t seed = 0, PromptTemplate initial = {});

}  // namespace ctirb
