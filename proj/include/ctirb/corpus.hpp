#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ctirb/common.hpp"

namespace ctirb {

enum class EntityType { organization, product, vulnerability, version };
enum class Provenance { real, fake_machine, fake_human };

std::string to_string(EntityType type);
std::string to_string(Provenance provenance);
EntityType parse_entity_type(std::string_view text);
Provenance parse_provenance(std::string_view text);

inline constexpr std::string_view kDefaultGroup = "default";

struct EntitySpan {
  std::size_t start = 0;  // token index
  std::size_t end = 0;    // exclusive
  std::string surface;
  EntityType type = EntityType::product;
  std::string group{kDefaultGroup};

  bool operator==(const EntitySpan&) const = default;
};

struct TextRecord {
  std::string id;
  std::string raw_text;
  std::string clean_text;
  int label = 0;
  std::vector<EntitySpan> entities;
  Provenance provenance = Provenance::real;
  std::string source;
  std::size_t max_len = 256;

  std::vector<std::string> tokens() const;
  bool operator==(const TextRecord&) const = default;
};

/// Throws ValidationError describing the first broken invariant.
void validate_record(const TextRecord& record);

using LexiconKey = std::pair<EntityType, std::string>;
using Lexicons = std::map<LexiconKey, std::set<std::string>>;

Lexicons build_entity_lexicons(const std::vector<TextRecord>& records);

/// Immutable collection of validated records with a label index and the
/// entity lexicons observed in it.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<TextRecord> records);

  const std::vector<TextRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::map<int, std::vector<std::string>>& label_index() const { return label_index_; }
  const Lexicons& lexicons() const { return lexicons_; }
  std::size_t count(int label) const;
  const TextRecord* find(std::string_view id) const;

  /// Records whose label equals `label`, as a new corpus.
  Corpus filter_label(int label) const;

 private:
  std::vector<TextRecord> records_;
  std::map<int, std::vector<std::string>> label_index_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  Lexicons lexicons_;
};

enum class CorpusFormat { jsonl, csv };

CorpusFormat parse_corpus_format(std::string_view text);

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus parse_jsonl_corpus(std::string_view content);
Corpus parse_csv_corpus(std::string_view content);

std::string to_jsonl(const TextRecord& record);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

/// Stratified split. Per-label counts are rounded independently so every
/// split keeps the whole-corpus label proportions.
CorpusSplit split(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

struct EntityCatalog {
  std::vector<std::string> organizations;
  std::vector<std::string> products;
  std::vector<std::string> versions;
  std::map<std::string, std::vector<std::string>> vulnerabilities;  // group -> surfaces
};

struct SyntheticCorpusSpec {
  std::size_t n_records = 2000;
  double positive_fraction = 0.5;
  std::set<std::string> security_lexicon;
  std::map<std::string, std::set<std::string>> distractor_lexicons;
  double entity_density = 2.5;
  std::uint64_t seed = 1;
  EntityCatalog entities;
  std::vector<std::string> fillers;
  /// Probability that a negative mentions a vendor/product name as plain context.
  double negative_vendor_rate = 0.35;

  /// Spec populated from the bundled tables.
  static SyntheticCorpusSpec defaults();
  void validate() const;
};

/// Largest number of annotated entities a synthetic positive can carry.
inline constexpr double kMaxSyntheticEntities = 5.0;

/// Builds a labeled corpus where label 1 holds exactly when a record contains
/// a security-lexicon token. Deterministic per spec.
Corpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

}  // namespace ctirb
