#include "ctirb/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include <json.hpp>

#include "ctirb/report.hpp"
#include "ctirb/tables.hpp"
#include "ctirb/tokenize.hpp"

namespace ctirb {

using json = nlohmann::json;

std::string to_string(EntityType type) {
  switch (type) {
    case EntityType::organization: return "organization";
    case EntityType::product: return "product";
    case EntityType::vulnerability: return "vulnerability";
    case EntityType::version: return "version";
  }
  return "unknown";
}

std::string to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::real: return "real";
    case Provenance::fake_machine: return "fake_machine";
    case Provenance::fake_human: return "fake_human";
  }
  return "unknown";
}

EntityType parse_entity_type(std::string_view text) {
  if (text == "organization") return EntityType::organization;
  if (text == "product") return EntityType::product;
  if (text == "vulnerability") return EntityType::vulnerability;
  if (text == "version") return EntityType::version;
  throw ValidationError("unknown entity_type '" + std::string(text) + "'");
}

Provenance parse_provenance(std::string_view text) {
  if (text == "real") return Provenance::real;
  if (text == "fake_machine") return Provenance::fake_machine;
  if (text == "fake_human") return Provenance::fake_human;
  throw ValidationError("unknown provenance '" + std::string(text) + "'");
}

std::vector<std::string> TextRecord::tokens() const { return tokenize(clean_text); }

void validate_record(const TextRecord& record) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("record '" + record.id + "': " + what);
  };
  if (record.id.empty()) throw ValidationError("record with empty id");
  if (record.clean_text.empty()) fail("clean_text is empty");
  if (record.label != 0 && record.label != 1) fail("invalid label " + std::to_string(record.label));
  if (record.clean_text.size() > record.max_len) {
    fail("clean_text longer than " + std::to_string(record.max_len) + " characters");
  }
  if (record.entities.empty()) return;

  const auto tokens = record.tokens();
  std::vector<const EntitySpan*> spans;
  for (const auto& span : record.entities) {
    if (span.start >= span.end || span.end > tokens.size()) fail("span out of range");
    if (join_tokens(tokens, span.start, span.end) != span.surface) {
      fail("span surface '" + span.surface + "' does not match its tokens");
    }
    if (span.group.empty()) fail("span with empty group");
    spans.push_back(&span);
  }
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan* a, const EntitySpan* b) { return a->start < b->start; });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i]->start < spans[i - 1]->end) fail("overlapping entity spans");
  }
}

Lexicons build_entity_lexicons(const std::vector<TextRecord>& records) {
  Lexicons lexicons;
  for (const auto& record : records) {
    for (const auto& span : record.entities) {
      lexicons[{span.type, span.group}].insert(span.surface);
    }
  }
  return lexicons;
}

Corpus::Corpus(std::vector<TextRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& record = records_[i];
    validate_record(record);
    if (!by_id_.emplace(record.id, i).second) {
      throw ValidationError("duplicate id '" + record.id + "'");
    }
    label_index_[record.label].push_back(record.id);
  }
  lexicons_ = build_entity_lexicons(records_);
}

std::size_t Corpus::count(int label) const {
  const auto it = label_index_.find(label);
  return it == label_index_.end() ? 0 : it->second.size();
}

const TextRecord* Corpus::find(std::string_view id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

Corpus Corpus::filter_label(int label) const {
  std::vector<TextRecord> out;
  for (const auto& record : records_) {
    if (record.label == label) out.push_back(record);
  }
  return Corpus(std::move(out));
}

CorpusFormat parse_corpus_format(std::string_view text) {
  if (text == "jsonl") return CorpusFormat::jsonl;
  if (text == "csv") return CorpusFormat::csv;
  throw ValidationError("unknown corpus format '" + std::string(text) + "'");
}

namespace {

TextRecord record_from_json(const json& row) {
  TextRecord record;
  record.id = row.at("id").get<std::string>();
  record.clean_text = row.at("clean_text").get<std::string>();
  record.raw_text = row.value("raw_text", record.clean_text);
  const auto& label = row.at("relevant");
  record.label = label.is_boolean() ? static_cast<int>(label.get<bool>()) : label.get<int>();
  record.provenance = parse_provenance(row.value("provenance", std::string("real")));
  record.source = row.value("source", std::string());
  if (const auto it = row.find("entities"); it != row.end() && !it->is_null()) {
    for (const auto& e : *it) {
      EntitySpan span;
      span.start = e.at("start").get<std::size_t>();
      span.end = e.at("end").get<std::size_t>();
      span.surface = e.at("surface").get<std::string>();
      span.type = parse_entity_type(e.at("type").get<std::string>());
      span.group = e.value("group", std::string(kDefaultGroup));
      record.entities.push_back(std::move(span));
    }
  }
  return record;
}

// RFC 4180 style rows; quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Corpus parse_jsonl_corpus(std::string_view content) {
  std::vector<TextRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const auto next = content.find('\n', pos);
    const auto line = content.substr(pos, next == std::string_view::npos ? content.size() - pos : next - pos);
    ++line_no;
    pos = next == std::string_view::npos ? content.size() + 1 : next + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      auto record = record_from_json(json::parse(line));
      validate_record(record);
      records.push_back(std::move(record));
    } catch (const std::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return Corpus(std::move(records));
}

Corpus parse_csv_corpus(std::string_view content) {
  const auto rows = parse_csv_rows(content);
  if (rows.empty()) return Corpus();
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("CSV header lacks column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column("id");
  const std::size_t text_col = column("clean_tweet");
  const std::size_t label_col = column("relevant");

  std::vector<TextRecord> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto line = "row " + std::to_string(r + 1) + ": ";
    if (row.size() <= std::max({id_col, text_col, label_col})) {
      throw ValidationError(line + "too few columns");
    }
    TextRecord record;
    record.id = row[id_col];
    record.clean_text = row[text_col];
    record.raw_text = record.clean_text;
    const auto& label = row[label_col];
    if (label == "0" || label == "0.0") {
      record.label = 0;
    } else if (label == "1" || label == "1.0") {
      record.label = 1;
    } else {
      throw ValidationError(line + "invalid label '" + label + "'");
    }
    try {
      validate_record(record);
    } catch (const ValidationError& e) {
      throw ValidationError(line + e.what());
    }
    records.push_back(std::move(record));
  }
  return Corpus(std::move(records));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  const auto content = read_text_file(path);
  return format == CorpusFormat::jsonl ? parse_jsonl_corpus(content) : parse_csv_corpus(content);
}

std::string to_jsonl(const TextRecord& record) {
  json entities = json::array();
  for (const auto& span : record.entities) {
    entities.push_back({{"start", span.start},
                        {"end", span.end},
                        {"surface", span.surface},
                        {"type", to_string(span.type)},
                        {"group", span.group}});
  }
  const json row = {{"id", record.id},
                    {"raw_text", record.raw_text},
                    {"clean_text", record.clean_text},
                    {"relevant", record.label},
                    {"entities", std::move(entities)},
                    {"provenance", to_string(record.provenance)},
                    {"source", record.source}};
  return row.dump();
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string content;
  for (const auto& record : corpus.records()) {
    content += to_jsonl(record);
    content.push_back('\n');
  }
  write_file_atomic(path, content);
}

CorpusSplit split(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed) {
  const double sum = fractions.train + fractions.val + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("fractions must sum to 1");
  if (fractions.train <= 0.0 || fractions.val < 0.0 || fractions.test < 0.0) {
    throw ValidationError("fractions must be non-negative with a positive train share");
  }

  std::vector<TextRecord> train;
  std::vector<TextRecord> val;
  std::vector<TextRecord> test;
  Rng rng(derive_seed(seed, "split"));
  for (const auto& [label, ids] : corpus.label_index()) {
    std::vector<std::string> order = ids;
    rng.shuffle(order);
    const auto n = order.size();
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
    n_val = std::min(n_val, n - std::min(n, n_train));
    if (n_train == 0) {
      throw ValidationError("split would leave an empty class in train (label " + std::to_string(label) + ")");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& record = *corpus.find(order[i]);
      if (i < n_train) {
        train.push_back(record);
      } else if (i < n_train + n_val) {
        val.push_back(record);
      } else {
        test.push_back(record);
      }
    }
  }
  // keep the original corpus order inside each split
  auto by_position = [&](std::vector<TextRecord>& part) {
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < corpus.records().size(); ++i) position[corpus.records()[i].id] = i;
    std::sort(part.begin(), part.end(), [&](const TextRecord& a, const TextRecord& b) {
      return position[a.id] < position[b.id];
    });
  };
  by_position(train);
  by_position(val);
  by_position(test);
  return {Corpus(std::move(train)), Corpus(std::move(val)), Corpus(std::move(test))};
}

SyntheticCorpusSpec SyntheticCorpusSpec::defaults() {
  SyntheticCorpusSpec spec;
  spec.security_lexicon = tables::security_lexicon();
  spec.distractor_lexicons = tables::distractor_lexicons();
  spec.entities = tables::entity_catalog();
  spec.fillers = tables::fillers();
  return spec;
}

void SyntheticCorpusSpec::validate() const {
  if (n_records == 0) throw ValidationError("n_records must be positive");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ValidationError("positive_fraction must lie strictly between 0 and 1");
  }
  if (security_lexicon.empty()) throw ValidationError("security_lexicon is empty");
  if (distractor_lexicons.empty()) throw ValidationError("distractor_lexicons is empty");
  for (const auto& [domain, words] : distractor_lexicons) {
    if (words.empty()) throw ValidationError("distractor lexicon '" + domain + "' is empty");
    for (const auto& word : words) {
      if (security_lexicon.count(word) != 0) {
        throw ValidationError("lexicons are not disjoint: '" + word + "' is in security and " + domain);
      }
    }
  }
  for (const auto& word : fillers) {
    if (security_lexicon.count(word) != 0) {
      throw ValidationError("filler '" + word + "' is a security-lexicon token");
    }
  }
  if (entity_density < 0.0 || entity_density > kMaxSyntheticEntities) {
    throw ValidationError("entity_density must lie in [0, " + std::to_string(kMaxSyntheticEntities) + "]");
  }
  if (entity_density > 0.0) {
    bool have_vulnerability = false;
    for (const auto& [group, words] : entities.vulnerabilities) {
      have_vulnerability = have_vulnerability || !words.empty();
    }
    if (entities.products.empty() || entities.organizations.empty() || entities.versions.empty() ||
        !have_vulnerability) {
      throw ValidationError("entity lexicons too small to meet entity_density");
    }
  }
}

namespace {

struct Draft {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> entities;
};

// A phrase is either a plain token or an annotated entity.
struct Phrase {
  std::string surface;
  std::optional<std::pair<EntityType, std::string>> entity;
};

template <typename Container>
const std::string& pick(Rng& rng, const Container& items) {
  auto it = items.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(rng.index(items.size())));
  return *it;
}

Draft assemble(Rng& rng, std::vector<Phrase> phrases, const std::vector<std::string>& fillers,
               std::size_t target_len) {
  // fillers go between phrases at random slots until the target length
  std::vector<std::vector<std::string>> gaps(phrases.size() + 1);
  std::size_t length = phrases.size();
  while (length < target_len && !fillers.empty()) {
    gaps[rng.index(gaps.size())].push_back(pick(rng, fillers));
    ++length;
  }
  Draft draft;
  for (std::size_t i = 0; i <= phrases.size(); ++i) {
    for (auto& f : gaps[i]) draft.tokens.push_back(std::move(f));
    if (i == phrases.size()) break;
    auto& phrase = phrases[i];
    const auto start = draft.tokens.size();
    draft.tokens.push_back(phrase.surface);
    if (phrase.entity) {
      draft.entities.push_back(
          {start, start + 1, phrase.surface, phrase.entity->first, phrase.entity->second});
    }
  }
  return draft;
}

Draft positive_draft(Rng& rng, const SyntheticCorpusSpec& spec,
                     const std::vector<std::string>& generic_security) {
  const auto& catalog = spec.entities;
  std::vector<Phrase> phrases;

  std::size_t n_entities = static_cast<std::size_t>(spec.entity_density);
  if (rng.bernoulli(spec.entity_density - std::floor(spec.entity_density))) ++n_entities;

  std::vector<std::string> vuln_groups;
  for (const auto& [group, words] : catalog.vulnerabilities) {
    if (!words.empty()) vuln_groups.push_back(group);
  }
  // entity kinds in priority order; the first n_entities are used
  std::vector<int> kinds = {0, 1, 2, 3, 1};
  std::size_t n_vulnerabilities = 0;
  for (std::size_t k = 0; k < n_entities && k < kinds.size(); ++k) {
    switch (kinds[k]) {
      case 0:
        phrases.push_back({pick(rng, catalog.products), std::pair{EntityType::product, std::string(kDefaultGroup)}});
        break;
      case 1: {
        const auto& group = pick(rng, vuln_groups);
        phrases.push_back({pick(rng, catalog.vulnerabilities.at(group)), std::pair{EntityType::vulnerability, group}});
        ++n_vulnerabilities;
        break;
      }
      case 2:
        phrases.insert(phrases.begin(),
                       Phrase{pick(rng, catalog.organizations), std::pair{EntityType::organization, std::string(kDefaultGroup)}});
        break;
      case 3:
        phrases.push_back({pick(rng, catalog.versions), std::pair{EntityType::version, std::string(kDefaultGroup)}});
        break;
      default: break;
    }
  }

  // 3..5 threat words in total, at least one generic
  const std::size_t threat_total = 3 + rng.index(3);
  const std::size_t generic = std::max<std::size_t>(1, threat_total - std::min(threat_total, n_vulnerabilities));
  for (std::size_t i = 0; i < generic; ++i) phrases.push_back({pick(rng, generic_security), std::nullopt});

  // product/version stay adjacent in the original order; everything else is shuffled
  std::vector<Phrase> anchored;
  std::vector<Phrase> loose;
  for (auto& p : phrases) {
    const bool anchor = p.entity && (p.entity->first == EntityType::product ||
                                     p.entity->first == EntityType::version ||
                                     p.entity->first == EntityType::organization);
    (anchor ? anchored : loose).push_back(std::move(p));
  }
  rng.shuffle(loose);
  const auto insert_at = loose.empty() ? 0 : rng.index(loose.size() + 1);
  loose.insert(loose.begin() + static_cast<std::ptrdiff_t>(insert_at),
               std::make_move_iterator(anchored.begin()), std::make_move_iterator(anchored.end()));

  const std::size_t target = 12 + rng.index(7);
  return assemble(rng, std::move(loose), spec.fillers, target);
}

Draft negative_draft(Rng& rng, const SyntheticCorpusSpec& spec,
                     const std::vector<std::string>& domains) {
  std::vector<Phrase> phrases;
  const auto& primary = spec.distractor_lexicons.at(pick(rng, domains));
  const std::size_t topical = 3 + rng.index(3);
  for (std::size_t i = 0; i < topical; ++i) phrases.push_back({pick(rng, primary), std::nullopt});
  if (rng.bernoulli(0.4)) {
    const auto& secondary = spec.distractor_lexicons.at(pick(rng, domains));
    phrases.push_back({pick(rng, secondary), std::nullopt});
  }
  if (rng.bernoulli(spec.negative_vendor_rate)) {
    // vendor names are ordinary context in non-security text and stay unannotated
    const auto& catalog = spec.entities;
    if (!catalog.organizations.empty() && rng.bernoulli(0.5)) phrases.push_back({pick(rng, catalog.organizations), std::nullopt});
    if (!catalog.products.empty()) phrases.push_back({pick(rng, catalog.products), std::nullopt});
    if (!catalog.versions.empty() && rng.bernoulli(0.4)) phrases.push_back({pick(rng, catalog.versions), std::nullopt});
  }
  rng.shuffle(phrases);
  const std::size_t target = 10 + rng.index(8);
  return assemble(rng, std::move(phrases), spec.fillers, target);
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synthetic-corpus"));

  std::set<std::string> entity_surfaces;
  for (const auto& [group, words] : spec.entities.vulnerabilities) {
    entity_surfaces.insert(words.begin(), words.end());
  }
  std::vector<std::string> generic_security;
  for (const auto& word : spec.security_lexicon) {
    if (entity_surfaces.count(word) == 0) generic_security.push_back(word);
  }
  if (generic_security.empty()) generic_security.assign(spec.security_lexicon.begin(), spec.security_lexicon.end());

  std::vector<std::string> domains;
  for (const auto& [domain, words] : spec.distractor_lexicons) domains.push_back(domain);

  const auto n_pos = static_cast<std::size_t>(
      std::llround(spec.positive_fraction * static_cast<double>(spec.n_records)));
  std::vector<int> labels(spec.n_records, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  rng.shuffle(labels);

  std::vector<TextRecord> records;
  records.reserve(spec.n_records);
  for (std::size_t i = 0; i < spec.n_records; ++i) {
    TextRecord record;
    Draft draft = labels[i] == 1 ? positive_draft(rng, spec, generic_security)
                                 : negative_draft(rng, spec, domains);
    // keep texts inside the length budget by dropping trailing fillers
    while (join_tokens(draft.tokens).size() > record.max_len) {
      const auto last_entity_end = draft.entities.empty() ? 0 : draft.entities.back().end;
      if (draft.tokens.size() <= last_entity_end) break;
      draft.tokens.pop_back();
    }
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", i);
    record.id = id;
    record.clean_text = join_tokens(draft.tokens);
    record.raw_text = record.clean_text;
    record.label = labels[i];
    record.entities = std::move(draft.entities);
    record.source = "synthetic";
    records.push_back(std::move(record));
  }
  return Corpus(std::move(records));
}

}  // namespace ctirb
