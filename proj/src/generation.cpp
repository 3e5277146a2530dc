#include "ctirb/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "ctirb/tokenize.hpp"

namespace ctirb {

namespace {

// Deterministic choice in [0, n) keyed by a string.
std::size_t pick(std::uint64_t seed, std::string_view key, std::size_t n) {
  return static_cast<std::size_t>(mix64(derive_seed(seed, key)) % n);
}

bool contains_token(const std::vector<std::string>& tokens, std::string_view token) {
  return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
}

std::vector<std::string> normalized(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(normalize_token(t));
  return out;
}

}  // namespace

// ------------------------------------------------------------------ prompts

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::avoid_security: return "avoid_security";
    case Constraint::preserve_structure: return "preserve_structure";
    case Constraint::term_diversity: return "term_diversity";
    case Constraint::emphasize_key_terms: return "emphasize_key_terms";
  }
  return "unknown";
}

Constraint parse_constraint(std::string_view text) {
  for (Constraint c : {Constraint::avoid_security, Constraint::preserve_structure, Constraint::term_diversity,
                       Constraint::emphasize_key_terms}) {
    if (to_string(c) == text) return c;
  }
  throw ValidationError("unknown constraint '" + std::string(text) + "'");
}

bool PromptTemplate::has(Constraint c) const {
  return std::find(constraints.begin(), constraints.end(), c) != constraints.end();
}

void PromptTemplate::validate() const {
  if (constraints.empty()) throw ValidationError("prompt needs at least one constraint");
  if (replacement_domains.empty()) throw ValidationError("prompt needs at least one replacement domain");
  if (structure_strength < 1) throw ValidationError("structure_strength must be >= 1");
}

nlohmann::json PromptTemplate::to_json() const {
  nlohmann::json cs = nlohmann::json::array();
  for (Constraint c : constraints) cs.push_back(to_string(c));
  return {{"intro", intro},
          {"constraints", cs},
          {"replacement_domains", replacement_domains},
          {"variant", variant},
          {"structure_strength", structure_strength}};
}

void PromptSpec::validate() const {
  base.validate();
  if (key_tokens.empty()) throw ValidationError("prompt needs at least one key token");
}

PromptSpec make_prompt_spec(const PromptTemplate& base, const AttentionProfile& profile) {
  PromptSpec spec{base, profile.key_tokens()};
  spec.validate();
  return spec;
}

namespace {

std::string constraint_line(Constraint c, const PromptTemplate& t) {
  switch (c) {
    case Constraint::avoid_security:
      return "Leave out anything security-related such as vulnerabilities, exploits or attacks, and use "
             "non-security wording in their place.";
    case Constraint::preserve_structure:
      return t.structure_strength >= 2
                 ? "Keep the sentence structure of the example token for token wherever a word does not need "
                   "replacing; do not add or drop clauses."
                 : "Keep the sentence structure of the example so the message still reads like a security post.";
    case Constraint::term_diversity:
      return "Vary the replacement terms rather than repeating the same ones.";
    case Constraint::emphasize_key_terms:
      return "Make the key terms stand out, for example by repeating them at the end.";
  }
  return {};
}

std::string comma_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

std::string build_fan_prompt(const TextRecord& record, const AttentionProfile& profile, const PromptSpec& spec) {
  if (profile.top_k.empty()) throw ValidationError("attention profile has no selected tokens");
  spec.validate();
  std::string prompt = spec.base.intro + "\n";
  prompt += "Example message: \"" + record.clean_text + "\"\n";
  prompt += "Key terms to keep exactly as written: " + comma_list(spec.key_tokens) + "\n";
  prompt += "Write one new message of similar length that follows these rules:\n";
  for (std::size_t i = 0; i < spec.base.constraints.size(); ++i) {
    prompt += std::to_string(i + 1) + ". " + constraint_line(spec.base.constraints[i], spec.base) + "\n";
  }
  prompt += "Take replacement vocabulary from these areas: " + comma_list(spec.base.replacement_domains) + ".\n";
  prompt += "Reply with the new message only.";
  return prompt;
}

const std::vector<Mutation>& mutation_library() {
  static const std::vector<Mutation> library = {
      {"reorder_constraints",
       [](PromptTemplate& t) {
         if (t.constraints.size() > 1) std::rotate(t.constraints.begin(), t.constraints.begin() + 1, t.constraints.end());
       }},
      {"add_domain:cloud services",
       [](PromptTemplate& t) {
         if (std::find(t.replacement_domains.begin(), t.replacement_domains.end(), "cloud services") ==
             t.replacement_domains.end()) {
           t.replacement_domains.push_back("cloud services");
         }
       }},
      {"strengthen_structure",
       [](PromptTemplate& t) {
         if (!t.has(Constraint::preserve_structure)) t.constraints.push_back(Constraint::preserve_structure);
         t.structure_strength = std::max(t.structure_strength, 2);
       }},
      {"add_domain:hardware maintenance",
       [](PromptTemplate& t) {
         if (std::find(t.replacement_domains.begin(), t.replacement_domains.end(), "hardware maintenance") ==
             t.replacement_domains.end()) {
           t.replacement_domains.push_back("hardware maintenance");
         }
       }},
      {"emphasize_key_terms",
       [](PromptTemplate& t) {
         if (!t.has(Constraint::emphasize_key_terms)) t.constraints.push_back(Constraint::emphasize_key_terms);
       }},
  };
  return library;
}

// --------------------------------------------------------- template backend

TemplateBackend::TemplateBackend() : TemplateBackend(tables::security_substitutions(), tables::synonyms()) {}

TemplateBackend::TemplateBackend(SubstitutionDictionary dictionary, SynonymTable synonyms)
    : dictionary_(std::move(dictionary)), synonyms_(std::move(synonyms)) {}

std::vector<std::string> TemplateBackend::rewrite_tokens(const std::vector<std::string>& tokens,
                                                         const std::vector<std::size_t>& keep,
                                                         const PromptTemplate& prompt, std::string_view record_id,
                                                         std::uint64_t seed) const {
  const std::set<std::size_t> kept(keep.begin(), keep.end());
  const bool avoid = prompt.has(Constraint::avoid_security);
  const bool diverse = prompt.has(Constraint::term_diversity);
  const std::string id(record_id);

  std::vector<std::string> out;
  out.reserve(tokens.size() + keep.size() + 1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& token = tokens[i];
    if (kept.contains(i)) {
      out.push_back(token);
      continue;
    }
    const std::string norm = normalize_token(token);
    const std::string position_key = id + "#" + std::to_string(i);
    if (avoid) {
      if (auto it = dictionary_.find(norm); it != dictionary_.end() && !it->second.empty()) {
        std::vector<const tables::Replacement*> candidates;
        for (const auto& r : it->second) {
          if (std::find(prompt.replacement_domains.begin(), prompt.replacement_domains.end(), r.domain) !=
              prompt.replacement_domains.end()) {
            candidates.push_back(&r);
          }
        }
        if (candidates.empty()) {
          for (const auto& r : it->second) candidates.push_back(&r);
        }
        const std::string key = diverse ? "fan.replace#" + position_key : "fan.replace#" + norm;
        out.push_back(candidates[pick(seed, key, candidates.size())]->term);
        continue;
      }
    }
    out.push_back(token);
  }
  if (prompt.has(Constraint::emphasize_key_terms) && !keep.empty()) {
    out.push_back("|");
    for (std::size_t i : keep) out.push_back(tokens[i]);
  }
  return out;
}

std::string TemplateBackend::rewrite(const FanRequest& request) const {
  const auto tokens = request.record.tokens();
  const auto& profile = request.profile;
  if (profile.tokens.size() > tokens.size() ||
      !std::equal(profile.tokens.begin(), profile.tokens.end(), tokens.begin())) {
    throw ValidationError("attention profile does not match record '" + request.record.id + "'");
  }
  for (std::size_t i : profile.top_k) {
    if (i >= profile.tokens.size()) throw ValidationError("attention profile index out of range");
  }
  return join_tokens(rewrite_tokens(tokens, profile.top_k, request.spec.base, request.record.id, request.seed));
}

namespace {

const std::set<std::string>& split_words() {
  static const std::set<std::string> words = {"in", "on", "for", "with", "via", "after", "before", "across",
                                              "from", "by", "to", "at", "over", "during"};
  return words;
}

struct Piece {
  std::string token;
  std::ptrdiff_t source = -1;  // index into the source tokens, -1 for inserted text
};

// Clause templates over a sentence split into A (before the split word) and
// B (from the split word on). Template 0 is the identity.
std::vector<Piece> apply_clause_template(std::size_t which, const std::vector<Piece>& a, const std::vector<Piece>& b) {
  auto cat = [](std::initializer_list<const std::vector<Piece>*> parts) {
    std::vector<Piece> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
  };
  const std::vector<Piece> comma{{",", -1}}, colon{{":", -1}}, lead{{"reportedly", -1}, {",", -1}};
  const bool split = !a.empty() && !b.empty();
  switch (which) {
    case 1: return split ? cat({&b, &comma, &a}) : cat({&a, &b});
    case 2: return split ? cat({&a, &comma, &b}) : cat({&a, &b});
    case 3: return split ? cat({&b, &colon, &a}) : cat({&a, &b});
    case 4: return cat({&lead, &a, &b});
    case 5: return split ? cat({&a, &colon, &b}) : cat({&a, &b});
    default: return cat({&a, &b});
  }
}

constexpr std::size_t kClauseTemplates = 6;

}  // namespace

// Paraphrase candidates with their token-level lineage; shared by the
// backend entry point and paraphrase_fap (which needs entity positions).
static std::vector<std::vector<Piece>> paraphrase_pieces(const TextRecord& record, const SynonymTable& synonyms,
                                                         const SubstitutionDictionary& dictionary, std::size_t n,
                                                         std::uint64_t seed) {
  const auto tokens = record.tokens();
  std::vector<bool> in_entity(tokens.size(), false);
  for (const auto& span : record.entities) {
    for (std::size_t i = span.start; i < span.end && i < tokens.size(); ++i) in_entity[i] = true;
  }
  auto inside_span = [&](std::size_t p) {
    return std::any_of(record.entities.begin(), record.entities.end(),
                       [&](const EntitySpan& s) { return s.start < p && p < s.end; });
  };
  std::size_t split_at = 0;
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
    if (!in_entity[i] && !inside_span(i) && split_words().contains(normalize_token(tokens[i]))) {
      split_at = i;
      break;
    }
  }

  std::vector<std::vector<Piece>> candidates;
  const std::size_t attempts = std::max<std::size_t>(n * 8, kClauseTemplates);
  for (std::size_t v = 0; v < attempts; ++v) {
    std::vector<Piece> words;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      Piece piece{tokens[i], static_cast<std::ptrdiff_t>(i)};
      const auto it = in_entity[i] ? synonyms.end() : synonyms.find(normalize_token(tokens[i]));
      if (it != synonyms.end() && !it->second.empty()) {
        if (v == 0) {
          piece.token = it->second.front();
        } else {
          const std::size_t choice =
              pick(seed, record.id + "#para#" + std::to_string(v) + "#" + std::to_string(i), it->second.size() + 1);
          if (choice < it->second.size()) piece.token = it->second[choice];
        }
      }
      // a synonym must not introduce or remove security vocabulary by accident
      if (piece.token != tokens[i] && dictionary.contains(normalize_token(piece.token)) !=
                                          dictionary.contains(normalize_token(tokens[i]))) {
        piece.token = tokens[i];
      }
      words.push_back(std::move(piece));
    }
    std::vector<Piece> a, b;
    if (split_at > 0) {
      a.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(split_at));
      b.assign(words.begin() + static_cast<std::ptrdiff_t>(split_at), words.end());
    } else {
      a = words;
    }
    candidates.push_back(apply_clause_template(v % kClauseTemplates, a, b));
  }
  return candidates;
}

static std::string render(const std::vector<Piece>& pieces) {
  std::vector<std::string> tokens;
  tokens.reserve(pieces.size());
  for (const auto& p : pieces) tokens.push_back(p.token);
  return join_tokens(tokens);
}

std::vector<std::string> TemplateBackend::paraphrase(const TextRecord& record, std::size_t n, std::uint64_t seed) const {
  std::vector<std::string> out;
  for (const auto& pieces : paraphrase_pieces(record, synonyms_, dictionary_, n, seed)) out.push_back(render(pieces));
  return out;
}

// ---------------------------------------------------------------------- FaN

std::string to_string(FanFlag flag) {
  switch (flag) {
    case FanFlag::no_op: return "no_op";
    case FanFlag::missing_key_token: return "missing_key_token";
    case FanFlag::too_long: return "too_long";
  }
  return "unknown";
}

TextRecord FanRecord::to_record(int label) const {
  TextRecord r;
  r.id = id;
  r.raw_text = text;
  r.clean_text = text;
  r.label = label;
  r.provenance = Provenance::fake_machine;
  r.source = "fan:" + backend;
  return r;
}

nlohmann::json FanRecord::lineage() const {
  nlohmann::json flag_names = nlohmann::json::array();
  for (FanFlag f : flags) flag_names.push_back(to_string(f));
  nlohmann::json j = {{"id", id},
                      {"source_id", source_id},
                      {"key_tokens", key_tokens},
                      {"backend", backend},
                      {"prompt_variant", prompt_variant},
                      {"flags", flag_names}};
  j["classifier_outcome"] = classified_positive ? nlohmann::json(*classified_positive ? "FP" : "TN") : nullptr;
  j["oracle_outcome"] = oracle_accepted ? nlohmann::json(*oracle_accepted ? "accepted" : "rejected") : nullptr;
  return j;
}

FanRecord generate_fan(const TextRecord& record, const AttentionProfile& profile, const PromptSpec& spec,
                       const GenerationBackend& backend, std::uint64_t seed) {
  const std::string prompt = build_fan_prompt(record, profile, spec);
  FanRecord fan;
  fan.id = "fan-" + record.id + "-v" + std::to_string(spec.base.variant);
  fan.source_id = record.id;
  fan.key_tokens = spec.key_tokens;
  fan.backend = backend.name();
  fan.prompt_variant = spec.base.variant;
  fan.text = backend.rewrite(FanRequest{record, profile, spec, prompt, seed});

  const auto out_tokens = tokenize(fan.text);
  for (const auto& key : spec.key_tokens) {
    if (!contains_token(out_tokens, key)) {
      fan.flags.push_back(FanFlag::missing_key_token);
      break;
    }
  }
  if (normalized(out_tokens) == normalized(record.tokens())) fan.flags.push_back(FanFlag::no_op);
  if (fan.text.empty() || fan.text.size() > record.max_len) fan.flags.push_back(FanFlag::too_long);
  return fan;
}

std::vector<FanRecord> generate_fan_batch(const std::vector<TextRecord>& records,
                                          const std::vector<AttentionProfile>& profiles, const PromptTemplate& base,
                                          const GenerationBackend& backend, std::uint64_t seed,
                                          std::size_t concurrency) {
  if (records.size() != profiles.size()) throw ValidationError("one attention profile per record is required");
  base.validate();
  std::vector<FanRecord> out(records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        const PromptSpec spec = make_prompt_spec(base, profiles[i]);
        out[i] = generate_fan(records[i], profiles[i], spec, backend, derive_seed(seed, records[i].id));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = records.size();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(concurrency, 1, std::max<std::size_t>(records.size(), 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::stable_sort(out.begin(), out.end(), [](const FanRecord& a, const FanRecord& b) { return a.source_id < b.source_id; });
  return out;
}

FanRecord random_replacement_fan(const TextRecord& record, std::size_t k, const std::vector<std::string>& domains,
                                 std::uint64_t seed) {
  std::vector<std::string> pool;
  for (const auto& domain : domains) {
    const auto it = tables::domain_vocabulary().find(domain);
    if (it == tables::domain_vocabulary().end()) throw ValidationError("unknown replacement domain '" + domain + "'");
    pool.insert(pool.end(), it->second.begin(), it->second.end());
  }
  if (pool.empty()) throw ValidationError("no replacement vocabulary");
  auto tokens = record.tokens();
  Rng rng(derive_seed(seed, "random_replacement#" + record.id));
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());

  FanRecord fan;
  fan.id = "rnd-" + record.id;
  fan.source_id = record.id;
  fan.backend = "random_replacement";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (std::binary_search(order.begin(), order.end(), i)) {
      fan.key_tokens.push_back(tokens[i]);
    } else {
      tokens[i] = pool[rng.index(pool.size())];
    }
  }
  fan.text = join_tokens(tokens);
  if (fan.text.size() > record.max_len) fan.flags.push_back(FanFlag::too_long);
  return fan;
}

// ---------------------------------------------------------------------- FaP

std::string to_string(FapMethod method) { return method == FapMethod::paraphrase ? "paraphrase" : "rule_based"; }

TextRecord FapRecord::to_record() const {
  TextRecord r;
  r.id = id;
  r.raw_text = text;
  r.clean_text = text;
  r.label = 1;
  r.entities = entities;
  r.provenance = Provenance::fake_machine;
  r.source = "fap:" + to_string(method);
  return r;
}

nlohmann::json FapRecord::lineage() const {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : substitutions) {
    subs.push_back({{"start", s.start},
                    {"end", s.end},
                    {"old", s.old_surface},
                    {"new", s.new_surface},
                    {"type", to_string(s.type)},
                    {"group", s.group}});
  }
  return {{"id", id},
          {"source_id", source_id},
          {"method", to_string(method)},
          {"substitutions", subs},
          {"unsubstitutable", unsubstitutable}};
}

ParaphraseResult paraphrase_fap(const TextRecord& record, const GenerationBackend& backend, std::size_t n,
                                std::uint64_t seed) {
  if (record.label != 1) throw ValidationError("paraphrase source must be positive");
  if (n < 1) throw ValidationError("paraphrase count must be >= 1");
  ParaphraseResult result;
  std::set<std::string> seen{join_tokens(record.tokens())};

  auto add = [&](std::string text, std::vector<EntitySpan> entities) {
    if (result.variants.size() >= n || text.empty() || text.size() > record.max_len) return;
    if (!seen.insert(text).second) return;
    FapRecord fap;
    fap.id = "fap-para-" + record.id + "-" + std::to_string(result.variants.size());
    fap.text = std::move(text);
    fap.source_id = record.id;
    fap.method = FapMethod::paraphrase;
    fap.entities = std::move(entities);
    result.variants.push_back(std::move(fap));
  };

  if (const auto* tb = dynamic_cast<const TemplateBackend*>(&backend)) {
    // The template engine keeps entity tokens in place, so spans can be
    // carried over to the paraphrase.
    for (const auto& pieces : paraphrase_pieces(record, tb->synonyms(), tb->dictionary(), n, seed)) {
      std::vector<EntitySpan> spans;
      for (const auto& span : record.entities) {
        for (std::size_t p = 0; p < pieces.size(); ++p) {
          if (pieces[p].source == static_cast<std::ptrdiff_t>(span.start)) {
            EntitySpan moved = span;
            moved.start = p;
            moved.end = p + (span.end - span.start);
            spans.push_back(std::move(moved));
            break;
          }
        }
      }
      add(render(pieces), std::move(spans));
    }
  } else {
    for (auto& text : backend.paraphrase(record, n, seed)) add(std::move(text), {});
  }
  result.short_of_target = result.variants.size() < n;
  return result;
}

FapRecord rulebased_fap(const TextRecord& record, const Lexicons& lexicons, std::uint64_t seed) {
  const auto tokens = record.tokens();
  std::vector<EntitySpan> spans = record.entities;
  std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  Rng rng(derive_seed(seed, "rule_based#" + record.id));

  FapRecord fap;
  fap.id = "fap-rule-" + record.id;
  fap.source_id = record.id;
  fap.method = FapMethod::rule_based;
  std::vector<std::string> out;
  std::size_t cursor = 0;
  for (const auto& span : spans) {
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(cursor),
               tokens.begin() + static_cast<std::ptrdiff_t>(span.start));
    std::vector<std::string> candidates;
    if (const auto it = lexicons.find({span.type, span.group}); it != lexicons.end()) {
      for (const auto& surface : it->second) {
        if (surface != span.surface) candidates.push_back(surface);
      }
    }
    EntitySpan placed = span;
    placed.start = out.size();
    if (candidates.empty()) {
      fap.unsubstitutable.push_back(span.surface);
      out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                 tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
    } else {
      const std::string& chosen = candidates[rng.index(candidates.size())];
      const auto replacement = tokenize(chosen);
      out.insert(out.end(), replacement.begin(), replacement.end());
      placed.surface = join_tokens(replacement);
      fap.substitutions.push_back({span.start, span.end, span.surface, placed.surface, span.type, span.group});
    }
    placed.end = out.size();
    fap.entities.push_back(std::move(placed));
    cursor = span.end;
  }
  out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(cursor), tokens.end());
  if (fap.substitutions.empty()) {
    throw ValidationError("record '" + record.id + "' is not substitutable");
  }
  fap.text = join_tokens(out);
  return fap;
}

// ------------------------------------------------------------------- oracle

namespace {

std::vector<std::regex> default_patterns() {
  const auto flags = std::regex::ECMAScript | std::regex::icase | std::regex::optimize;
  return {
      std::regex(R"(\bcve-\d{4}-\d{4,}\b)", flags),               // CVE identifiers
      std::regex(R"(\b[a-z]{2,5}sa-\d{4}[:-]\d+\b)", flags),      // vendor advisory ids
      std::regex(R"(\bcvss(v?\d(\.\d)?)?\b)", flags),             // CVSS mentions
      std::regex(R"((^|[^\w.])v?\d+\.\d+(\.\d+)*\b)", flags),     // version strings
  };
}

}  // namespace

ValidationOracle::ValidationOracle() : ValidationOracle(tables::cyber_style_weights(), 1.0, 0.0) {}

ValidationOracle::ValidationOracle(std::map<std::string, double> weights, double pattern_weight, double threshold,
                                   double target_rejection)
    : weights_(std::move(weights)),
      pattern_weight_(pattern_weight),
      threshold_(threshold),
      target_(target_rejection),
      patterns_(default_patterns()) {
  if (!(target_ >= 0.0 && target_ <= 1.0)) throw ValidationError("target rejection must be in [0, 1]");
  if (pattern_weight_ < 0.0) throw ValidationError("pattern weight must be >= 0");
}

std::size_t ValidationOracle::pattern_hits(std::string_view text) const {
  std::size_t hits = 0;
  for (const auto& re : patterns_) {
    hits += static_cast<std::size_t>(
        std::distance(std::cregex_iterator(text.data(), text.data() + text.size(), re), std::cregex_iterator()));
  }
  return hits;
}

double ValidationOracle::score(std::string_view text) const {
  const auto tokens = tokenize(text);
  if (tokens.empty()) return 0.0;
  double total = 0.0;
  for (const auto& token : tokens) {
    if (const auto it = weights_.find(normalize_token(token)); it != weights_.end()) total += it->second;
  }
  total += pattern_weight_ * static_cast<double>(pattern_hits(text));
  return std::min(1.0, total / static_cast<double>(tokens.size()));
}

void ValidationOracle::set_threshold(double threshold) {
  if (!std::isfinite(threshold)) throw ValidationError("threshold must be finite");
  threshold_ = threshold;
  calibrated_ = true;
}

void ValidationOracle::calibrate(const std::vector<std::string>& reference) {
  if (reference.empty()) throw ValidationError("calibration needs a non-empty reference batch");
  std::vector<double> scores;
  scores.reserve(reference.size());
  for (const auto& text : reference) scores.push_back(score(text));
  std::sort(scores.begin(), scores.end());

  std::vector<double> candidates{scores.front()};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[i - 1]) candidates.push_back(0.5 * (scores[i] + scores[i - 1]));
  }
  candidates.push_back(std::nextafter(scores.back(), std::numeric_limits<double>::infinity()));

  double best = candidates.front();
  double best_gap = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(scores.size());
  for (double theta : candidates) {
    const auto rejected = std::lower_bound(scores.begin(), scores.end(), theta) - scores.begin();
    const double gap = std::abs(static_cast<double>(rejected) / n - target_);
    if (gap < best_gap) {
      best_gap = gap;
      best = theta;
    }
  }
  // a text with no cyber vocabulary at all must never pass
  threshold_ = std::max(best, std::numeric_limits<double>::min());
  calibrated_ = true;
}

double ValidationOracle::rejection_rate(const std::vector<std::string>& texts) const {
  if (texts.empty()) return 0.0;
  std::size_t rejected = 0;
  for (const auto& text : texts) rejected += accepts(text) ? 0 : 1;
  return static_cast<double>(rejected) / static_cast<double>(texts.size());
}

bool validate_fan(FanRecord& fan, const ValidationOracle& oracle) {
  if (!oracle.calibrated()) throw ValidationError("validation oracle is not calibrated");
  fan.oracle_accepted = oracle.accepts(fan.text);
  return *fan.oracle_accepted;
}

// --------------------------------------------------------------- refinement

RefinementResult refine_prompt_loop(const std::vector<TextRecord>& positives,
                                    const std::vector<AttentionProfile>& profiles, const PositiveClassifier& classify,
                                    const GenerationBackend& backend, double theta, std::size_t max_iters,
                                    std::uint64_t seed, PromptTemplate initial) {
  if (!(theta > 0.0 && theta <= 1.0)) throw ValidationError("theta must be in (0, 1]");
  if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (positives.empty()) throw ValidationError("refinement needs at least one positive record");

  RefinementResult result;
  PromptTemplate current = std::move(initial);
  const auto& library = mutation_library();
  for (std::size_t iteration = 1; iteration <= max_iters; ++iteration) {
    std::string mutation = "initial";
    if (iteration > 1) {
      if (iteration - 2 >= library.size()) break;
      library[iteration - 2].apply(current);
      mutation = library[iteration - 2].name;
      current.variant = static_cast<int>(iteration - 1);
    }
    auto batch = generate_fan_batch(positives, profiles, current, backend, seed);
    RefinementStep step{iteration, current.variant, mutation, batch.size(), 0, 0, 0.0};
    for (auto& fan : batch) {
      if (!fan.emitted()) continue;
      ++step.emitted;
      fan.classified_positive = classify(fan.to_record(0));
      if (*fan.classified_positive) ++step.false_positives;
    }
    step.fp_ratio = step.emitted == 0 ? 0.0
                                      : static_cast<double>(step.false_positives) / static_cast<double>(step.emitted);
    result.log.push_back(step);
    if (result.log.size() == 1 || step.fp_ratio > result.best_ratio) {
      result.best = current;
      result.best_ratio = step.fp_ratio;
      result.best_batch = std::move(batch);
    }
    if (step.fp_ratio >= theta) {
      result.reached = true;
      break;
    }
  }
  return result;
}

}  // namespace ctirb
