#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctirb/corpus.hpp"

// Bundled word tables for the offline generators and the synthetic corpus.
namespace ctirb::tables {

struct Replacement {
  std::string domain;
  std::string term;

  bool operator==(const Replacement&) const = default;
};

/// Threat vocabulary: generic security words plus every vulnerability surface.
const std::set<std::string>& security_lexicon();
const EntityCatalog& entity_catalog();
const std::map<std::string, std::set<std::string>>& distractor_lexicons();
const std::vector<std::string>& fillers();

/// Security word -> non-security replacements tagged with their domain.
const std::map<std::string, std::vector<Replacement>>& security_substitutions();

/// Replacement-domain word pools ("software performance", ...).
const std::map<std::string, std::vector<std::string>>& domain_vocabulary();

/// Paraphrase synonyms. Keys and values are lowercase single tokens.
const std::map<std::string, std::vector<std::string>>& synonyms();

/// Per-term weights of the cyber-style lexicon used by the validation oracle.
const std::map<std::string, double>& cyber_style_weights();

}  // namespace ctirb::tables
