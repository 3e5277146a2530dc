#include "ctirb/tables.hpp"

#include <array>

#include "ctirb/common.hpp"

namespace ctirb::tables {

namespace {

using Words = std::vector<std::string>;

const Words kThreatNouns = {
    "exploit", "vulnerability", "flaw", "breach", "attack", "threat", "payload", "intrusion",
    "compromise", "hackers", "attackers", "cyberattack", "infection", "advisory", "cve",
    "exploitation", "c2", "ioc",
};
const Words kThreatVerbs = {
    "exploited", "hijacked", "infects", "steals", "leaks", "bypasses", "breached",
    "compromised", "weaponized", "exfiltrates", "hacked", "spoofed",
};
const Words kThreatAdjectives = {"vulnerable", "exploitable", "unpatched", "malicious"};

const Words kAttackTypes = {
    "ransomware", "trojan", "malware", "worm", "spyware", "rootkit",
    "botnet", "backdoor", "keylogger", "cryptominer", "wiper", "infostealer",
};
const Words kAttributes = {
    "critical", "remote", "unauthenticated", "high-severity", "zero-day",
    "authenticated", "wormable", "pre-auth", "privileged", "persistent",
};
const Words kExecutionMethods = {
    "phishing", "sql-injection", "xss", "buffer-overflow", "privilege-escalation",
    "drive-by-download", "credential-stuffing", "brute-force", "rce", "deserialization",
    "path-traversal", "command-injection",
};

struct DomainPools {
  std::string domain;
  Words nouns;
  Words verbs;
  Words adjectives;
};

const std::array<DomainPools, 5>& domain_pools() {
  static const std::array<DomainPools, 5> pools = {{
      {"software performance",
       {"latency", "throughput", "slowdown", "memory-usage", "load-time", "cpu-usage"},
       {"slows", "lags", "stalls", "throttles"},
       {"sluggish", "laggy", "heavy", "slow"}},
      {"system upgrades",
       {"upgrade", "rollout", "firmware", "changelog", "installer", "migration"},
       {"upgrades", "migrates", "rolls-out", "installs"},
       {"scheduled", "incremental", "optional", "staged"}},
      {"general IT issues",
       {"outage", "glitch", "printer-jam", "login-issue", "timeout", "hiccup"},
       {"crashes", "freezes", "reboots", "hangs"},
       {"intermittent", "minor", "recurring", "flaky"}},
      {"cloud services",
       {"storage-quota", "sync-job", "bucket", "autoscaling"},
       {"syncs", "scales", "replicates"},
       {"hosted", "elastic", "managed"}},
      {"hardware maintenance",
       {"fan-noise", "disk-check", "cabling", "battery"},
       {"replaces", "cleans", "recalibrates"},
       {"refurbished", "spare", "worn"}},
  }};
  return pools;
}

enum class Role { noun, verb, adjective };

void add_role(std::map<std::string, std::vector<Replacement>>& out, const Words& words, Role role) {
  for (const auto& word : words) {
    auto& entry = out[word];
    for (const auto& pool : domain_pools()) {
      const Words& terms = role == Role::noun ? pool.nouns
                           : role == Role::verb ? pool.verbs
                                                : pool.adjectives;
      for (const auto& term : terms) entry.push_back({pool.domain, term});
    }
  }
}

// Category base plus a stable per-term offset in [0, 0.1); spreads oracle
// scores so threshold calibration is not dominated by ties.
double style_weight(double base, std::string_view term) {
  return base + 0.1 * static_cast<double>(stable_hash(term) % 1000) / 1000.0;
}

}  // namespace

const std::set<std::string>& security_lexicon() {
  static const std::set<std::string> lexicon = [] {
    std::set<std::string> out;
    for (const Words* group : {&kThreatNouns, &kThreatVerbs, &kThreatAdjectives, &kAttackTypes,
                               &kAttributes, &kExecutionMethods}) {
      out.insert(group->begin(), group->end());
    }
    return out;
  }();
  return lexicon;
}

const EntityCatalog& entity_catalog() {
  static const EntityCatalog catalog = [] {
    EntityCatalog c;
    c.organizations = {"microsoft", "cisco", "oracle", "adobe", "apple", "google",
                       "redhat", "vmware", "fortinet", "ibm", "intel", "samsung",
                       "citrix", "atlassian", "juniper", "mozilla"};
    c.products = {"windows", "exchange", "chrome", "acrobat", "weblogic", "ios",
                  "rhel", "nessus", "vcenter", "fortios", "jenkins", "confluence",
                  "firefox", "outlook", "jira", "android", "netscaler", "junos",
                  "tomcat", "wordpress", "openssl", "kubernetes", "docker", "sharepoint"};
    c.versions = {"v1.2", "2.4.1", "10.0.3", "7.6", "v3.0", "11.2.4", "8.1", "5.15.2",
                  "16.0.1", "v4.8", "2.0.17", "9.3", "12.1.1", "6.0.4", "3.3.2", "1.1.1"};
    c.vulnerabilities = {{"attack_type", kAttackTypes},
                         {"attribute", kAttributes},
                         {"execution_method", kExecutionMethods}};
    return c;
  }();
  return catalog;
}

const std::map<std::string, std::set<std::string>>& distractor_lexicons() {
  static const std::map<std::string, std::set<std::string>> lexicons = {
      {"sports", {"match", "goal", "league", "striker", "coach", "playoffs", "stadium", "season",
                  "referee", "tournament", "champions", "derby"}},
      {"food", {"recipe", "pasta", "bakery", "coffee", "brunch", "dessert", "chef", "spicy",
                "vegan", "noodles", "pizza", "salad"}},
      {"weather", {"forecast", "rain", "sunny", "storm", "humidity", "snowfall", "breeze",
                   "heatwave", "cloudy", "drizzle", "thunder", "fog"}},
      {"travel", {"flight", "airport", "hotel", "beach", "itinerary", "passport", "luggage",
                  "cruise", "hiking", "vacation", "train", "museum"}},
      {"entertainment", {"movie", "trailer", "album", "concert", "premiere", "episode",
                         "playlist", "actor", "festival", "sitcom", "podcast", "novel"}},
      {"it_helpdesk", {"latency", "slowdown", "upgrade", "rollout", "firmware", "outage",
                       "glitch", "printer-jam", "timeout", "reboots", "crashes", "laptop",
                       "keyboard", "monitor", "wifi", "backup", "storage", "installer",
                       "migration", "changelog"}},
  };
  return lexicons;
}

const std::vector<std::string>& fillers() {
  static const Words words = {
      "the", "a", "new", "for", "in", "on", "with", "via", "today", "now", "just",
      "after", "this", "week", "report", "users", "team", "details", "more", "read",
      "see", "latest", "is", "are", "has", "been", "out", "our", "from", "by", "all",
      "update", "released", "announced", "says", "warns", "found", "affects", "fixed",
      "version", "its", "before", "across", "some", "many", "still",
  };
  return words;
}

const std::map<std::string, std::vector<Replacement>>& security_substitutions() {
  static const std::map<std::string, std::vector<Replacement>> dictionary = [] {
    std::map<std::string, std::vector<Replacement>> out;
    add_role(out, kThreatNouns, Role::noun);
    add_role(out, kAttackTypes, Role::noun);
    add_role(out, kExecutionMethods, Role::noun);
    add_role(out, kThreatVerbs, Role::verb);
    add_role(out, kThreatAdjectives, Role::adjective);
    add_role(out, kAttributes, Role::adjective);
    return out;
  }();
  return dictionary;
}

const std::map<std::string, std::vector<std::string>>& domain_vocabulary() {
  static const std::map<std::string, std::vector<std::string>> vocab = [] {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& pool : domain_pools()) {
      auto& words = out[pool.domain];
      for (const Words* part : {&pool.nouns, &pool.verbs, &pool.adjectives}) {
        words.insert(words.end(), part->begin(), part->end());
      }
    }
    return out;
  }();
  return vocab;
}

const std::map<std::string, std::vector<std::string>>& synonyms() {
  static const std::map<std::string, std::vector<std::string>> table = {
      // security vocabulary stays inside the security lexicon
      {"exploit", {"exploitation"}},
      {"exploitation", {"exploit"}},
      {"flaw", {"vulnerability"}},
      {"vulnerability", {"flaw"}},
      {"hackers", {"attackers"}},
      {"attackers", {"hackers"}},
      {"breach", {"compromise", "intrusion"}},
      {"compromise", {"breach"}},
      {"intrusion", {"breach"}},
      {"attack", {"cyberattack"}},
      {"cyberattack", {"attack"}},
      {"infection", {"compromise"}},
      {"breached", {"compromised", "hacked"}},
      {"compromised", {"breached", "hacked"}},
      {"hacked", {"breached"}},
      {"steals", {"exfiltrates"}},
      {"exfiltrates", {"steals"}},
      {"leaks", {"exfiltrates"}},
      {"exploited", {"weaponized"}},
      {"weaponized", {"exploited"}},
      {"vulnerable", {"exploitable", "unpatched"}},
      {"exploitable", {"vulnerable"}},
      {"unpatched", {"vulnerable"}},
      {"malicious", {"weaponized"}},
      {"threat", {"risk"}},
      {"advisory", {"bulletin"}},
      // general vocabulary
      {"new", {"fresh", "recent"}},
      {"latest", {"newest", "most-recent"}},
      {"today", {"this-morning", "tonight"}},
      {"now", {"currently", "right-now"}},
      {"just", {"only", "recently"}},
      {"after", {"following"}},
      {"before", {"prior-to"}},
      {"report", {"writeup", "summary"}},
      {"users", {"customers", "people"}},
      {"team", {"group", "crew"}},
      {"details", {"specifics", "info"}},
      {"more", {"additional", "further"}},
      {"read", {"check", "review"}},
      {"see", {"view", "check"}},
      {"update", {"refresh", "revision"}},
      {"released", {"published", "shipped"}},
      {"announced", {"revealed", "unveiled"}},
      {"says", {"states", "reports"}},
      {"warns", {"cautions", "alerts"}},
      {"found", {"discovered", "spotted"}},
      {"affects", {"impacts", "hits"}},
      {"fixed", {"resolved", "addressed"}},
      {"version", {"release", "build"}},
      {"many", {"numerous", "several"}},
      {"some", {"certain", "several"}},
      {"still", {"yet"}},
      {"across", {"throughout"}},
      {"week", {"weekend"}},
      {"big", {"large", "huge"}},
      {"small", {"tiny", "minor"}},
      {"fast", {"quick", "rapid"}},
      {"slow", {"sluggish"}},
      {"good", {"great", "solid"}},
      {"bad", {"poor", "awful"}},
      {"great", {"excellent", "superb"}},
      {"happy", {"glad", "pleased"}},
      {"start", {"begin", "kick-off"}},
      {"begin", {"start"}},
      {"end", {"finish", "close"}},
      {"finish", {"complete"}},
      {"help", {"assist", "support"}},
      {"fix", {"repair", "resolve"}},
      {"issue", {"problem", "matter"}},
      {"problem", {"issue", "trouble"}},
      {"show", {"display", "reveal"}},
      {"make", {"create", "build"}},
      {"get", {"obtain", "grab"}},
      {"use", {"utilize", "employ"}},
      {"need", {"require"}},
      {"want", {"wish", "desire"}},
      {"try", {"attempt"}},
      {"look", {"glance"}},
      {"find", {"discover", "locate"}},
      {"give", {"provide", "offer"}},
      {"tell", {"inform"}},
      {"ask", {"request", "query"}},
      {"call", {"phone", "ring"}},
      {"keep", {"retain", "maintain"}},
      {"let", {"allow", "permit"}},
      {"move", {"shift", "relocate"}},
      {"change", {"modify", "alter"}},
      {"run", {"execute", "operate"}},
      {"stop", {"halt", "cease"}},
      {"open", {"launch"}},
      {"close", {"shut"}},
      {"buy", {"purchase"}},
      {"sell", {"trade"}},
      {"pay", {"settle"}},
      {"send", {"transmit", "dispatch"}},
      {"receive", {"get"}},
      {"build", {"construct"}},
      {"break", {"snap"}},
      {"win", {"triumph"}},
      {"lose", {"forfeit"}},
      {"play", {"perform"}},
      {"watch", {"observe", "view"}},
      {"listen", {"hear"}},
      {"travel", {"journey"}},
      {"visit", {"tour"}},
      {"cook", {"prepare"}},
      {"eat", {"dine"}},
      {"drink", {"sip"}},
      {"sleep", {"rest"}},
      {"work", {"labor"}},
      {"learn", {"study"}},
      {"teach", {"instruct"}},
      {"write", {"compose"}},
      {"talk", {"chat", "speak"}},
      {"speak", {"talk"}},
      {"think", {"believe", "reckon"}},
      {"know", {"understand"}},
      {"feel", {"sense"}},
      {"love", {"adore"}},
      {"like", {"enjoy"}},
      {"hate", {"dislike"}},
      {"hope", {"wish"}},
      {"wait", {"hold-on"}},
      {"stay", {"remain"}},
      {"leave", {"depart", "exit"}},
      {"arrive", {"reach"}},
      {"return", {"come-back"}},
      {"share", {"post"}},
      {"post", {"share"}},
      {"join", {"attend"}},
      {"meet", {"gather"}},
      {"plan", {"schedule"}},
      {"schedule", {"timetable"}},
      {"event", {"occasion"}},
      {"news", {"headlines"}},
      {"story", {"tale", "account"}},
      {"people", {"folks", "individuals"}},
      {"friends", {"buddies", "pals"}},
      {"family", {"relatives"}},
      {"home", {"house"}},
      {"city", {"town"}},
      {"day", {"date"}},
      {"night", {"evening"}},
      {"morning", {"dawn"}},
      {"year", {"annum"}},
      {"time", {"moment"}},
      {"place", {"spot", "location"}},
      {"thing", {"item", "object"}},
      {"way", {"method", "manner"}},
      {"idea", {"notion", "concept"}},
      {"part", {"portion", "piece"}},
      {"result", {"outcome"}},
      {"reason", {"cause"}},
      {"price", {"cost"}},
      {"money", {"cash", "funds"}},
      {"job", {"role", "position"}},
      {"company", {"firm", "business"}},
      {"market", {"marketplace"}},
      {"product", {"offering"}},
      {"service", {"offering"}},
      {"system", {"platform"}},
      {"software", {"application"}},
      {"app", {"application"}},
      {"device", {"gadget"}},
      {"computer", {"machine", "pc"}},
      {"phone", {"handset", "mobile"}},
      {"network", {"grid"}},
      {"server", {"host"}},
      {"data", {"information"}},
      {"file", {"document"}},
      {"page", {"sheet"}},
      {"site", {"website"}},
      {"online", {"on-the-web"}},
      {"quickly", {"rapidly", "swiftly"}},
      {"slowly", {"gradually"}},
      {"really", {"truly"}},
      {"very", {"extremely", "highly"}},
      {"also", {"too", "additionally"}},
      {"again", {"once-more"}},
      {"soon", {"shortly"}},
      {"always", {"constantly"}},
      {"never", {"not-ever"}},
      {"often", {"frequently"}},
      {"maybe", {"perhaps"}},
      {"important", {"key", "vital"}},
      {"serious", {"severe", "grave"}},
      {"major", {"significant"}},
      {"easy", {"simple"}},
      {"hard", {"difficult", "tough"}},
      {"old", {"aging", "legacy"}},
      {"young", {"youthful"}},
      {"best", {"finest", "top"}},
      {"worst", {"poorest"}},
      {"free", {"complimentary"}},
      {"full", {"complete"}},
      {"empty", {"vacant"}},
      {"busy", {"hectic"}},
      {"quiet", {"calm"}},
      {"loud", {"noisy"}},
      {"hot", {"scorching"}},
      {"cold", {"chilly", "freezing"}},
      {"warm", {"mild"}},
      {"wet", {"damp"}},
      {"dry", {"arid"}},
      {"huge", {"massive", "enormous"}},
      {"recipe", {"dish"}},
      {"movie", {"film"}},
      {"album", {"record"}},
      {"concert", {"gig", "show"}},
      {"match", {"game", "fixture"}},
      {"coach", {"manager"}},
      {"flight", {"plane-trip"}},
      {"vacation", {"holiday", "getaway"}},
      {"forecast", {"projection", "prediction"}},
      {"storm", {"tempest"}},
      {"laptop", {"notebook"}},
      {"backup", {"copy"}},
  };
  return table;
}

const std::map<std::string, double>& cyber_style_weights() {
  static const std::map<std::string, double> weights = [] {
    std::map<std::string, double> out;
    for (const auto& word : security_lexicon()) out[word] = style_weight(0.85, word);
    const auto& catalog = entity_catalog();
    for (const Words* group : {&catalog.organizations, &catalog.products}) {
      for (const auto& word : *group) out[word] = style_weight(0.5, word);
    }
    for (const char* word : {"kernel", "plugin", "host", "server", "patch", "version",
                             "update", "release", "advisory", "synopsis", "severity",
                             "users", "details", "report", "fixed", "affects", "warns"}) {
      out.try_emplace(word, style_weight(0.25, word));
    }
    for (const auto& [domain, words] : domain_vocabulary()) {
      for (const auto& word : words) out.try_emplace(word, style_weight(0.1, word));
    }
    return out;
  }();
  return weights;
}

}  // namespace ctirb::tables
