#include <doctest.h>

#include <filesystem>
#include <set>

#include "ctirb/corpus.hpp"
#include "ctirb/report.hpp"
#include "ctirb/tables.hpp"
#include "ctirb/tokenize.hpp"

using namespace ctirb;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ctirb_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("tokenizer keeps identifiers together") {
  CHECK(tokenize("Patch CVE-2024-1234 now!") == std::vector<std::string>{"Patch", "CVE-2024-1234", "now", "!"});
  CHECK(tokenize("rolled-out v2.1 to 10.0.3") == std::vector<std::string>{"rolled-out", "v2.1", "to", "10.0.3"});
  CHECK(tokenize("RHSA-2018:1852, (urgent)") ==
        std::vector<std::string>{"RHSA-2018:1852", ",", "(", "urgent", ")"});
  CHECK(tokenize("end. Next") == std::vector<std::string>{"end", ".", "Next"});
  CHECK(tokenize("   ").empty());
  CHECK(normalize_token("NeSSus") == "nessus");
  const std::vector<std::string> t{"a", "b", "c"};
  CHECK(join_tokens(t) == "a b c");
  CHECK(join_tokens(t, 1, 3) == "b c");
}

TEST_CASE("joined tokens re-tokenize to the same tokens") {
  const auto corpus = generate_synthetic_corpus(SyntheticCorpusSpec::defaults());
  for (const auto& r : corpus.records()) {
    const auto tokens = r.tokens();
    CHECK(tokenize(join_tokens(tokens)) == tokens);
  }
}

TEST_CASE("jsonl schema mapping") {
  const auto corpus = parse_jsonl_corpus(R"({"id":"t1","clean_text":"patch now","relevant":1,"entities":[]})");
  REQUIRE(corpus.size() == 1);
  CHECK(corpus.records()[0].label == 1);
  CHECK(corpus.records()[0].provenance == Provenance::real);
  CHECK(corpus.label_index().at(1) == std::vector<std::string>{"t1"});
  CHECK(corpus.count(0) == 0);
}

TEST_CASE("jsonl errors name the record") {
  CHECK_THROWS_WITH_AS(
      parse_jsonl_corpus(
          R"({"id":"t9","clean_text":"patch now","relevant":1,"entities":[{"start":1,"end":3,"surface":"now","type":"product"}]})"),
      doctest::Contains("span out of range"), ValidationError);
  CHECK_THROWS_WITH_AS(
      parse_jsonl_corpus(
          R"({"id":"t9","clean_text":"patch now","relevant":1,"entities":[{"start":1,"end":3,"surface":"now","type":"product"}]})"),
      doctest::Contains("t9"), ValidationError);
  CHECK_THROWS_AS(parse_jsonl_corpus(R"({"id":"a","clean_text":"x","relevant":2})"), ValidationError);
  CHECK_THROWS_AS(parse_jsonl_corpus(R"({"id":"a","clean_text":"","relevant":1})"), ValidationError);
  CHECK_THROWS_AS(parse_jsonl_corpus("{\"id\":\"a\",\"clean_text\":\"x\",\"relevant\":1}\n"
                                     "{\"id\":\"a\",\"clean_text\":\"y\",\"relevant\":0}"),
                  ValidationError);
  CHECK_THROWS_WITH_AS(parse_jsonl_corpus("{\"id\":\"a\",\"clean_text\":\"x\",\"relevant\":1}\nnot json"),
                       doctest::Contains("line 2"), ValidationError);
  CHECK_THROWS_AS(
      parse_jsonl_corpus(
          R"({"id":"a","clean_text":"x y","relevant":1,"entities":[{"start":0,"end":1,"surface":"x","type":"planet"}]})"),
      ValidationError);
  CHECK_THROWS_AS(
      parse_jsonl_corpus(
          R"({"id":"a","clean_text":"x y","relevant":1,"entities":[{"start":0,"end":2,"surface":"x y","type":"product"},{"start":1,"end":2,"surface":"y","type":"product"}]})"),
      ValidationError);
  TextRecord long_text;
  long_text.id = "l";
  long_text.clean_text = std::string(257, 'a');
  CHECK_THROWS_AS(validate_record(long_text), ValidationError);
}

TEST_CASE("csv loading uses the original column names") {
  const auto corpus = parse_csv_corpus("id,clean_tweet,relevant\n1,\"patch, now\",1\n2,nice day,0\n");
  REQUIRE(corpus.size() == 2);
  CHECK(corpus.records()[0].clean_text == "patch, now");
  CHECK(corpus.count(0) == 1);
  CHECK_THROWS_AS(parse_csv_corpus("id,text\n1,x\n"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_csv_corpus("id,clean_tweet,relevant\n1,x,yes\n"), doctest::Contains("row 2"),
                       ValidationError);
}

TEST_CASE("jsonl round trip through a file") {
  const auto corpus = generate_synthetic_corpus([] {
    auto s = SyntheticCorpusSpec::defaults();
    s.n_records = 50;
    return s;
  }());
  const auto path = temp_path("roundtrip.jsonl");
  write_corpus(corpus, path);
  const auto loaded = load_corpus(path, CorpusFormat::jsonl);
  CHECK(loaded.records() == corpus.records());
  CHECK(loaded.lexicons() == corpus.lexicons());
  CHECK_THROWS_AS(load_corpus(temp_path("missing.jsonl"), CorpusFormat::jsonl), ValidationError);
  CHECK(parse_corpus_format("csv") == CorpusFormat::csv);
  CHECK_THROWS_AS(parse_corpus_format("xml"), ValidationError);
}

TEST_CASE("entity lexicons group by type and group") {
  const auto corpus = parse_jsonl_corpus(
      R"({"id":"a","clean_text":"ApacheMINA has xss and rce","relevant":1,"entities":[)"
      R"({"start":0,"end":1,"surface":"ApacheMINA","type":"product"},)"
      R"({"start":2,"end":3,"surface":"xss","type":"vulnerability","group":"attack_type"},)"
      R"({"start":4,"end":5,"surface":"rce","type":"vulnerability","group":"attribute"}]})");
  const auto& lex = corpus.lexicons();
  CHECK(lex.at({EntityType::product, std::string(kDefaultGroup)}) == std::set<std::string>{"ApacheMINA"});
  CHECK(lex.at({EntityType::vulnerability, "attack_type"}) == std::set<std::string>{"xss"});
  CHECK(lex.at({EntityType::vulnerability, "attribute"}) == std::set<std::string>{"rce"});
  CHECK(lex.size() == 3);
}

TEST_CASE("stratified split") {
  auto spec = SyntheticCorpusSpec::defaults();
  spec.n_records = 100;
  const auto corpus = generate_synthetic_corpus(spec);
  const auto s = split(corpus, {0.8, 0.1, 0.1}, 7);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& r : part->records()) CHECK(ids.insert(r.id).second);
  }
  CHECK(ids.size() == 100);
  const auto again = split(corpus, {0.8, 0.1, 0.1}, 7);
  CHECK(again.train.records() == s.train.records());

  const auto half = split(corpus, {0.5, 0.5, 0.0}, 7);
  CHECK(half.test.empty());
  CHECK_THROWS_WITH_AS(split(corpus, {0.9, 0.2, 0.1}, 7), "fractions must sum to 1", ValidationError);
}

TEST_CASE("split keeps label proportions within two points") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    auto spec = SyntheticCorpusSpec::defaults();
    spec.n_records = 200 + rng.index(800);
    spec.positive_fraction = rng.uniform(0.2, 0.8);
    spec.seed = rng.next();
    const auto corpus = generate_synthetic_corpus(spec);
    const double whole = static_cast<double>(corpus.count(1)) / static_cast<double>(corpus.size());
    const auto s = split(corpus, {0.8, 0.1, 0.1}, rng.next());
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      const double frac = static_cast<double>(part->count(1)) / static_cast<double>(part->size());
      CHECK(std::abs(frac - whole) <= 0.02 + 1.0 / static_cast<double>(part->size()));
    }
  }
}

TEST_CASE("synthetic corpus contract") {
  auto spec = SyntheticCorpusSpec::defaults();
  spec.n_records = 4;
  spec.positive_fraction = 0.5;
  spec.seed = 1;
  CHECK(generate_synthetic_corpus(spec).count(1) == 2);

  spec.n_records = 300;
  const auto a = generate_synthetic_corpus(spec);
  const auto b = generate_synthetic_corpus(spec);
  CHECK(a.records() == b.records());

  const auto& lexicon = tables::security_lexicon();
  for (const auto& r : a.records()) {
    bool has_security = false;
    for (const auto& t : r.tokens()) has_security = has_security || lexicon.contains(normalize_token(t));
    CHECK(has_security == (r.label == 1));
    CHECK_NOTHROW(validate_record(r));
  }

  auto empty = SyntheticCorpusSpec::defaults();
  empty.security_lexicon.clear();
  CHECK_THROWS_AS(generate_synthetic_corpus(empty), ValidationError);
  auto overlapping = SyntheticCorpusSpec::defaults();
  overlapping.distractor_lexicons.begin()->second.insert(*overlapping.security_lexicon.begin());
  CHECK_THROWS_AS(generate_synthetic_corpus(overlapping), ValidationError);
  auto bad_fraction = SyntheticCorpusSpec::defaults();
  bad_fraction.positive_fraction = 1.0;
  CHECK_THROWS_AS(generate_synthetic_corpus(bad_fraction), ValidationError);
}

TEST_CASE("rate formatting against known confusion counts") {
  CHECK(format_rate(9402.0 / (9402.0 + 332.0), 2) == "0.97");
  CHECK(format_rate(97865.0 / (97865.0 + 12875.0), 2) == "0.88");
  CHECK(format_rate(19266.0 / (19266.0 + 4282.0), 2) == "0.82");
  CHECK(format_f1(2 * 0.93 * 0.94 / (0.93 + 0.94)) == "0.9349");
  CHECK(format_f1(2 * 0.49 * 0.69 / (0.49 + 0.69)) == "0.5730");
  CHECK(format_optional(std::nullopt, 2).empty());
  CHECK(format_truncated(0.99999, 2) == "0.99");
  CHECK(format_rate(0.126, 2) == "0.13");
  CHECK(format_rate(0.125, 2) == "0.12");
  CHECK(std::stod(format_exact(0.1)) == 0.1);
}

TEST_CASE("csv writer and atomic files") {
  CsvWriter csv({"a", "b"});
  csv.row({"1", "x,y"}).row({"2", "say \"hi\""});
  CHECK(csv.str() == "a,b\n1,\"x,y\"\n2,\"say \"\"hi\"\"\"\n");
  CHECK_THROWS_AS(csv.row({"only one"}), std::logic_error);

  const auto path = temp_path("atomic.txt");
  write_file_atomic(path, "hello");
  CHECK(read_text_file(path) == "hello");
  CHECK(sha256_file(path) == sha256_hex("hello"));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
