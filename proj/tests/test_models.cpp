#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ctirb/classifier.hpp"
#include "ctirb/saliency.hpp"

using namespace ctirb;

namespace {

Corpus small_corpus(std::size_t n = 120, std::uint64_t seed = 3) {
  auto spec = SyntheticCorpusSpec::defaults();
  spec.n_records = n;
  spec.seed = seed;
  return generate_synthetic_corpus(spec);
}

ClassifierConfig tiny_classifier() {
  ClassifierConfig c;
  c.embed_dim = 8;
  c.filters = 4;
  c.widths = {2, 3};
  return c;
}

SaliencyConfig tiny_saliency() {
  SaliencyConfig c;
  c.embed_dim = 8;
  c.hidden = 6;
  return c;
}

TrainConfig quick(std::size_t epochs = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.seed = 11;
  return t;
}

Corpus only_label(const Corpus& c, int label) {
  std::vector<TextRecord> out;
  for (const auto& r : c.records()) {
    if (r.label == label) out.push_back(r);
  }
  return Corpus(std::move(out));
}

TextRecord record(std::string id, std::string text, int label = 1) {
  TextRecord r;
  r.id = std::move(id);
  r.raw_text = text;
  r.clean_text = std::move(text);
  r.label = label;
  return r;
}

}  // namespace

TEST_CASE("vocabulary reserves pad and unk") {
  const auto v = Vocabulary::build(small_corpus(30));
  CHECK(v.tokens()[0] == "<pad>");
  CHECK(v.tokens()[1] == "<unk>");
  CHECK(v.id("never-seen-token-xyz") == Vocabulary::kUnk);
  CHECK(Vocabulary::from_json(v.to_json()) == v);
  CHECK(v.encode({"a", "b", "c"}, 2).size() == 2);
}

TEST_CASE("rates leave undefined ratios empty") {
  ConfusionMatrix m;
  m.add(0, 1);
  m.add(0, 1);
  m.add(0, 0);
  const auto r = compute_rates(m);
  CHECK(*r.fpr == doctest::Approx(2.0 / 3.0));
  CHECK_FALSE(r.tpr.has_value());
  CHECK(*r.precision == 0.0);
  CHECK_FALSE(r.f1.has_value());
  CHECK(f1_score(0.5, 1.0).value() == doctest::Approx(2.0 / 3.0));
  CHECK(confusion_at({0.2, 0.5, 0.9}, {0, 1, 0}, 0.5) == ConfusionMatrix{1, 1, 1, 0});
  CHECK_THROWS_AS(confusion_at({0.2}, {0, 1}, 0.5), ValidationError);
}

TEST_CASE("zero dense head gives probability one half and a positive label") {
  ClassifierModel model(Vocabulary::build(small_corpus(30)), tiny_classifier(), 5);
  auto& head = std::get<nn::Dense>(model.graph().layers().back());
  head.weight().value.fill(0.0);
  head.bias().value.fill(0.0);
  const auto p = model.predict(record("x", "patch the server now"));
  CHECK(p.probability == 0.5);
  CHECK(p.label == 1);
}

TEST_CASE("records made only of unseen tokens still classify") {
  ClassifierModel model(Vocabulary::build(small_corpus(30)), tiny_classifier(), 5);
  const auto p = model.predict(record("u", "qqqzz wwwxx"));
  CHECK(p.probability > 0.0);
  CHECK(p.probability < 1.0);
  CHECK(model.encode(record("u", "qqqzz wwwxx")) == std::vector<int>{Vocabulary::kUnk, Vocabulary::kUnk});
}

TEST_CASE("classifier training rejects single-class data and bad configs") {
  const auto corpus = small_corpus();
  CHECK_THROWS_WITH_AS(train_classifier(only_label(corpus, 1), Corpus{}, tiny_classifier(), quick()),
                       doctest::Contains("single-class"), ValidationError);
  auto bad = tiny_classifier();
  bad.widths.clear();
  CHECK_THROWS_AS(train_classifier(corpus, Corpus{}, bad, quick()), ValidationError);
  auto zero_epochs = quick();
  zero_epochs.epochs = 0;
  CHECK_THROWS_AS(train_classifier(corpus, Corpus{}, tiny_classifier(), zero_epochs), ValidationError);
}

TEST_CASE("same seed gives identical checkpoints") {
  const auto corpus = small_corpus();
  const auto a = train_classifier(corpus, Corpus{}, tiny_classifier(), quick());
  const auto b = train_classifier(corpus, Corpus{}, tiny_classifier(), quick());
  CHECK(a.model.to_json() == b.model.to_json());
  CHECK(a.selected_epoch == 3);
  const auto restored = ClassifierModel::from_json(a.model.to_json());
  for (const auto& r : corpus.records()) CHECK(restored.predict(r).probability == a.model.predict(r).probability);
}

TEST_CASE("retraining with no injected records equals plain training") {
  const auto corpus = small_corpus();
  const auto before = corpus.records();
  const auto plain = train_classifier(corpus, Corpus{}, tiny_classifier(), quick());
  const auto retrained = retrain_with(corpus, {}, Corpus{}, tiny_classifier(), quick());
  CHECK(plain.model.to_json() == retrained.model.to_json());
  CHECK(corpus.records() == before);

  auto bad = record("bad", "patch now", 2);
  CHECK_THROWS_WITH_AS(retrain_with(corpus, {bad}, Corpus{}, tiny_classifier(), quick()),
                       doctest::Contains("invalid label"), ValidationError);
}

TEST_CASE("injected records enlarge the training set") {
  const auto corpus = small_corpus();
  std::vector<TextRecord> injected;
  for (int i = 0; i < 7; ++i) injected.push_back(record("inj-" + std::to_string(i), "routine cloud migration", 1));
  const auto trained = retrain_with(corpus, injected, Corpus{}, tiny_classifier(), quick(1));
  // vocabulary is rebuilt from base plus injected records
  CHECK(trained.model.vocabulary().id("routine") != Vocabulary::kUnk);
}

TEST_CASE("classifier learns the synthetic task") {
  const auto corpus = small_corpus(400, 9);
  const auto s = split(corpus, {0.8, 0.1, 0.1}, 7);
  const auto trained = train_classifier(s.train, s.val, tiny_classifier(), quick(8));
  const auto eval = evaluate(trained.model, s.test);
  CHECK(eval.confusion.total() == s.test.size());
  CHECK(eval.rates.f1.value_or(0.0) > 0.8);
  CHECK(trained.history.size() <= 8);
  CHECK(trained.history.front().val_f1.has_value());

  // selection keeps the last epoch reaching the best validation F1
  std::size_t expected = 0;
  double best = -1.0;
  for (const auto& e : trained.history) {
    if (*e.val_f1 >= best) {
      best = *e.val_f1;
      expected = e.epoch;
    }
  }
  CHECK(trained.selected_epoch == expected);
}

TEST_CASE("softmax of ln2 and 0 is two thirds and one third") {
  const std::vector<double> x{std::log(2.0), 0.0};
  const auto a = nn::softmax(x);
  CHECK(a[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // the same weights come out of the attention layer when tanh(h.w + b) = ln 2
  Rng rng(1);
  nn::Attention attention("att", 2, rng);
  attention.weight().value.values = {1.0, 0.0};
  attention.bias().value.values = {0.0};
  auto h = nn::Tensor::matrix(2, 2);
  h.at(0, 0) = std::atanh(std::log(2.0));
  nn::LayerCache cache;
  attention.forward(h, cache);
  CHECK(cache.steps[0].values[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("zero attention parameters give uniform weights") {
  SaliencyModel model(Vocabulary::build(small_corpus(30)), tiny_saliency(), 4);
  model.attention().weight().value.fill(0.0);
  model.attention().bias().value.fill(0.0);
  const auto p = model.attention_weights(record("r", "patch the exchange server before friday"));
  REQUIRE(p.alpha.size() == 6);
  for (double a : p.alpha) CHECK(a == doctest::Approx(1.0 / 6.0));
  // all tied, so the lowest indices win
  CHECK(p.top_k == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("attention weights sum to one") {
  const auto corpus = small_corpus(60);
  SaliencyModel model(Vocabulary::build(corpus), tiny_saliency(), 8);
  for (const auto& r : corpus.records()) {
    const auto p = model.attention_weights(r);
    CHECK(std::accumulate(p.alpha.begin(), p.alpha.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    for (double a : p.alpha) CHECK(a > 0.0);
    CHECK(p.top_k.size() == std::min<std::size_t>(3, p.tokens.size()));
  }
  CHECK_THROWS_AS(model.attention_weights("e", {}), ValidationError);
}

TEST_CASE("top-k selection") {
  CHECK(top_k_indices({0.1, 0.4, 0.4, 0.1}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_k_indices({0.3, 0.1, 0.6}, 3) == std::vector<std::size_t>{2, 0, 1});
  CHECK(top_k_indices({0.7, 0.3}, 3) == std::vector<std::size_t>{0, 1});
  CHECK(top_k_indices({0.25, 0.25, 0.25, 0.25}, 1) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(top_k_indices({1.0}, 0), ValidationError);

  SaliencyModel model(Vocabulary::build(small_corpus(30)), tiny_saliency(), 4);
  const auto p = model.attention_weights(record("two", "patch now"));
  CHECK(p.top_k.size() == 2);
  CHECK(p.key_tokens().size() == 2);
}

TEST_CASE("saliency training is deterministic and rejects single-class data") {
  const auto corpus = small_corpus();
  CHECK_THROWS_WITH_AS(train_saliency(only_label(corpus, 0), Corpus{}, tiny_saliency(), quick()),
                       doctest::Contains("single-class"), ValidationError);
  const auto a = train_saliency(corpus, Corpus{}, tiny_saliency(), quick(2));
  const auto b = train_saliency(corpus, Corpus{}, tiny_saliency(), quick(2));
  CHECK(a.model.to_json() == b.model.to_json());
  const auto restored = SaliencyModel::from_json(a.model.to_json());
  const auto& r = corpus.records().front();
  CHECK(restored.attention_weights(r).alpha == a.model.attention_weights(r).alpha);
}
