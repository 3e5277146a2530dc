#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ctirb/nn.hpp"

using namespace ctirb;
using namespace ctirb::nn;

namespace {

std::vector<int> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> ids(n);
  for (int& id : ids) id = static_cast<int>(rng.index(vocab));
  return ids;
}

// Biases start at zero; give them values so their gradients are exercised.
void randomize_biases(Graph& g, Rng& rng) {
  for (Parameter* p : g.parameters()) {
    if (p->name.ends_with(".bias")) {
      for (double& v : p->value.values) v = rng.uniform(-0.5, 0.5);
    }
  }
}

double total_loss(const Graph& g, const std::vector<std::vector<int>>& xs, const std::vector<double>& ys) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) loss += bce_with_logits(g.forward(xs[i]).output.values[0], ys[i]);
  return loss;
}

}  // namespace

TEST_CASE("sigmoid and softmax reference values") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  auto a = softmax(std::vector<double>{0.0, 0.0});
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.5));
  auto b = softmax(std::vector<double>{std::log(2.0), 0.0});
  CHECK(b[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(b[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax is a distribution for bounded inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + rng.index(12));
    for (double& v : x) v = rng.uniform(-50.0, 50.0);
    const auto p = softmax(x);
    for (double v : p) CHECK(v >= 0.0);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("bce gradient at p = 0.5") {
  double d = 0.0;
  const double loss = bce_with_logits(0.0, 1.0, &d);
  CHECK(d == doctest::Approx(-0.5));
  CHECK(loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("dense 1x1 chain rule") {
  Rng rng(1);
  Embedding emb(1, 1, rng);
  emb.table().value.values = {3.0};
  Dense dense("d", 1, 1, rng);
  dense.weight().value.values = {2.0};
  Graph g(emb, {dense});
  const int id = 0;
  Trace t = g.forward(std::span<const int>(&id, 1));
  CHECK(t.output.values[0] == doctest::Approx(6.0));
  Tensor dx = g.backward(t, Tensor::matrix(1, 1, 1.0));
  CHECK(dx.values[0] == doctest::Approx(2.0));
  CHECK(std::get<Dense>(g.layers()[0]).weight().grad.values[0] == doctest::Approx(3.0));
  CHECK(g.embedding().table().grad.values[0] == doctest::Approx(2.0));
}

TEST_CASE("forward rejects out-of-vocabulary ids and mismatched layers") {
  Rng rng(2);
  Graph g(Embedding(4, 3, rng), {Dense("d", 3, 1, rng)});
  const std::vector<int> bad{0, 4};
  CHECK_THROWS_AS(g.forward(bad), ValidationError);
  Graph mismatched(Embedding(4, 3, rng), {Dense("d", 5, 1, rng)});
  const std::vector<int> ok{1};
  CHECK_THROWS_AS(mismatched.forward(ok), ValidationError);
}

TEST_CASE("grad_check is exact for a linear model") {
  Rng rng(3);
  Embedding emb(1, 1, rng);
  emb.table().value.values = {-1.7};
  Dense dense("d", 1, 1, rng);
  dense.weight().value.values = {0.4};
  const std::vector<int> ids{0};
  // L is not linear in w, but every gradient is large and smooth here, so
  // the central difference is accurate to rounding.
  const auto r = grad_check(Graph(emb, {dense}), ids);
  CHECK(r.max_relative_error <= 1e-10);
}

TEST_CASE("grad_check rejects bad steps") {
  Rng rng(3);
  Graph g(Embedding(2, 2, rng), {Dense("d", 2, 1, rng)});
  const std::vector<int> ids{0, 1};
  CHECK_THROWS_AS(grad_check(g, ids, 0.0), ValidationError);
  CHECK_THROWS_AS(grad_check(g, ids, 0.1), ValidationError);
}

TEST_CASE("two-layer dense net matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const std::size_t d = 1 + rng.index(4), h = 1 + rng.index(4);
    Graph g(Embedding(5, d, rng),
            {Dense("l1", d, h, rng), Activation(ActivationKind::tanh), Dense("l2", h, 1, rng)});
    randomize_biases(g, rng);
    const auto ids = random_ids(rng, 1 + rng.index(4), 5);
    CHECK(grad_check(g, ids).max_relative_error <= 1e-4);
  }
}

TEST_CASE("LSTM with H=3 over 4 steps") {
  Rng rng(7);
  Graph g(Embedding(6, 4, rng),
          {Lstm("lstm", 4, 3, rng), Attention("att", 3, rng), Dense("out", 3, 1, rng)});
  const std::vector<int> ids{1, 4, 2, 5};
  CHECK(grad_check(g, ids).max_relative_error <= 1e-4);
}

TEST_CASE("every layer type passes grad_check over ten seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t vocab = 9;
    const std::size_t d = 2 + rng.index(7);
    const std::size_t n = 1 + rng.index(6);
    const auto ids = random_ids(rng, n, vocab);

    {
      INFO("embedding + dense + sigmoid, seed " << seed);
      Graph g(Embedding(vocab, d, rng), {Dense("a", d, 1, rng), Activation(ActivationKind::sigmoid)});
      randomize_biases(g, rng);
      CHECK(grad_check(g, ids).max_relative_error <= 1e-4);
    }
    {
      INFO("conv + maxpool + relu + dense, seed " << seed);
      const std::size_t f = 1 + rng.index(4);
      Graph g(Embedding(vocab, d, rng), {ConvMaxPool("conv", d, {3, 4, 5}, f, rng), Activation(ActivationKind::relu),
                                         Dense("out", 3 * f, 1, rng)});
      randomize_biases(g, rng);
      CHECK(grad_check(g, ids).max_relative_error <= 1e-4);
    }
    {
      INFO("lstm + attention + dense, seed " << seed);
      const std::size_t h = 1 + rng.index(8);
      Graph g(Embedding(vocab, d, rng), {Lstm("lstm", d, h, rng), Attention("att", h, rng), Dense("out", h, 1, rng)});
      randomize_biases(g, rng);
      CHECK(grad_check(g, ids).max_relative_error <= 1e-4);
    }
    {
      INFO("lstm per-step outputs, seed " << seed);
      const std::size_t h = 1 + rng.index(8);
      Graph g(Embedding(vocab, d, rng), {Lstm("lstm", d, h, rng), Dense("out", h, 1, rng)});
      CHECK(grad_check(g, ids, 1e-5, 0.0).max_relative_error <= 1e-4);
    }
  }
}

TEST_CASE("grad_check steps off an exact pooling tie") {
  Rng rng(5);
  Graph g(Embedding(3, 3, rng), {ConvMaxPool("conv", 3, {3}, 2, rng), Dense("out", 2, 1, rng)});
  // Identical tokens make every window identical, so each filter ties.
  const std::vector<int> ids{2, 2, 2, 2, 2};
  const Trace t = g.forward(ids);
  CHECK(t.kink_margin() == 0.0);
  const auto r = grad_check(g, ids);
  CHECK(r.tie_breaks > 0);
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("max pool picks the lowest index on ties") {
  Rng rng(6);
  ConvMaxPool conv("conv", 1, {1}, 1, rng);
  LayerCache cache;
  Tensor x = Tensor::matrix(4, 1);
  x.values = {0.5, 2.0, 2.0, 1.0};
  auto params = conv.parameters();
  params[0]->value.values = {1.0};
  conv.forward(x, cache);
  CHECK(cache.argmax[0] == 1);
}

TEST_CASE("short sequences are zero-padded for wide filters") {
  Rng rng(8);
  ConvMaxPool conv("conv", 2, {5}, 3, rng);
  LayerCache cache;
  Tensor x = Tensor::matrix(2, 2, 0.3);
  const Tensor out = conv.forward(x, cache);
  CHECK(out.size() == 3);
  const Tensor dx = conv.backward(Tensor::matrix(1, 3, 1.0), cache);
  CHECK(dx.rows() == 2);
}

TEST_CASE("LSTM initialisation shapes and forget bias") {
  Rng rng(9);
  Lstm lstm("l", 5, 4, rng);
  for (Parameter* p : lstm.parameters()) {
    if (p->name.ends_with(".weight")) {
      CHECK(p->value.shape == std::vector<std::size_t>{9, 4});
      const double a = std::sqrt(6.0 / 13.0);
      for (double v : p->value.values) CHECK(std::abs(v) <= a);
    } else {
      CHECK(p->value.shape == std::vector<std::size_t>{1, 4});
      const double expected = p->name == "l.forget.bias" ? 1.0 : 0.0;
      for (double v : p->value.values) CHECK(v == expected);
    }
  }
}

TEST_CASE("optimizer reference steps") {
  SUBCASE("sgd") {
    Parameter p("w", Tensor::matrix(1, 1, 1.0));
    p.grad.values = {2.0};
    Optimizer opt({.algorithm = Algorithm::sgd, .learning_rate = 0.1});
    std::vector<Parameter*> ps{&p};
    opt.step(ps);
    CHECK(p.value.values[0] == doctest::Approx(0.8));
  }
  SUBCASE("adam first step moves by lr") {
    Parameter p("w", Tensor::matrix(1, 1, 0.0));
    p.grad.values = {1.0};
    Optimizer opt({.algorithm = Algorithm::adam, .learning_rate = 0.01});
    std::vector<Parameter*> ps{&p};
    opt.step(ps);
    // m_hat = 1, v_hat = 1 -> update = lr / (1 + eps)
    CHECK(p.value.values[0] == doctest::Approx(-0.01 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("clipping scales the gradient") {
    Parameter p("w", Tensor::matrix(1, 2, 0.0));
    p.grad.values = {0.0, 4.0};
    Optimizer opt({.algorithm = Algorithm::sgd, .learning_rate = 1.0, .clip_norm = 1.0});
    std::vector<Parameter*> ps{&p};
    opt.step(ps);
    CHECK(p.value.values[1] == doctest::Approx(-1.0));
  }
  SUBCASE("non-finite gradient aborts the step") {
    Parameter p("w", Tensor::matrix(1, 2, 0.5));
    p.grad.values = {1.0, std::nan("")};
    Optimizer opt({.algorithm = Algorithm::adam, .learning_rate = 0.1});
    std::vector<Parameter*> ps{&p};
    CHECK_THROWS_AS(opt.step(ps), NonFiniteError);
    CHECK(p.value.values == std::vector<double>{0.5, 0.5});
    CHECK(opt.steps() == 0);
  }
  SUBCASE("invalid configuration") {
    CHECK_THROWS_AS(Optimizer({.learning_rate = 0.0}), ValidationError);
    CHECK_THROWS_AS(Optimizer({.beta1 = 1.0}), ValidationError);
  }
}

namespace {

struct Toy {
  Graph graph;
  std::vector<std::vector<int>> xs;
  std::vector<double> ys;
};

Toy make_toy(std::uint64_t seed) {
  Rng rng(seed);
  Toy toy{Graph(Embedding(6, 4, rng), {ConvMaxPool("conv", 4, {3}, 4, rng), Activation(ActivationKind::relu),
                                       Dense("out", 4, 1, rng)}),
          {},
          {}};
  // tokens 0-2 mark class 0, tokens 3-5 mark class 1
  for (int i = 0; i < 12; ++i) {
    const int base = (i % 2) * 3;
    toy.xs.push_back({base + i % 3, base + (i + 1) % 3, base + (i + 2) % 3, base});
    toy.ys.push_back(static_cast<double>(i % 2));
  }
  return toy;
}

void sgd_epoch(Toy& toy, Optimizer& opt) {
  toy.graph.zero_grad();
  for (std::size_t i = 0; i < toy.xs.size(); ++i) {
    Trace t = toy.graph.forward(toy.xs[i]);
    Tensor d(t.output.shape, 0.0);
    bce_with_logits(t.output.values[0], toy.ys[i], &d.values[0]);
    toy.graph.backward(t, d);
  }
  auto params = toy.graph.parameters();
  opt.step(params);
}

}  // namespace

TEST_CASE("loss decreases over the first five SGD steps on a separable batch") {
  Toy toy = make_toy(21);
  Optimizer opt({.algorithm = Algorithm::sgd, .learning_rate = 0.1});
  double previous = total_loss(toy.graph, toy.xs, toy.ys);
  for (int step = 0; step < 5; ++step) {
    sgd_epoch(toy, opt);
    const double now = total_loss(toy.graph, toy.xs, toy.ys);
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("training is bit-identical for identical seeds") {
  Toy a = make_toy(33), b = make_toy(33);
  Optimizer oa({.algorithm = Algorithm::adam, .learning_rate = 0.01});
  Optimizer ob({.algorithm = Algorithm::adam, .learning_rate = 0.01});
  for (int step = 0; step < 10; ++step) {
    sgd_epoch(a, oa);
    sgd_epoch(b, ob);
  }
  auto pa = a.graph.parameters();
  auto pb = b.graph.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.values == pb[i]->value.values);
}

TEST_CASE("checkpoint round trip") {
  Toy trained = make_toy(44);
  Optimizer opt({.algorithm = Algorithm::adam, .learning_rate = 0.05});
  for (int i = 0; i < 3; ++i) sgd_epoch(trained, opt);
  const auto doc = to_json(trained.graph);
  Toy fresh = make_toy(45);
  load_parameters(fresh.graph, nlohmann::json::parse(doc.dump()));
  CHECK(fresh.graph.forward(trained.xs[0]).output == trained.graph.forward(trained.xs[0]).output);

  auto broken = doc;
  broken["parameters"][0]["name"] = "other";
  CHECK_THROWS_AS(load_parameters(fresh.graph, broken), ValidationError);
  broken = doc;
  broken["format_version"] = 99;
  CHECK_THROWS_AS(load_parameters(fresh.graph, broken), ValidationError);
}
