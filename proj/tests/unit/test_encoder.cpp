#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "aurora/autodiff.hpp"
#include "aurora/encoder.hpp"
#include "aurora/errors.hpp"
#include "aurora/objectives.hpp"
#include "aurora/relational.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aurora;
using testutil::randn;

namespace {

ModelBundle zeroed(ModelBundle b) {
  for (auto& p : b.params)
    for (auto& v : p.value.data()) v = 0.0;
  return b;
}

Tensor& mutable_param(ModelBundle& b, const std::string& name) {
  for (auto& p : b.params)
    if (p.name == name) return p.value;
  throw ContractError("missing " + name);
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  c.subspaces = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.latent = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero parameters give zero embeddings") {
  const auto b = zeroed(ModelBundle::init(Method::aurora, EncoderConfig{}, 1));
  const auto e = encode(b, randn(1, 32, 2).reshaped({32}));
  for (double v : e.z.data()) CHECK(v == 0.0);
  for (const auto& c : e.components)
    for (double v : c.data()) CHECK(v == 0.0);
}

TEST_CASE("K=2 with the second head zeroed leaves z equal to the first component") {
  EncoderConfig cfg;
  cfg.subspaces = 2;
  auto b = ModelBundle::init(Method::aurora, cfg, 3);
  for (auto& v : mutable_param(b, "head.1.weight").data()) v = 0.0;
  for (auto& v : mutable_param(b, "head.1.bias").data()) v = 0.0;
  const auto e = encode(b, randn(1, 32, 4).reshaped({32}));
  CHECK(e.z == e.components[0]);
}

TEST_CASE("reconstruction identity over a 256 batch") {
  for (auto m : kAllMethods) {
    const auto b = ModelBundle::init(m, EncoderConfig{}, 5);
    const auto e = encode_batch(b, randn(256, 32, 6));
    Tensor sum = Tensor::zeros(256, 32);
    for (const auto& c : e.components)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += c[i];
    CHECK(max_abs_diff(sum, e.z) < 1e-9);
  }
}

TEST_CASE("encode_batch rows are independent") {
  const auto b = ModelBundle::init(Method::aurora, EncoderConfig{}, 7);
  const Tensor x = randn(6, 32, 8);
  const auto all = encode_batch(b, x);
  const auto single = encode(b, x.row(2).size() ? Tensor({32}, std::vector<double>(x.row(2).begin(), x.row(2).end())) : Tensor());
  for (std::size_t j = 0; j < 32; ++j) CHECK(single.z[j] == all.z(2, j));
  const std::vector<std::size_t> perm = {5, 3, 1, 0, 2, 2};
  const auto permuted = encode_batch(b, take_rows(x, perm));
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (std::size_t j = 0; j < 32; ++j) CHECK(permuted.z(r, j) == all.z(perm[r], j));
  CHECK(encode_batch(b, x).z == all.z);
}

TEST_CASE("parameter budgets are within ten percent") {
  std::vector<std::size_t> counts;
  for (auto m : kAllMethods) counts.push_back(ModelBundle::init(m, EncoderConfig{}, 1).trainable_count());
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  CHECK(static_cast<double>(*hi) <= 1.1 * static_cast<double>(*lo));
  // backbone 32*64+64 + 64*64+64, four heads 64*32+32
  CHECK(counts[0] == 2112 + 4160 + 4 * 2080);
}

TEST_CASE("teacher mirrors the student") {
  const auto b = ModelBundle::init(Method::distill, EncoderConfig{}, 9);
  REQUIRE(b.teacher.size() == b.params.size());
  for (std::size_t i = 0; i < b.params.size(); ++i) {
    CHECK(b.teacher[i].name == b.params[i].name);
    CHECK(b.teacher[i].value.same_shape(b.params[i].value));
  }
}

TEST_CASE("ema_update examples") {
  std::vector<Parameter> t = {{"w", Tensor::scalar(0.0)}};
  const std::vector<Parameter> s = {{"w", Tensor::scalar(2.0)}};
  auto a = t;
  ema_update(a, s, 1.0);
  CHECK(a[0].value.item() == 0.0);
  a = t;
  ema_update(a, s, 0.0);
  CHECK(a[0].value.item() == 2.0);
  a = t;
  ema_update(a, s, 0.5);
  CHECK(a[0].value.item() == 1.0);
  std::vector<Parameter> wrong = {{"w", Tensor::zeros(2, 1)}};
  CHECK_THROWS_AS(ema_update(wrong, s, 0.5), ContractError);
}

TEST_CASE("every parameter receives gradient from the aurora loss") {
  const EncoderConfig cfg;
  const auto b = ModelBundle::init(Method::aurora, cfg, 10);
  std::vector<bool> touched(b.params.size(), false);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor x = randn(32, 32, 20 + s);
    std::vector<RelationGraph> graphs;
    for (auto f : kAllFactors) {
      auto g = build_graph(randn(32, 2, 40 + s + 7 * index(f)), f, 4);
      g.factor = f;
      graphs.push_back(g);
    }
    std::vector<std::size_t> batch(32);
    std::iota(batch.begin(), batch.end(), 0);
    const auto pairs = sample_pairs(graphs, batch);
    ad::Tape tape;
    const BoundParams p(tape, b.params, true);
    const auto enc = encode_graph(p, cfg, tape.constant(x));
    const auto report = aurora_loss(AuroraLossConfig{}, enc.components, pairs);
    tape.backward(report.loss);
    for (std::size_t i = 0; i < b.params.size(); ++i) {
      const Tensor g = p.vars()[i].grad();
      for (double v : g.data())
        if (v != 0.0) touched[i] = true;
    }
  }
  for (std::size_t i = 0; i < b.params.size(); ++i) {
    CAPTURE(b.params[i].name);
    CHECK(touched[i]);
  }
}

TEST_CASE("checkpoint round trip is byte exact") {
  for (auto m : kAllMethods) {
    const auto b = ModelBundle::init(m, EncoderConfig{}, 11);
    std::stringstream s1;
    save_checkpoint(s1, b);
    const std::string bytes = s1.str();
    CHECK(bytes.substr(0, 4) == "AURM");
    std::stringstream in(bytes);
    const auto back = load_checkpoint(in);
    CHECK(back.method == m);
    REQUIRE(back.params.size() == b.params.size());
    for (std::size_t i = 0; i < b.params.size(); ++i) CHECK(back.params[i].value == b.params[i].value);
    std::stringstream s2;
    save_checkpoint(s2, back);
    CHECK(s2.str() == bytes);
  }
}

TEST_CASE("corrupted checkpoints are rejected") {
  const auto b = ModelBundle::init(Method::aurora, EncoderConfig{}, 12);
  std::stringstream s;
  save_checkpoint(s, b);
  std::string bytes = s.str();
  SUBCASE("flipped payload byte") {
    bytes[bytes.size() / 2] ^= 0x5a;
    std::stringstream in(bytes);
    CHECK_THROWS(load_checkpoint(in));
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    std::stringstream in(bytes);
    CHECK_THROWS(load_checkpoint(in));
  }
  SUBCASE("truncated") {
    std::stringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS(load_checkpoint(in));
  }
}
