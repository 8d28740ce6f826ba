#include "helpers.hpp"

#include "hrg/blocks.hpp"
#include "hrg/gradcheck.hpp"
#include "hrg/kernels.hpp"

#include <doctest.h>

#include <cmath>

using namespace hrg;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

using K = kernels::NormMode;

/// conv -> BN(train) -> optional ReLU from the raw kernels.
Tensord unit(ParamStore<double>& p, const std::string& prefix, const Tensord& x, Index stride, Index pad, bool relu) {
  Tensord y = kernels::conv2d(x, p.at(prefix + ".conv.weight"), p.at(prefix + ".conv.bias"), stride, pad);
  auto stats = p.running(prefix + ".bn");
  y = kernels::batchnorm2d(y, p.at(prefix + ".bn.gamma"), p.at(prefix + ".bn.beta"), stats, 0.1, 1e-5, K::train);
  if (relu) y.values() = y.values().cwiseMax(0.0);
  return y;
}

/// Random gammas and betas so the composition check is not trivially near zero.
void randomize_norms(ParamStore<double>& p, std::mt19937_64& rng) {
  for (auto& [name, e] : p.entries()) {
    if (e.role == ParamRole::norm) e.value = random_tensor<double>(e.value.shape(), rng, 0.5, 1.5);
    if (e.role == ParamRole::bias) e.value = random_tensor<double>(e.value.shape(), rng);
  }
}

void zero_cross_paths(ParamStore<double>& p) {
  for (auto& [name, e] : p.entries()) {
    const bool weight = name.ends_with(".conv.weight");
    const bool beta = name.ends_with(".bn.beta");
    if (weight || beta || name.ends_with(".conv.bias")) e.value.set_zero();
  }
}

}  // namespace

TEST_CASE("stem: quarter resolution for any channel count, zero input stays zero") {
  for (Index cin : {1, 3, 4}) {
    auto p = init_block_params<float>({BlockKind::stem, cin, {18}}, 0);
    Graph<float> g;
    Binding<float> b(g, p, K::train);
    const auto y = stem(b, g.input(Tensorf(Shape{1, cin, 224, 224})), "block");
    CHECK(g.value(y).shape() == Shape{1, 18, 56, 56});
    CHECK(g.value(y).values().cwiseAbs().maxCoeff() == 0.0f);
  }
  auto p = init_block_params<float>({BlockKind::stem, 4, {18}}, 0);
  Graph<float> g;
  Binding<float> b(g, p, K::train);
  CHECK_THROWS_AS(stem(b, g.input(Tensorf(Shape{1, 4, 30, 30})), "block"), std::invalid_argument);
}

TEST_CASE("residual block: zero residual path is the identity on non-negative input") {
  std::mt19937_64 rng(1);
  auto p = init_block_params<double>({BlockKind::residual, 0, {6}}, 3);
  zero_cross_paths(p);
  const auto x = random_tensor<double>({2, 6, 8, 8}, rng, 0, 2);
  Graph<double> g;
  Binding<double> b(g, p, K::train);
  CHECK(g.value(residual_block(b, g.input(x), "block")) == x);
}

TEST_CASE("residual block: matches an independent composition of kernels") {
  std::mt19937_64 rng(2);
  auto p = init_block_params<double>({BlockKind::residual, 0, {5}}, 4);
  randomize_norms(p, rng);
  const auto x = random_tensor<double>({2, 5, 7, 7}, rng);
  auto ref_store = p;
  Tensord y = unit(ref_store, "block.unit1", x, 1, 1, true);
  y = unit(ref_store, "block.unit2", y, 1, 1, false);
  y.values() = (y.values() + x.values()).cwiseMax(0.0);

  Graph<double> g;
  Binding<double> b(g, p, K::train);
  const auto out = residual_block(b, g.input(x), "block");
  CHECK(g.value(out).shape() == x.shape());
  CHECK(max_abs_diff(g.value(out), y) < 1e-6);

  Graph<double> h;
  Binding<double> wrong(h, p, K::train);
  CHECK_THROWS_AS(residual_block(wrong, h.input(Tensord(Shape{1, 4, 7, 7})), "block"), std::invalid_argument);
}

TEST_CASE("fuse layer: preserves shapes; identity when cross paths are zero") {
  std::mt19937_64 rng(3);
  auto p = init_block_params<double>({BlockKind::fuse, 0, {18, 36}}, 5);
  Graph<double> g;
  Binding<double> b(g, p, K::train);
  const auto x0 = random_tensor<double>({1, 18, 56, 56}, rng, 0, 1);
  const auto x1 = random_tensor<double>({1, 36, 28, 28}, rng, 0, 1);
  const auto out = fuse_layer(b, {g.input(x0), g.input(x1)}, "block");
  CHECK(g.value(out[0]).shape() == x0.shape());
  CHECK(g.value(out[1]).shape() == x1.shape());

  zero_cross_paths(p);
  Graph<double> h;
  Binding<double> z(h, p, K::train);
  const auto same = fuse_layer(z, {h.input(x0), h.input(x1)}, "block");
  CHECK(h.value(same[0]) == x0);
  CHECK(h.value(same[1]) == x1);

  CHECK_THROWS_AS(fuse_layer(z, {h.input(x0)}, "block"), std::invalid_argument);
  CHECK_THROWS_AS(fuse_layer(z, {h.input(x0), h.input(Tensord(Shape{1, 36, 27, 28}))}, "block"),
                  std::invalid_argument);
}

TEST_CASE("fuse layer: three branches match an independent recomposition") {
  std::mt19937_64 rng(4);
  const std::vector<Index> ch{3, 4, 5};
  auto p = init_block_params<double>({BlockKind::fuse, 0, ch}, 6);
  randomize_norms(p, rng);
  std::vector<Tensord> xs;
  for (std::size_t r = 0; r < 3; ++r) {
    xs.push_back(random_tensor<double>({2, ch[r], 16 >> r, 16 >> r}, rng));
  }
  auto ref_store = p;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensord acc = xs[i];
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const std::string path = "block." + std::to_string(j) + "_to_" + std::to_string(i);
      Tensord t = xs[j];
      if (j < i) {
        for (std::size_t k = 0; k < i - j; ++k) t = unit(ref_store, path + ".down" + std::to_string(k), t, 2, 1, k + 1 < i - j);
      } else {
        t = kernels::bilinear_upsample(t, Index{1} << (j - i));
        t = unit(ref_store, path + ".up", t, 1, 0, false);
      }
      acc.values() += t.values();
    }
    acc.values() = acc.values().cwiseMax(0.0);

    Graph<double> g;
    auto store = p;
    Binding<double> b(g, store, K::train);
    std::vector<Graph<double>::Id> ids;
    for (const auto& x : xs) ids.push_back(g.input(x));
    const auto out = fuse_layer(b, ids, "block");
    CAPTURE(i);
    CHECK(max_abs_diff(g.value(out[i]), acc) < 1e-6);
  }
}

TEST_CASE("init: deterministic, He-scaled weights, unit gamma and zero beta, unit running variance") {
  const auto a = init_block_params<float>({BlockKind::residual, 0, {18}}, 9);
  const auto b = init_block_params<float>({BlockKind::residual, 0, {18}}, 9);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != init_block_params<float>({BlockKind::residual, 0, {18}}, 10).flatten());

  // 18 -> 18 3x3 kernels: 2916 draws per conv; gather enough convs for >= 1e4.
  auto big = init_block_params<double>({BlockKind::fuse, 0, {18, 18, 18, 18, 18}}, 11);
  double sum = 0, sq = 0;
  Index n = 0;
  for (const auto& [name, e] : big.entries()) {
    if (e.role != ParamRole::weight || e.value.shape().h != 3) continue;
    sum += e.value.values().sum();
    sq += e.value.values().squaredNorm();
    n += e.value.size();
  }
  REQUIRE(n >= 10000);
  const double stdev = std::sqrt(sq / n - (sum / n) * (sum / n));
  const double expected = std::sqrt(2.0 / (9 * 18));
  CHECK(std::abs(stdev - expected) / expected < 0.2);

  for (const auto& [name, e] : a.entries()) {
    if (name.ends_with(".gamma")) CHECK((e.value.values().array() == 1.0f).all());
    if (name.ends_with(".beta") || name.ends_with(".bias")) CHECK((e.value.values().array() == 0.0f).all());
  }
  for (const auto& [prefix, s] : a.running_stats()) {
    CHECK((s.mean.values().array() == 0.0f).all());
    CHECK((s.var.values().array() == 1.0f).all());
  }
}

TEST_CASE("blocks are gradient-checkable end to end") {
  std::mt19937_64 rng(12);
  auto store = init_block_params<double>({BlockKind::fuse, 0, {3, 4}}, 13);
  auto res = init_block_params<double>({BlockKind::residual, 0, {3}}, 14, "res");
  for (auto& [name, e] : res.entries()) store.add(name, e.value, e.role);
  for (auto& [prefix, s] : res.running_stats()) store.running_stats()[prefix] = s;
  randomize_norms(store, rng);
  store.add("in0", random_tensor<double>({2, 3, 8, 8}, rng), ParamRole::bias);
  store.add("in1", random_tensor<double>({2, 4, 4, 4}, rng), ParamRole::bias);
  const auto t0 = random_tensor<double>({2, 3, 8, 8}, rng), t1 = random_tensor<double>({2, 4, 4, 4}, rng);

  const auto loss = [&](Graph<double>& g, Binding<double>& b) {
    const auto y0 = residual_block(b, b.param("in0"), "res");
    const auto out = fuse_layer(b, {y0, b.param("in1")}, "block");
    return g.add(g.mse(out[0], g.input(t0)), g.mse(out[1], g.input(t1)));
  };
  Graph<double> g;
  Binding<double> b(g, store, K::train);
  b.bind_all();
  const auto grads = g.backward(loss(g, b));

  double worst = 0;
  int probes = 0;
  for (auto& [name, e] : store.entries()) {
    for (int k = 0; k < 2; ++k) {
      const Index idx = std::uniform_int_distribution<Index>(0, e.value.size() - 1)(rng);
      const double orig = e.value[idx], h = 1e-5;
      double f[2];
      for (int side = 0; side < 2; ++side) {
        e.value[idx] = orig + (side ? -h : h);
        Graph<double> q;
        Binding<double> qb(q, store, K::train);
        f[side] = q.value(loss(q, qb))[0];
      }
      e.value[idx] = orig;
      worst = std::max(worst, relative_error(grads.at(name)[idx], (f[0] - f[1]) / (2 * h)));
      ++probes;
    }
  }
  CHECK(probes >= 20);
  CHECK(worst < 1e-3);
}
