#include "hrg/gradcheck.hpp"

#include "hrg/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace hrg {

namespace {

using G = Graph<double>;
using Id = G::Id;

Tensord random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensord t(s);
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

/// Values bounded away from zero, so a probe never crosses a ReLU kink.
Tensord away_from_zero(const Shape& s, std::mt19937_64& rng) {
  Tensord t = random_tensor(s, rng, 0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < t.size(); ++i) {
    if (sign(rng)) t[i] = -t[i];
  }
  return t;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({1e-6, std::abs(a), std::abs(n)});
}

GradcheckRow check_gradient(const std::string& name, const std::vector<Tensord>& leaves, const LossBuilder& loss,
                            int probes, double step, double tolerance, std::mt19937_64& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto evaluate = [&](const std::vector<Tensord>& values) {
    G g;
    std::vector<Id> ids;
    for (std::size_t i = 0; i < values.size(); ++i) ids.push_back(g.parameter(values[i], "x" + std::to_string(i)));
    return g.value(loss(g, ids))[0];
  };

  G g;
  std::vector<Id> ids;
  for (std::size_t i = 0; i < leaves.size(); ++i) ids.push_back(g.parameter(leaves[i], "x" + std::to_string(i)));
  const auto grads = g.backward(loss(g, ids));

  GradcheckRow row;
  row.op = name;
  std::vector<Tensord> values = leaves;
  for (int p = 0; p < probes; ++p) {
    const std::size_t leaf = static_cast<std::size_t>(p) % leaves.size();
    const Index idx = std::uniform_int_distribution<Index>(0, leaves[leaf].size() - 1)(rng);
    const double original = values[leaf][idx];
    values[leaf][idx] = original + step;
    const double up = evaluate(values);
    values[leaf][idx] = original - step;
    const double down = evaluate(values);
    values[leaf][idx] = original;
    const double numeric = (up - down) / (2 * step);
    const double analytic = grads.at("x" + std::to_string(leaf))[idx];
    row.max_error = std::max(row.max_error, relative_error(analytic, numeric));
    ++row.probes;
  }
  row.passed = row.max_error < tolerance;
  row.seconds = seconds_since(t0);
  return row;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::vector<GradcheckRow> rows;
  const auto check = [&](const std::string& name, std::vector<Tensord> leaves, const LossBuilder& f) {
    rows.push_back(check_gradient(name, leaves, f, o.probes, o.step, o.tolerance, rng));
  };
  // Non-scalar outputs are reduced against a fixed random target.
  const auto against = [&](const Shape& s) {
    auto target = std::make_shared<Tensord>(random_tensor(s, rng));
    return [target](G& g, Id y) { return g.mse(y, g.input(*target)); };
  };

  {
    auto r = against(Shape{2, 4, 6, 6});
    check("conv2d_3x3_s1", {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.conv2d(x[0], x[1], x[2], 1, 1)); });
  }
  {
    auto r = against(Shape{2, 4, 4, 4});
    check("conv2d_3x3_s2", {random_tensor({2, 3, 7, 7}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.conv2d(x[0], x[1], x[2], 2, 1)); });
  }
  {
    auto r = against(Shape{2, 3, 4, 4});
    check("conv2d_1x1", {random_tensor({2, 5, 4, 4}, rng), random_tensor({3, 5, 1, 1}, rng), random_tensor({1, 3, 1, 1}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.conv2d(x[0], x[1], x[2], 1, 0)); });
  }
  {
    auto r = against(Shape{2, 3, 8, 10});
    check("upsample_x2", {random_tensor({2, 3, 4, 5}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.upsample(x[0], 2)); });
  }
  {
    auto r = against(Shape{1, 2, 12, 12});
    check("upsample_x4", {random_tensor({1, 2, 3, 3}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.upsample(x[0], 4)); });
  }
  {
    auto r = against(Shape{3, 4, 3, 3});
    check("batchnorm_train",
          {random_tensor({3, 4, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng, 0.5, 1.5), random_tensor({1, 4, 1, 1}, rng)},
          [r](G& g, const std::vector<Id>& x) {
            kernels::RunningStats<double> stats{Tensord::channel_vector(4, 0.0), Tensord::channel_vector(4, 1.0)};
            return r(g, g.batchnorm(x[0], x[1], x[2], stats, 0.1, 1e-5, kernels::NormMode::train));
          });
  }
  {
    auto r = against(Shape{2, 4, 3, 3});
    auto mean = std::make_shared<Tensord>(random_tensor({1, 4, 1, 1}, rng));
    auto var = std::make_shared<Tensord>(random_tensor({1, 4, 1, 1}, rng, 0.5, 2.0));
    check("batchnorm_eval",
          {random_tensor({2, 4, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng, 0.5, 1.5), random_tensor({1, 4, 1, 1}, rng)},
          [r, mean, var](G& g, const std::vector<Id>& x) {
            kernels::RunningStats<double> stats{*mean, *var};
            return r(g, g.batchnorm(x[0], x[1], x[2], stats, 0.1, 1e-5, kernels::NormMode::eval));
          });
  }
  {
    auto r = against(Shape{2, 3, 4, 4});
    check("relu", {away_from_zero({2, 3, 4, 4}, rng)}, [r](G& g, const std::vector<Id>& x) { return r(g, g.relu(x[0])); });
    check("sigmoid", {random_tensor({2, 3, 4, 4}, rng, -3, 3)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.sigmoid(x[0])); });
    check("tanh", {random_tensor({2, 3, 4, 4}, rng, -2, 2)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.tanh(x[0])); });
    check("add", {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.add(x[0], x[1])); });
    check("scale", {random_tensor({2, 3, 4, 4}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.scale(x[0], -1.7)); });
  }
  {
    auto r = against(Shape{2, 6, 3, 3});
    check("concat", {random_tensor({2, 1, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng), random_tensor({2, 2, 3, 3}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.concat({x[0], x[1], x[2]})); });
  }
  {
    auto r = against(Shape{2, 2, 3, 3});
    check("slice_channels", {random_tensor({2, 5, 3, 3}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.slice_channels(x[0], 1, 2)); });
  }
  {
    auto r = against(Shape{18, 3, 1, 1});
    check("taps_as_pointwise", {random_tensor({2, 3, 3, 3}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.taps_as_pointwise(x[0])); });
  }
  {
    auto r = against(Shape{2, 3, 5, 5});
    check("tap_sum", {random_tensor({2, 27, 5, 5}, rng), random_tensor({1, 3, 1, 1}, rng)},
          [r](G& g, const std::vector<Id>& x) { return r(g, g.tap_sum(x[0], x[1], 3)); });
  }
  check("sum", {random_tensor({2, 3, 4, 4}, rng)}, [](G& g, const std::vector<Id>& x) { return g.sum(g.tanh(x[0])); });
  check("mse", {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)},
        [](G& g, const std::vector<Id>& x) { return g.mse(x[0], x[1]); });
  check("grasp_loss", {random_tensor({2, 4, 5, 5}, rng), random_tensor({2, 4, 5, 5}, rng)},
        [](G& g, const std::vector<Id>& x) { return g.grasp_loss(x[0], x[1]); });
  {
    auto r = against(Shape{1, 4, 16, 16});
    check("head_conv_after_upsample", {random_tensor({1, 5, 4, 4}, rng), random_tensor({4, 5, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng)},
          [r](G& g, const std::vector<Id>& x) {
            const Id zero = g.input(Tensord::channel_vector(36));
            const Id taps = g.upsample(g.conv2d(x[0], g.taps_as_pointwise(x[1]), zero, 1, 0), 4);
            return r(g, g.tap_sum(taps, x[2], 3));
          });
  }

  if (o.include_model) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig cfg;
    cfg.input_channels = 4;
    cfg.branch_channels = {4, 6, 8, 10};
    cfg.blocks_per_stage = {1, 1, 1, 1};
    cfg.input_size = 32;
    auto net = HrgNet<double>::build(cfg, o.seed);
    const Tensord image = random_tensor({o.model_batch, 4, 32, 32}, rng);
    const Tensord target = random_tensor({o.model_batch, 4, 32, 32}, rng, 0.0, 1.0);
    const auto loss_value = [&]() {
      G g;
      auto b = net.bind(g, kernels::NormMode::train);
      return g.value(g.grasp_loss(net.forward(b, g.input(image)), g.input(target)))[0];
    };
    G g;
    auto b = net.bind(g, kernels::NormMode::train);
    b.bind_all();
    const auto grads = g.backward(g.grasp_loss(net.forward(b, g.input(image)), g.input(target)));

    GradcheckRow row;
    row.op = "hrgnet_32x32";
    for (auto& [name, e] : net.params().entries()) {
      for (int p = 0; p < o.model_probes_per_tensor; ++p) {
        const Index idx = std::uniform_int_distribution<Index>(0, e.value.size() - 1)(rng);
        const double original = e.value[idx];
        e.value[idx] = original + o.model_step;
        const double up = loss_value();
        e.value[idx] = original - o.model_step;
        const double down = loss_value();
        e.value[idx] = original;
        const double numeric = (up - down) / (2 * o.model_step);
        row.max_error = std::max(row.max_error, relative_error(grads.at(name)[idx], numeric));
        ++row.probes;
      }
    }
    row.passed = row.max_error < o.tolerance;
    row.seconds = seconds_since(t0);
    rows.push_back(row);
  }
  return rows;
}

std::string format_gradcheck(const std::vector<GradcheckRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-26s %12s %7s %9s %s\n", "op", "max_rel_err", "probes", "seconds", "status");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-26s %12.3e %7d %9.3f %s\n", r.op.c_str(), r.max_error, r.probes, r.seconds,
                  r.passed ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace hrg
