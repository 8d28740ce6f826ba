#include "helpers.hpp"

#include "hrg/evaluator.hpp"
#include "hrg/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace hrg;

namespace {

constexpr double pi = std::numbers::pi;

// Point-in-rectangle in the rectangle's own frame.
bool inside(const GraspRectangle& g, double h_ratio, double x, double y) {
  const double u = (x - g.x) * std::cos(g.theta) + (y - g.y) * std::sin(g.theta);
  const double v = -(x - g.x) * std::sin(g.theta) + (y - g.y) * std::cos(g.theta);
  return std::abs(u) <= g.width / 2 && std::abs(v) <= g.width * h_ratio / 2;
}

// Grid-sampled IoU over the joint bounding box.
double sampled_iou(const GraspRectangle& a, const GraspRectangle& b, double step) {
  const double ra = a.width * 0.6, rb = b.width * 0.6;
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double y0 = std::min(a.y - ra, b.y - rb), y1 = std::max(a.y + ra, b.y + rb);
  long both = 0, either = 0;
  for (double y = y0 + step / 2; y < y1; y += step) {
    for (double x = x0 + step / 2; x < x1; x += step) {
      const bool ia = inside(a, 0.5, x, y), ib = inside(b, 0.5, x, y);
      both += ia && ib;
      either += ia || ib;
    }
  }
  return either ? static_cast<double>(both) / static_cast<double>(either) : 0.0;
}

GraspRectangle rigid(const GraspRectangle& g, double angle, double tx, double ty) {
  GraspRectangle out = g;
  out.x = std::cos(angle) * g.x - std::sin(angle) * g.y + tx;
  out.y = std::sin(angle) * g.x + std::cos(angle) * g.y + ty;
  out.theta = g.theta + angle;
  return out;
}

Sample tagged_sample(GraspRectangle rect, std::uint8_t tag) {
  Sample s;
  s.depth = MapF::Constant(300, 300, 0.5f);
  s.rgb = RgbImage(300, 300, tag);
  s.rects = {rect};
  s.source = "s" + std::to_string(tag);
  return s;
}

// Label oracle that turns every angle by 45° on samples whose red channel is bright.
class CorruptingOracle : public Predictor {
 public:
  std::string name() const override { return "corrupting"; }
  GraspMaps predict(const Prepared& p) override {
    if (p.input(0, 1, 0, 0) < 0.5f) return p.target;
    auto rects = p.rects;
    for (auto& r : rects) r.theta = normalize_angle(r.theta + pi / 4);
    return encode_labels(rects, p.target.rows(), p.target.cols());
  }
};

}  // namespace

TEST_CASE("iou: identical, disjoint, zero area") {
  const GraspRectangle a{50, 50, 0.3, 40};
  CHECK(rect_iou(a, a) == doctest::Approx(1));
  CHECK(rect_iou(a, GraspRectangle{150, 50, 0.3, 40}) == 0);
  CHECK(rect_iou(a, GraspRectangle{50, 50, 0.3, 0}) == 0);
}

TEST_CASE("iou: unit squares offset by half a side") {
  const GraspRectangle a{0.5, 0.5, 0, 1}, b{1.0, 1.0, 0, 1};
  CHECK(std::abs(rect_iou(a, b, 1.0) - 0.25 / 1.75) < 1e-6);
  Polygon p{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, q{{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}};
  CHECK(std::abs(convex_iou(p, q) - 0.142857) < 1e-6);
}

TEST_CASE("iou: polygon clipping agrees with a sampled oracle on 1000 random pairs") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(-10, 10), th(-pi / 2, pi / 2), w(8, 40);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const GraspRectangle a{pos(rng), pos(rng), th(rng), w(rng)}, b{pos(rng), pos(rng), th(rng), w(rng)};
    worst = std::max(worst, std::abs(rect_iou(a, b) - sampled_iou(a, b, 0.1)));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("iou: symmetric, bounded, invariant to a shared rigid motion") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pos(0, 40), th(-pi, pi), w(5, 50), shift(-300, 300);
  for (int i = 0; i < 500; ++i) {
    const GraspRectangle a{pos(rng), pos(rng), th(rng), w(rng)}, b{pos(rng), pos(rng), th(rng), w(rng)};
    const double iou = rect_iou(a, b);
    CHECK(iou >= 0);
    CHECK(iou <= 1);
    CHECK(std::abs(iou - rect_iou(b, a)) < 1e-12);
    const double angle = th(rng), tx = shift(rng), ty = shift(rng);
    CHECK(std::abs(iou - rect_iou(rigid(a, angle, tx, ty), rigid(b, angle, tx, ty))) < 1e-6);
    // θ ± π describes the same rectangle.
    GraspRectangle flipped = a;
    flipped.theta += pi;
    CHECK(rect_iou(a, flipped) == doctest::Approx(1));
  }
}

TEST_CASE("match: threshold rule examples") {
  const GraspRectangle gt{100, 100, 0.2, 50};
  const std::vector<GraspRectangle> truths{GraspRectangle{10, 10, 1.0, 20}, gt};
  CHECK(is_match(gt, truths));
  GraspRectangle turned = gt;
  turned.theta += pi / 4;
  CHECK_FALSE(is_match(turned, std::vector{GraspRectangle{gt.x, gt.y, gt.theta, gt.width}}));
  const double deg = pi / 180;
  const GraspRectangle plus{100, 100, 89 * deg, 50}, minus{100, 100, -89 * deg, 50};
  CHECK(rect_iou(plus, minus) > 0.9);
  CHECK(is_match(plus, std::vector{minus}));
  CHECK(angle_difference(89 * deg, -89 * deg) == doctest::Approx(2 * deg));
  // Just over and under the angle limit.
  CHECK(is_match(GraspRectangle{100, 100, 0.2 + 29 * deg, 50}, std::vector{gt}));
  CHECK_FALSE(is_match(GraspRectangle{100, 100, 0.2 + 31 * deg, 50}, std::vector{gt}));
  // Same angle, shifted far enough that the overlap drops below a quarter.
  CHECK_FALSE(is_match(GraspRectangle{140, 100, 0.2, 50}, std::vector{gt}));
}

TEST_CASE("match: invariant to θ ± π on either side") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(40, 60), th(-pi / 2, pi / 2), w(20, 60);
  for (int i = 0; i < 500; ++i) {
    GraspRectangle p{pos(rng), pos(rng), th(rng), w(rng)}, g{pos(rng), pos(rng), th(rng), w(rng)};
    const bool base = is_match(p, std::vector{g});
    for (double s : {pi, -pi}) {
      GraspRectangle p2 = p, g2 = g;
      p2.theta += s;
      g2.theta -= s;
      CHECK(is_match(p2, std::vector{g}) == base);
      CHECK(is_match(p, std::vector{g2}) == base);
    }
  }
}

TEST_CASE("evaluate: label oracle scores 1, zero maps score 0") {
  const auto ds = make_synthetic(6, 4);
  std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  EvalOptions opt;
  opt.record_timing = false;
  LabelOracle oracle;
  const auto good = evaluate(oracle, ds, all, opt);
  CHECK(good.metrics.accuracy == 1.0);
  CHECK(good.metrics.matched == 6);
  CHECK(good.metrics.total == 6);
  ZeroPredictor zero;
  const auto bad = evaluate(zero, ds, all, opt);
  CHECK(bad.metrics.accuracy == 0.0);
  CHECK(bad.metrics.mean_ms == 0.0);
}

TEST_CASE("evaluate: half of twenty corrupted by 45 degrees scores one half") {
  Dataset ds;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(-pi / 2, pi / 2), w(30, 70);
  for (int i = 0; i < 20; ++i) ds.samples.push_back(tagged_sample({150, 150, th(rng), w(rng)}, i % 2 ? 255 : 0));
  std::vector<std::size_t> all(20);
  std::iota(all.begin(), all.end(), 0);
  CorruptingOracle model;
  const auto r = evaluate(model, ds, all, {});
  CHECK(r.metrics.accuracy == 0.5);
  for (std::size_t i = 0; i < 20; ++i) CHECK(r.outcomes[i] == (i % 2 ? 0 : 1));
  CHECK(r.metrics.mean_ms > 0);
}

TEST_CASE("evaluate: samples without labels are excluded with a warning; channel mismatch rejected") {
  Dataset ds;
  ds.samples.push_back(tagged_sample({150, 150, 0, 40}, 0));
  ds.samples.push_back(tagged_sample({150, 150, 0, 40}, 0));
  ds.samples[1].rects.clear();
  EvalOptions opt;
  opt.record_timing = false;
  LabelOracle oracle;
  const auto r = evaluate(oracle, ds, {0, 1}, opt);
  CHECK(r.metrics.total == 1);
  CHECK(r.metrics.accuracy == 1.0);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.outcomes == std::vector<int>{1, -1});
  CHECK_THROWS_AS(evaluate(oracle, ds, {5}, opt), std::out_of_range);

  ModelConfig m;
  m.input_channels = 1;
  m.branch_channels = {4, 6, 8, 10};
  m.blocks_per_stage = {1, 1, 1, 1};
  auto net = HrgNet<float>::build(m, 0);
  NetPredictor np(net);
  CHECK_THROWS_AS(evaluate(np, ds, {0}, opt), std::invalid_argument);
}

TEST_CASE("results: mean row and table formats") {
  std::vector<ResultRow> rows;
  for (int f = 0; f < 5; ++f) rows.push_back({"hrgnet", "rgbd", "iw", std::to_string(f), 0.1 * (f + 1), 2.0 * f, f + 1, 10});
  const auto m = mean_row(rows);
  CHECK(m.fold == "mean");
  CHECK(std::abs(m.accuracy - 0.3) < 1e-12);
  CHECK(m.ms == doctest::Approx(4.0));
  CHECK(m.matched == 15);
  CHECK(m.total == 50);
  const auto tsv = format_tsv(rows);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 6);
  CHECK(format_table(rows).find("hrgnet") != std::string::npos);
}
