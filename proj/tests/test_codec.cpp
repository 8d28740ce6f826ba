#include "helpers.hpp"

#include "hrg/grasp.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hrg;

namespace {

constexpr double pi = std::numbers::pi;

// Painted-region membership written from the rule: center third along the
// jaw-travel axis, full plate length across it.
bool painted(double x, double y, double theta, double w, double row, double col) {
  const double u = (col - x) * std::cos(theta) + (row - y) * std::sin(theta);
  const double v = -(col - x) * std::sin(theta) + (row - y) * std::cos(theta);
  return std::abs(u) <= w / 6 + 1e-9 && std::abs(v) <= w / 4 + 1e-9;
}

Index count_painted(const MapF& q) { return (q == 1.0f).count(); }

// Angular distance modulo π.
double angle_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), pi);
  return std::min(d, pi - d);
}

}  // namespace

TEST_CASE("angle: encoding examples and the ±π/2 symmetry") {
  auto a = angle_encode(0);
  CHECK(a.sin2 == doctest::Approx(0).epsilon(1e-12));
  CHECK(a.cos2 == doctest::Approx(1));
  a = angle_encode(pi / 4);
  CHECK(a.sin2 == doctest::Approx(1));
  CHECK(std::abs(a.cos2) < 1e-12);
  const auto up = angle_encode(pi / 2), down = angle_encode(-pi / 2);
  CHECK(std::abs(up.sin2) < 1e-12);
  CHECK(std::abs(down.sin2) < 1e-12);
  CHECK(up.cos2 == doctest::Approx(-1));
  CHECK(down.cos2 == doctest::Approx(-1));
}

TEST_CASE("angle: zero vector decodes to 0 with the degenerate flag") {
  const auto d = angle_decode(0, 0);
  CHECK(d.theta == 0);
  CHECK(d.degenerate);
  CHECK_FALSE(angle_decode(0, 1).degenerate);
}

TEST_CASE("angle: decode of encode is the identity modulo π over 1000 random angles") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> any(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const double t = any(rng);
    const auto code = angle_encode(t);
    const auto back = angle_decode(code.sin2, code.cos2);
    REQUIRE(back.theta >= -pi / 2);
    REQUIRE(back.theta < pi / 2);
    REQUIRE(angle_gap(back.theta, t) < 1e-6);
  }
}

TEST_CASE("angle: normalization wraps into [-π/2, π/2)") {
  CHECK(normalize_angle(pi / 2) == doctest::Approx(-pi / 2));
  CHECK(normalize_angle(-pi / 2) == doctest::Approx(-pi / 2));
  CHECK(normalize_angle(pi) == doctest::Approx(0).epsilon(1e-12));
  CHECK(normalize_angle(0.3 + 5 * pi) == doctest::Approx(0.3));
}

TEST_CASE("encode: empty list gives four zero maps") {
  const auto m = encode_labels({}, 20, 30);
  CHECK(m.rows() == 20);
  CHECK(m.cols() == 30);
  for (const MapF* p : {&m.quality, &m.sin2, &m.cos2, &m.width}) CHECK((*p == 0.0f).all());
}

TEST_CASE("encode: one rectangle at the center, θ 0, w 60") {
  const GraspRectangle r{112, 112, 0, 60, 0, 0};
  const auto m = encode_labels(std::vector{r}, 224, 224);
  for (Index row = 0; row < 224; ++row) {
    for (Index col = 0; col < 224; ++col) {
      const bool in = painted(112, 112, 0, 60, row, col);
      REQUIRE(m.quality(row, col) == (in ? 1.0f : 0.0f));
      if (in) {
        REQUIRE(m.cos2(row, col) == doctest::Approx(1));
        REQUIRE(m.sin2(row, col) == doctest::Approx(0));
        REQUIRE(m.width(row, col) == doctest::Approx(0.4));
      } else {
        REQUIRE(m.width(row, col) == 0.0f);
        REQUIRE(m.cos2(row, col) == 0.0f);
      }
    }
  }
  // 21 columns (|dx| <= 10) by 31 rows (|dy| <= 15).
  CHECK(count_painted(m.quality) == 21 * 31);
}

TEST_CASE("encode: disjoint rectangles paint the sum of their individual counts") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> th(-pi / 2, pi / 2), w(10, 70);
  for (int trial = 0; trial < 50; ++trial) {
    const GraspRectangle a{60, 60, th(rng), w(rng)}, b{160, 150, th(rng), w(rng)};
    const auto ma = encode_labels(std::vector{a}, 224, 224);
    const auto mb = encode_labels(std::vector{b}, 224, 224);
    const auto both = encode_labels(std::vector{a, b}, 224, 224);
    CHECK(count_painted(both.quality) == count_painted(ma.quality) + count_painted(mb.quality));

    Index oracle = 0;
    for (Index row = 0; row < 224; ++row)
      for (Index col = 0; col < 224; ++col) oracle += painted(a.x, a.y, a.theta, a.width, row, col);
    CHECK(count_painted(ma.quality) == oracle);
  }
}

TEST_CASE("encode: overlaps keep the first angle, width clamps at 150") {
  const GraspRectangle first{50, 50, 0, 30}, second{52, 50, pi / 4, 300};
  const auto m = encode_labels(std::vector{first, second}, 100, 100);
  CHECK(m.cos2(50, 50) == doctest::Approx(1));
  CHECK(m.width(50, 50) == doctest::Approx(0.2));
  // A pixel only the second one covers.
  REQUIRE(painted(52, 50, pi / 4, 300, 50, 80));
  CHECK(m.sin2(50, 80) == doctest::Approx(1));
  CHECK(m.width(50, 80) == 1.0f);
}

TEST_CASE("encode: out-of-image centers are rejected") {
  CHECK_THROWS_AS(encode_labels(std::vector{GraspRectangle{-1, 5, 0, 20}}, 50, 50), std::invalid_argument);
  CHECK_THROWS_AS(encode_labels(std::vector{GraspRectangle{5, 50, 0, 20}}, 50, 50), std::invalid_argument);
}

TEST_CASE("decode: all-zero quality gives nothing") {
  CHECK(decode_grasps(GraspMaps::zeros(64, 64)).empty());
}

TEST_CASE("decode: one rectangle round trip at θ 0.3, w 80, (100, 60)") {
  const GraspRectangle r{100, 60, 0.3, 80};
  const auto out = decode_grasps(encode_labels(std::vector{r}, 224, 224));
  REQUIRE(out.size() == 1);
  CHECK(std::abs(out[0].x - 100) <= 2);
  CHECK(std::abs(out[0].y - 60) <= 2);
  CHECK(angle_gap(out[0].theta, 0.3) <= 0.05);
  CHECK(std::abs(out[0].width - 80) <= 5);
}

TEST_CASE("decode: two separated rectangles with k = 2, ordered by quality then index") {
  // The smaller rectangle smooths to a lower peak, so it comes second.
  const GraspRectangle big{150, 40, 0.2, 90}, small{60, 170, -0.7, 24};
  DecodeOptions opt;
  opt.max_grasps = 2;
  const auto out = decode_grasps(encode_labels(std::vector{small, big}, 224, 224), opt);
  REQUIRE(out.size() == 2);
  CHECK(out[0].quality >= out[1].quality);
  CHECK(std::abs(out[0].x - 150) <= 2);
  CHECK(std::abs(out[0].y - 40) <= 2);
  CHECK(std::abs(out[1].x - 60) <= 2);
  CHECK(std::abs(out[1].y - 170) <= 2);
  CHECK(angle_gap(out[1].theta, -0.7) <= 0.05);

  // Equal rectangles: row-major order decides.
  const GraspRectangle lower{60, 170, 0, 60}, upper{160, 50, 0, 60};
  const auto tie = decode_grasps(encode_labels(std::vector{lower, upper}, 224, 224), opt);
  REQUIRE(tie.size() == 2);
  CHECK(tie[0].y < tie[1].y);
}

TEST_CASE("decode: suppression keeps peaks 10 px apart and honours the threshold") {
  GraspMaps m = GraspMaps::zeros(64, 64);
  m.quality(20, 20) = 1.0f;
  m.quality(20, 25) = 0.9f;
  m.quality(50, 50) = 0.8f;
  DecodeOptions opt;
  opt.max_grasps = 3;
  opt.sigma = 0;
  const auto out = decode_grasps(m, opt);
  REQUIRE(out.size() == 2);
  CHECK(out[0].x == doctest::Approx(20));
  CHECK(out[1].x == doctest::Approx(50));
  opt.min_quality = 0.95;
  CHECK(decode_grasps(m, opt).size() == 1);
}

TEST_CASE("decode: round trip over 500 random rectangles") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(-pi / 2, pi / 2), w(20, 150), pos(0, 1);
  int failures = 0;
  for (int i = 0; i < 500; ++i) {
    const double width = w(rng);
    const double margin = width / 2 + 2;
    const GraspRectangle r{margin + pos(rng) * (224 - 2 * margin), margin + pos(rng) * (224 - 2 * margin), th(rng), width};
    const auto out = decode_grasps(encode_labels(std::vector{r}, 224, 224));
    const bool ok = out.size() == 1 && std::abs(out[0].x - r.x) <= 2 && std::abs(out[0].y - r.y) <= 2 &&
                    angle_gap(out[0].theta, r.theta) <= 0.05 && std::abs(out[0].width - r.width) <= 5;
    if (!ok) {
      ++failures;
      MESSAGE("rect " << format_grasp(r) << " decoded " << (out.empty() ? "nothing" : format_grasp(out[0])));
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("decode: deterministic") {
  std::mt19937_64 rng(4);
  GraspMaps m = GraspMaps::zeros(48, 48);
  m.quality = testing::random_tensor({1, 1, 48, 48}, rng, 0, 1).channel(0, 0).array();
  DecodeOptions opt;
  opt.max_grasps = 5;
  const auto a = decode_grasps(m, opt), b = decode_grasps(m, opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(format_grasp(a[i]) == format_grasp(b[i]));
}

TEST_CASE("entropy: uniform, one-hot, all-zero and negative") {
  MapF q = MapF::Constant(12, 9, 0.3f);
  CHECK(q_entropy(q) == doctest::Approx(std::log(108.0)).epsilon(1e-9));
  q.setZero();
  CHECK(q_entropy(q) == doctest::Approx(std::log(108.0)));
  q(3, 4) = 2.0f;
  CHECK(q_entropy(q) == doctest::Approx(0).epsilon(1e-12));
  q(0, 0) = -0.1f;
  CHECK_THROWS_AS(q_entropy(q), std::invalid_argument);
}

TEST_CASE("entropy: matches a direct summation on random maps") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    MapF q(17, 23);
    for (Index i = 0; i < q.size(); ++i) q.data()[i] = u(rng);
    q(0, 0) = 0;  // zero mass contributes nothing
    long double total = 0;
    for (Index i = 0; i < q.size(); ++i) total += q.data()[i];
    long double h = 0;
    for (Index i = 0; i < q.size(); ++i) {
      const long double p = q.data()[i] / total;
      if (p > 0) h -= p * std::log(p);
    }
    CHECK(std::abs(q_entropy(q) - static_cast<double>(h)) < 1e-9);
  }
}

TEST_CASE("entropy: maximal on uniform, drops when any pixel of a uniform map is raised") {
  std::mt19937_64 rng(6);
  const MapF uniform = MapF::Constant(10, 10, 0.5f);
  const double top = q_entropy(uniform);
  for (int trial = 0; trial < 50; ++trial) {
    MapF q = uniform;
    const Index i = std::uniform_int_distribution<Index>(0, 99)(rng);
    q.data()[i] += std::uniform_real_distribution<float>(0.01f, 3.0f)(rng);
    CHECK(q_entropy(q) < top);
    MapF r(10, 10);
    for (Index k = 0; k < 100; ++k) r.data()[k] = std::uniform_real_distribution<float>(0.01f, 1)(rng);
    CHECK(q_entropy(r) <= top + 1e-12);
  }
}

TEST_CASE("text: grasp lines round trip and bad lines are rejected") {
  const GraspRectangle g{10.5, 20.25, -0.75, 42, 0.6, 0.9};
  const auto back = parse_grasp(format_grasp(g));
  CHECK(back.x == doctest::Approx(g.x));
  CHECK(back.y == doctest::Approx(g.y));
  CHECK(back.theta == doctest::Approx(g.theta));
  CHECK(back.width == doctest::Approx(g.width));
  CHECK(back.z == doctest::Approx(g.z));
  CHECK(back.quality == doctest::Approx(g.quality));
  CHECK_THROWS(parse_grasp("1 2 3"));
  CHECK_THROWS(parse_grasp("a b c d e f"));
}
