#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include "tarpro/data.hpp"

using namespace tarpro;

TEST_CASE("two moons: zero points per domain gives an empty dataset") {
  const Dataset d = default_two_moons({0, 15}, 0, 0.1, 1);
  CHECK(d.empty());
  CHECK(d.num_domains() == 2);
}

TEST_CASE("two moons: rotation by zero equals the base sample bitwise") {
  const Dataset d = gen_two_moons({ShiftSpec::rotation(0.0, 5)}, 40, 0.1, 9);
  const auto base = two_moons_base(40, 0.1, 9, 0, 5);
  REQUIRE(d.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(d.examples[i] == base[i]);
}

TEST_CASE("two moons: same seed gives identical datasets, different seed differs") {
  const auto a = default_two_moons({0, 15, 30, 45}, 60, 0.08, 3);
  const auto b = default_two_moons({0, 15, 30, 45}, 60, 0.08, 3);
  const auto c = default_two_moons({0, 15, 30, 45}, 60, 0.08, 4);
  CHECK(a == b);
  CHECK(!(a == c));
}

TEST_CASE("two moons: labels are those of the unshifted base point") {
  const double angle = 45.0;
  const Dataset d = gen_two_moons({ShiftSpec::rotation(angle, 2)}, 50, 0.08, 11);
  const auto base = two_moons_base(50, 0.08, 11, 0, 2);
  const double th = angle * std::numbers::pi / 180.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double dx = base[i].x[0] - 0.5;
    const double dy = base[i].x[1] - 0.25;
    CHECK(d.examples[i].x[0] == doctest::Approx(0.5 + std::cos(th) * dx - std::sin(th) * dy).epsilon(1e-12));
    CHECK(d.examples[i].x[1] == doctest::Approx(0.25 + std::sin(th) * dx + std::cos(th) * dy).epsilon(1e-12));
    CHECK(d.examples[i].label == base[i].label);
  }
}

TEST_CASE("two moons: equal class priors; odd counts round down") {
  const Dataset d = default_two_moons({0, 30}, 101, 0.1, 0);
  for (int dom = 0; dom < 2; ++dom) {
    CHECK(d.count(dom, 0) == 50);
    CHECK(d.count(dom, 1) == 50);
  }
}

TEST_CASE("gaussian classes: identity shift puts the two means at (+-1, 0)") {
  const Dataset d = gen_gaussian_classes({ShiftSpec::none()}, 10, 2, 2, 1, 0.0);
  for (const auto& e : d.examples) {
    CHECK(e.x[0] == doctest::Approx(e.label == 0 ? 1.0 : -1.0));
    CHECK(e.x[1] == doctest::Approx(0.0));
  }
}

TEST_CASE("gaussian classes: scale 2 doubles every coordinate") {
  const Dataset a = gen_gaussian_classes({ShiftSpec::none(3)}, 30, 3, 4, 8);
  const Dataset b = gen_gaussian_classes({ShiftSpec::affine(0.0, {}, 2.0, 3)}, 30, 3, 4, 8);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a.dim; ++k) CHECK(b.examples[i].x[k] == doctest::Approx(2.0 * a.examples[i].x[k]));
  }
}

TEST_CASE("gaussian classes: equal priors in every domain") {
  const Dataset d = gen_gaussian_classes({ShiftSpec::none(), ShiftSpec::rotation(40, 1)}, 90, 3, 3, 2);
  for (int dom = 0; dom < 2; ++dom) {
    for (int c = 0; c < 3; ++c) CHECK(d.count(dom, c) == 30);
  }
  CHECK_THROWS_AS(gen_gaussian_classes({ShiftSpec::none()}, 10, 1, 2, 0), ShapeError);
}

TEST_CASE("csv: round trip is exact") {
  const Dataset d = default_two_moons({0, 15}, 20, 0.1, 5);
  const auto path = std::filesystem::temp_directory_path() / "tarpro_test_data.csv";
  save_csv(d, path);
  const Dataset back = load_csv(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(back.examples[i] == d.examples[i]);
  CHECK(back.dim == 2);
  CHECK(back.num_classes == 2);
}

TEST_CASE("csv: header only gives an empty dataset") {
  const Dataset d = parse_csv("domain,label,x0,x1\n");
  CHECK(d.empty());
  CHECK(d.dim == 2);
}

TEST_CASE("csv: malformed input names the line") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_csv(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("domain,label,x0\n0,1,0.5\n0,1,abc\n") == 3);
  CHECK(line_of("domain,label,x0\n0,1,0.5,0.7\n") == 2);
  CHECK(line_of("dom,label,x0\n") == 1);
  CHECK_THROWS_WITH_AS(parse_csv("domain,label,x0\n0,0,zz\n"), doctest::Contains("line 2"), ParseError);
}

TEST_CASE("split: fraction 1 keeps everything, 0 keeps nothing, 0.5 halves each cell") {
  const Dataset d = default_two_moons({0, 15, 30}, 200, 0.1, 1);
  CHECK(subsample_fraction(d, 1.0, 3) == d);
  CHECK(subsample_fraction(d, 0.0, 3).empty());
  const auto [a, b] = split(d, 0.5, 3);
  for (int dom = 0; dom < 3; ++dom) {
    for (int c = 0; c < 2; ++c) {
      CHECK(a.count(dom, c) == 50);
      CHECK(b.count(dom, c) == 50);
    }
  }
  CHECK(split(d, 0.5, 3).first == a);
}

TEST_CASE("split: stratified proportions hold to within one example") {
  const Dataset d = default_two_moons({0, 15}, 74, 0.1, 2);
  for (double f : {0.2, 0.4, 0.6, 0.8}) {
    const Dataset s = subsample_fraction(d, f, 7);
    for (int dom = 0; dom < 2; ++dom) {
      for (int c = 0; c < 2; ++c) {
        const double want = f * static_cast<double>(d.count(dom, c));
        CHECK(std::abs(static_cast<double>(s.count(dom, c)) - want) <= 1.0);
      }
    }
  }
}
