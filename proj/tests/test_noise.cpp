#include "synomaly/noise.hpp"

#include <doctest.h>

#include <cstring>

using namespace synomaly;

namespace {

template <typename Scalar> bool identical(Image<Scalar> const &a, Image<Scalar> const &b)
{
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

double lag1_autocorrelation(Image<double> const &f)
{
  double const mean = f.mean();
  Image<double> const c = f - mean;
  double const var = c.square().mean();
  double const cov = (c.leftCols(f.cols() - 1) * c.rightCols(f.cols() - 1)).mean();
  return cov / var;
}

struct SweepStats
{
  double coverage = 0.0;
  double components = 0.0;
  double area = 0.0;
};

SweepStats sweep(double sigma, double tau, int samples, std::uint64_t seed)
{
  SweepStats s;
  SynomalyParams p;
  p.sigma = sigma;
  p.tau = tau;
  for (int i = 0; i < samples; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    auto const smp = synomaly_noise(64, 64, p, rng);
    auto const cc = connected_components(smp.region_mask);
    s.coverage += static_cast<double>(count(smp.region_mask)) / 4096.0;
    s.components += static_cast<double>(cc.size());
    s.area += cc.empty() ? 0.0 : static_cast<double>(count(smp.region_mask)) / static_cast<double>(cc.size());
  }
  s.coverage /= samples;
  s.components /= samples;
  s.area /= samples;
  return s;
}

} // namespace

TEST_CASE("gaussian noise moments and determinism")
{
  Rng rng(42);
  Image<double> const f = gaussian_noise<double>(128, 128, rng);
  CHECK(std::abs(f.mean()) < 0.05);
  double const var = (f - f.mean()).square().mean();
  CHECK(std::abs(var - 1.0) < 0.1);

  Rng a(7);
  Rng b(7);
  CHECK(identical(gaussian_noise(33, 17, a), gaussian_noise(33, 17, b)));
  Rng c(8);
  Rng d(7);
  CHECK_FALSE(identical(gaussian_noise(33, 17, c), gaussian_noise(33, 17, d)));
  CHECK_THROWS_AS(gaussian_noise(0, 4, a), std::invalid_argument);
}

TEST_CASE("substreams are distinct and reproducible")
{
  Rng const parent(5);
  Rng s1 = parent.substream(1);
  Rng s1b = parent.substream(1);
  Rng s2 = parent.substream(2);
  CHECK(s1.next_u64() == s1b.next_u64());
  CHECK(parent.substream(1).next_u64() != s2.next_u64());
}

TEST_CASE("coarse noise")
{
  CoarseParams const def;
  CHECK(def.resolution == 16);
  CHECK(def.std == doctest::Approx(0.2));

  CoarseParams full{24, 0.2};
  Rng a(3);
  Rng b(3);
  Image2D const coarse = coarse_noise(24, 24, full, a);
  Image2D const white = gaussian_noise(24, 24, b) * 0.2f;
  CHECK(identical(coarse, white));

  // 61 = 15 * 4 + 1, so every low-res node lands on a pixel.
  Rng c(9);
  Rng d(9);
  Image2D const up = coarse_noise(61, 61, def, c);
  Image2D const nodes = gaussian_noise(16, 16, d) * 0.2f;
  for (int j = 0; j < 16; ++j) {
    for (int i = 0; i < 16; ++i) {
      CHECK(up(4 * j, 4 * i) == doctest::Approx(nodes(j, i)).epsilon(1e-6));
    }
  }
}

TEST_CASE("simplex noise")
{
  SimplexParams const def;
  CHECK(def.octaves == 6);
  CHECK(def.persistence == doctest::Approx(0.8));
  CHECK(def.frequency == doctest::Approx(64.0));

  Rng a(11);
  Image<double> const f = simplex_noise<double>(64, 64, def, a);
  CHECK(std::abs(f.mean()) < 1e-9);
  CHECK(std::abs(f.square().mean() - 1.0) < 1e-9);
  Rng b(11);
  CHECK(identical(f, simplex_noise<double>(64, 64, def, b)));

  // One octave is the base lattice layer after rescaling.
  SimplexParams one{1, 0.3, 16.0};
  Rng c(2);
  Rng d(2);
  Image<double> const single = simplex_noise<double>(32, 32, one, c);
  SimplexLattice const lattice(d);
  double const ox = d.uniform(0.0, 256.0);
  double const oy = d.uniform(0.0, 256.0);
  Image<double> layer(32, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      layer(y, x) = lattice(x / 16.0 + ox, y / 16.0 + oy);
    }
  }
  CHECK((single - standardize(layer)).abs().maxCoeff() < 1e-12);

  double simplex_ac = 0.0;
  double white_ac = 0.0;
  Rng e(13);
  for (int s = 0; s < 100; ++s) {
    simplex_ac += lag1_autocorrelation(simplex_noise<double>(64, 64, def, e));
    white_ac += lag1_autocorrelation(gaussian_noise<double>(64, 64, e));
  }
  CHECK(simplex_ac / 100 > white_ac / 100 + 0.1);

  CHECK_THROWS_AS(simplex_noise(8, 8, SimplexParams{0, 0.8, 64}, e), std::invalid_argument);
}

TEST_CASE("pyramid noise")
{
  Rng a(4);
  Rng b(4);
  Image<double> const one = pyramid_noise<double>(32, 32, 1, 0.8, a);
  CHECK((one - standardize(gaussian_noise<double>(32, 32, b))).abs().maxCoeff() < 1e-12);

  Rng c(5);
  Rng d(5);
  Image<double> const four = pyramid_noise<double>(64, 64, 4, 0.8, c);
  CHECK(identical(four, pyramid_noise<double>(64, 64, 4, 0.8, d)));
  CHECK(std::abs(four.mean()) < 1e-9);
  CHECK(std::abs((four - four.mean()).square().mean() - 1.0) < 1e-6);
  CHECK(lag1_autocorrelation(four) > lag1_autocorrelation(one));
  CHECK_THROWS_AS(pyramid_noise(8, 8, 0, 0.8, c), std::invalid_argument);
  CHECK_THROWS_AS(pyramid_noise(8, 8, 2, 1.5, c), std::invalid_argument);
}

TEST_CASE("synomaly presets")
{
  auto const small = synomaly_preset(SizeClass::small);
  CHECK(small.sigma == 1.0);
  CHECK(small.tau == 180.0);
  auto const moderate = synomaly_preset(SizeClass::moderate);
  CHECK(moderate.sigma == 3.0);
  CHECK(moderate.tau == 175.0);
  auto const inter = synomaly_preset(SizeClass::intermediate);
  CHECK(inter.sigma == 5.0);
  CHECK(inter.tau == 160.0);
  auto const large = synomaly_preset(SizeClass::large);
  CHECK(large.sigma == 7.0);
  CHECK(large.tau == 150.0);
  for (auto const &p : {small, moderate, inter, large}) {
    CHECK(p.direction == 1);
    CHECK(p.intensity == 0.5);
    CHECK_FALSE(p.anatomical_mask.has_value());
  }
  CHECK(parse_size_class("large") == SizeClass::large);
  CHECK(to_string(SizeClass::moderate) == "moderate");
  CHECK_THROWS_AS(parse_size_class("huge"), std::invalid_argument);
}

TEST_CASE("synomaly parameter validation")
{
  Rng rng(1);
  SynomalyParams p;
  p.direction = 0;
  CHECK_THROWS_AS(synomaly_noise(16, 16, p, rng), std::invalid_argument);
  p = {};
  p.tau = 256;
  CHECK_THROWS_AS(synomaly_noise(16, 16, p, rng), std::invalid_argument);
  p = {};
  p.sigma = 0;
  CHECK_THROWS_AS(synomaly_noise(16, 16, p, rng), std::invalid_argument);
  p = {};
  p.anatomical_mask = Mask::Ones(8, 8);
  CHECK_THROWS_AS(synomaly_noise(16, 16, p, rng), std::invalid_argument);
}

TEST_CASE("synomaly with tau 255 is pure gaussian noise")
{
  SynomalyParams p;
  p.tau = 255.0;
  for (int s = 0; s < 100; ++s) {
    Rng a(77, s);
    Rng b(77, s);
    auto const smp = synomaly_noise(32, 32, p, a);
    CHECK(count(smp.region_mask) == 0);
    CHECK(identical(smp.field, gaussian_noise(32, 32, b)));
  }
}

TEST_CASE("synomaly offsets follow the direction and stay inside the anatomy")
{
  Mask disk = Mask::Zero(48, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) {
      disk(y, x) = (x - 23.5) * (x - 23.5) + (y - 23.5) * (y - 23.5) < 18.0 * 18.0;
    }
  }
  for (int d : {1, -1}) {
    SynomalyParams p = synomaly_preset(SizeClass::moderate);
    p.direction = d;
    p.anatomical_mask = disk;
    double sum = 0.0;
    double pixels = 0.0;
    int violations = 0;
    for (int s = 0; s < 100; ++s) {
      Rng a(300, s);
      Rng b(300, s);
      auto const smp = synomaly_noise(48, 48, p, a);
      Image2D const base = gaussian_noise(48, 48, b);
      violations += static_cast<int>((smp.region_mask.cast<int>() * (1 - disk.cast<int>())).sum());
      Image2D const diff = smp.field - base;
      // Outside the planted region the field is the background, bit for bit.
      CHECK((smp.region_mask != 0 || diff == 0.f).all());
      for (Eigen::Index i = 0; i < diff.size(); ++i) {
        if (smp.region_mask.data()[i]) {
          double const off = diff.data()[i];
          CHECK(d * off >= p.intensity - 1e-5);
          CHECK(d * off <= p.intensity + 1.0 + 1e-5);
          sum += off;
          pixels += 1.0;
        }
      }
    }
    CHECK(violations == 0);
    REQUIRE(pixels > 0.0);
    if (d > 0) {
      CHECK(sum / pixels >= p.intensity);
    } else {
      CHECK(sum / pixels <= -p.intensity);
    }
  }
}

TEST_CASE("one offset per connected region")
{
  SynomalyParams p = synomaly_preset(SizeClass::small);
  for (int s = 0; s < 20; ++s) {
    Rng a(9, s);
    Rng b(9, s);
    auto const smp = synomaly_noise(32, 32, p, a);
    Image2D const diff = smp.field - gaussian_noise(32, 32, b);
    for (auto const &comp : connected_components(smp.region_mask)) {
      float const first = diff.data()[comp.front()];
      for (auto idx : comp) {
        CHECK(diff.data()[idx] == doctest::Approx(first).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("synomaly determinism")
{
  SynomalyParams p = synomaly_preset(SizeClass::large);
  Rng a(123);
  Rng b(123);
  auto const x = synomaly_noise(64, 64, p, a);
  auto const y = synomaly_noise(64, 64, p, b);
  CHECK(identical(x.field, y.field));
  CHECK((x.region_mask == y.region_mask).all());
}

TEST_CASE("region size grows with sigma")
{
  double prev = 0.0;
  for (double sigma : {1.0, 3.0, 5.0, 7.0, 11.0}) {
    double const area = sweep(sigma, 150.0, 100, 501).area;
    INFO("sigma " << sigma << " area " << area);
    CHECK(area >= prev);
    prev = area;
  }
}

TEST_CASE("coverage and region size shrink as tau rises")
{
  SweepStats prev{2.0, 1e9, 1e9};
  for (int tau = 90; tau <= 230; tau += 20) {
    auto const s = sweep(7.0, tau, 100, 502);
    INFO("tau " << tau << " coverage " << s.coverage << " count " << s.components << " area " << s.area);
    CHECK(s.coverage < prev.coverage);
    CHECK(s.area < prev.area);
    if (tau >= 190) {
      // Below ~170 regions merge, so the count only falls on the upper range.
      CHECK(s.components <= prev.components);
    }
    prev = s;
  }
}
