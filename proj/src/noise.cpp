#include "synomaly/noise.hpp"

#include <cmath>

namespace synomaly {

namespace {

constexpr double skew = 0.36602540378443864676;   // (sqrt(3) - 1) / 2
constexpr double unskew = 0.21132486540518711775; // (3 - sqrt(3)) / 6

constexpr std::array<std::array<double, 2>, 8> gradients{{
  {1, 0},
  {-1, 0},
  {0, 1},
  {0, -1},
  {0.70710678118654752, 0.70710678118654752},
  {-0.70710678118654752, 0.70710678118654752},
  {0.70710678118654752, -0.70710678118654752},
  {-0.70710678118654752, -0.70710678118654752},
}};

} // namespace

SimplexLattice::SimplexLattice(Rng &rng)
{
  std::array<std::uint8_t, 256> p{};
  for (int i = 0; i < 256; ++i) {
    p[i] = static_cast<std::uint8_t>(i);
  }
  for (int i = 255; i > 0; --i) {
    auto const j = rng.uniform_int(0, i);
    std::swap(p[i], p[j]);
  }
  for (int i = 0; i < 512; ++i) {
    perm_[i] = p[i & 255];
  }
}

double SimplexLattice::operator()(double x, double y) const
{
  double const s = (x + y) * skew;
  auto const i = static_cast<long>(std::floor(x + s));
  auto const j = static_cast<long>(std::floor(y + s));
  double const t = static_cast<double>(i + j) * unskew;
  double const x0 = x - (static_cast<double>(i) - t);
  double const y0 = y - (static_cast<double>(j) - t);

  int const i1 = x0 > y0 ? 1 : 0;
  int const j1 = x0 > y0 ? 0 : 1;

  double const corners[3][2] = {
    {x0, y0},
    {x0 - i1 + unskew, y0 - j1 + unskew},
    {x0 - 1.0 + 2.0 * unskew, y0 - 1.0 + 2.0 * unskew},
  };
  int const ii = static_cast<int>(i & 255);
  int const jj = static_cast<int>(j & 255);
  int const hashes[3] = {
    perm_[ii + perm_[jj]],
    perm_[ii + i1 + perm_[jj + j1]],
    perm_[ii + 1 + perm_[jj + 1]],
  };

  double n = 0.0;
  for (int c = 0; c < 3; ++c) {
    double r = 0.5 - corners[c][0] * corners[c][0] - corners[c][1] * corners[c][1];
    if (r > 0.0) {
      auto const &g = gradients[hashes[c] & 7];
      r *= r;
      n += r * r * (g[0] * corners[c][0] + g[1] * corners[c][1]);
    }
  }
  // Scales the output to roughly [-1, 1].
  return 70.0 * n;
}

SizeClass parse_size_class(std::string_view name)
{
  if (name == "small") {
    return SizeClass::small;
  }
  if (name == "moderate") {
    return SizeClass::moderate;
  }
  if (name == "intermediate") {
    return SizeClass::intermediate;
  }
  if (name == "large") {
    return SizeClass::large;
  }
  throw std::invalid_argument("unknown size class: " + std::string(name));
}

std::string_view to_string(SizeClass c)
{
  switch (c) {
  case SizeClass::small: return "small";
  case SizeClass::moderate: return "moderate";
  case SizeClass::intermediate: return "intermediate";
  case SizeClass::large: return "large";
  }
  return "unknown";
}

SynomalyParams synomaly_preset(SizeClass size)
{
  SynomalyParams p;
  switch (size) {
  case SizeClass::small:
    p.sigma = 1.0;
    p.tau = 180.0;
    break;
  case SizeClass::moderate:
    p.sigma = 3.0;
    p.tau = 175.0;
    break;
  case SizeClass::intermediate:
    p.sigma = 5.0;
    p.tau = 160.0;
    break;
  case SizeClass::large:
    p.sigma = 7.0;
    p.tau = 150.0;
    break;
  }
  p.direction = 1;
  p.intensity = 0.5;
  return p;
}

} // namespace synomaly
