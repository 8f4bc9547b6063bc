#pragma once

#include "image.hpp"
#include "rng.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace synomaly {

/// I.i.d. standard normal field, drawn in row-major order.
template <typename Scalar = float> Image<Scalar> gaussian_noise(int w, int h, Rng &rng)
{
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument("gaussian_noise: dimensions must be positive");
  }
  Image<Scalar> out(h, w);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = static_cast<Scalar>(rng.normal());
  }
  return out;
}

/// Corner-aligned bilinear interpolation: low-res node (j, i) lands on pixel
/// (j (h-1)/(rows-1), i (w-1)/(cols-1)).
template <typename Scalar> Image<Scalar> bilinear_upsample(Image<Scalar> const &low, int w, int h)
{
  Image<Scalar> out(h, w);
  auto coord = [](Eigen::Index p, Eigen::Index n_out, Eigen::Index n_in) {
    return n_out > 1 && n_in > 1 ? static_cast<double>(p) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1)
                                 : 0.0;
  };
  for (Eigen::Index y = 0; y < h; ++y) {
    double const fy = coord(y, h, low.rows());
    auto const y0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fy), low.rows() - 1);
    auto const y1 = std::min<Eigen::Index>(y0 + 1, low.rows() - 1);
    double const ty = fy - static_cast<double>(y0);
    for (Eigen::Index x = 0; x < w; ++x) {
      double const fx = coord(x, w, low.cols());
      auto const x0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fx), low.cols() - 1);
      auto const x1 = std::min<Eigen::Index>(x0 + 1, low.cols() - 1);
      double const tx = fx - static_cast<double>(x0);
      double const top = (1 - tx) * low(y0, x0) + tx * low(y0, x1);
      double const bot = (1 - tx) * low(y1, x0) + tx * low(y1, x1);
      out(y, x) = static_cast<Scalar>((1 - ty) * top + ty * bot);
    }
  }
  return out;
}

/// Shift and scale to zero mean, unit (population) variance.
template <typename Scalar> Image<Scalar> standardize(Image<Scalar> const &f)
{
  double const mean = f.template cast<double>().mean();
  double const var = (f.template cast<double>() - mean).square().mean();
  if (!(var > 0.0)) {
    return Image<Scalar>::Zero(f.rows(), f.cols());
  }
  return ((f.template cast<double>() - mean) / std::sqrt(var)).template cast<Scalar>();
}

struct CoarseParams
{
  int resolution = 16;
  double std = 0.2;
};

template <typename Scalar = float> Image<Scalar> coarse_noise(int w, int h, CoarseParams const &p, Rng &rng)
{
  if (p.resolution < 1) {
    throw std::invalid_argument("coarse_noise: resolution must be >= 1");
  }
  Image<Scalar> low = gaussian_noise<Scalar>(p.resolution, p.resolution, rng) * static_cast<Scalar>(p.std);
  if (p.resolution == w && p.resolution == h) {
    return low;
  }
  return bilinear_upsample(low, w, h);
}

struct SimplexParams
{
  int octaves = 6;
  double persistence = 0.8;
  // Period of the first octave in pixels; each further octave halves it.
  double frequency = 64.0;
};

/// 2D simplex gradient noise over a randomly permuted lattice.
class SimplexLattice
{
public:
  explicit SimplexLattice(Rng &rng);

  /// Single-octave value in roughly [-1, 1].
  double operator()(double x, double y) const;

private:
  std::array<std::uint8_t, 512> perm_{};
};

template <typename Scalar = float> Image<Scalar> simplex_noise(int w, int h, SimplexParams const &p, Rng &rng)
{
  if (p.octaves < 1) {
    throw std::invalid_argument("simplex_noise: octaves must be >= 1");
  }
  if (!(p.persistence > 0.0 && p.persistence <= 1.0) || !(p.frequency > 0.0)) {
    throw std::invalid_argument("simplex_noise: persistence in (0,1] and frequency > 0 required");
  }
  SimplexLattice const lattice(rng);
  Image<double> acc = Image<double>::Zero(h, w);
  double period = p.frequency;
  double amplitude = 1.0;
  for (int o = 0; o < p.octaves; ++o) {
    // Offset each octave so lattice origins do not line up.
    double const ox = rng.uniform(0.0, 256.0);
    double const oy = rng.uniform(0.0, 256.0);
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) {
        acc(y, x) += amplitude * lattice(static_cast<double>(x) / period + ox, static_cast<double>(y) / period + oy);
      }
    }
    period /= 2.0;
    amplitude *= p.persistence;
  }
  return standardize(acc).template cast<Scalar>();
}

template <typename Scalar = float> Image<Scalar> pyramid_noise(int w, int h, int levels, double decay, Rng &rng)
{
  if (levels < 1 || !(decay > 0.0 && decay <= 1.0)) {
    throw std::invalid_argument("pyramid_noise: levels >= 1 and decay in (0,1] required");
  }
  Image<double> acc = Image<double>::Zero(h, w);
  double weight = 1.0;
  for (int level = 0; level < levels; ++level) {
    int const lw = std::max(1, w >> level);
    int const lh = std::max(1, h >> level);
    Image<double> low = gaussian_noise<double>(lw, lh, rng);
    acc += weight * (level == 0 ? low : bilinear_upsample(low, w, h));
    weight *= decay;
  }
  return standardize(acc).template cast<Scalar>();
}

struct SynomalyParams
{
  double sigma = 7.0;
  double tau = 150.0;
  int direction = 1;
  double intensity = 0.5;
  std::optional<Mask> anatomical_mask;

  void validate() const
  {
    if (!(sigma > 0.0)) {
      throw std::invalid_argument("synomaly: sigma must be positive");
    }
    if (!(tau >= 0.0 && tau <= 255.0)) {
      throw std::invalid_argument("synomaly: tau must lie in [0, 255]");
    }
    if (direction != 1 && direction != -1) {
      throw std::invalid_argument("synomaly: direction must be -1 or +1");
    }
    if (!(intensity >= 0.0)) {
      throw std::invalid_argument("synomaly: intensity must be non-negative");
    }
  }
};

template <typename Scalar = float> struct SynomalySample
{
  Image<Scalar> field;
  Mask region_mask;
};

/// Shape field for synthetic anomalies: blurred independent Gaussian noise,
/// min-max scaled onto [0, 255].
template <typename Scalar = float> Image<Scalar> synomaly_shape_field(int w, int h, double sigma, Rng &rng)
{
  Image<Scalar> raw = gaussian_noise<Scalar>(w, h, rng);
  Image<Scalar> blurred = gaussian_blur(raw, sigma_kernel(sigma, std::min(w, h)));
  return normalize_unit(blurred) * Scalar(255);
}

/// Gaussian background plus signed offsets d (i + v) on thresholded blobs,
/// with one v ~ U[0,1] per connected blob.
template <typename Scalar = float>
SynomalySample<Scalar> synomaly_noise(int w, int h, SynomalyParams const &p, Rng &rng)
{
  p.validate();
  if (p.anatomical_mask && (p.anatomical_mask->cols() != w || p.anatomical_mask->rows() != h)) {
    throw std::invalid_argument("synomaly: anatomical mask does not match image size");
  }
  SynomalySample<Scalar> s;
  s.field = gaussian_noise<Scalar>(w, h, rng);
  Image<Scalar> const shape = synomaly_shape_field<Scalar>(w, h, p.sigma, rng);
  s.region_mask = binarize(shape, p.tau);
  if (p.anatomical_mask) {
    s.region_mask = s.region_mask * (*p.anatomical_mask != 0).template cast<std::uint8_t>();
  }
  for (auto const &component : connected_components(s.region_mask)) {
    double const v = rng.uniform();
    auto const offset = static_cast<Scalar>(p.direction * (p.intensity + v));
    for (auto idx : component) {
      s.field.data()[idx] += offset;
    }
  }
  return s;
}

enum class SizeClass
{
  small,
  moderate,
  intermediate,
  large
};

SizeClass parse_size_class(std::string_view name);
std::string_view to_string(SizeClass c);

/// Recommended (sigma, tau) per relative anomaly size; d = +1, i = 0.5.
SynomalyParams synomaly_preset(SizeClass size);

} // namespace synomaly
