#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace synomaly {

// Row-major 2D grids: rows() is the height, cols() the width.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image2D = Image<float>;
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename A, typename B>
void require_same_shape(Eigen::ArrayBase<A> const &a, Eigen::ArrayBase<B> const &b, char const *what)
{
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
}

template <typename Derived> bool all_finite(Eigen::ArrayBase<Derived> const &img)
{
  return img.isFinite().all();
}

inline Eigen::Index count(Mask const &m)
{
  return (m != 0).count();
}

/// Separable 1D Gaussian taps. Always odd-sized and normalised to unit sum.
struct BlurKernel
{
  int size = 1;
  double sigma = 0.0;
  std::vector<double> taps{1.0};

  int radius() const { return size / 2; }
};

inline BlurKernel gaussian_kernel(int size, double sigma)
{
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument("gaussian_kernel: size must be odd and positive");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  }
  BlurKernel k;
  k.size = size;
  k.sigma = sigma;
  k.taps.assign(size, 0.0);
  int const r = size / 2;
  for (int i = -r; i <= r; ++i) {
    k.taps[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  }
  double const sum = std::accumulate(k.taps.begin(), k.taps.end(), 0.0);
  for (auto &w : k.taps) {
    w /= sum;
  }
  return k;
}

// Residual-map kernel G_n: standard deviation size/6.
inline BlurKernel residual_kernel(int size)
{
  return gaussian_kernel(size, size / 6.0);
}

// Kernel for a given standard deviation; truncated at 3 sigma and capped to
// the largest odd size that fits in `max_size`.
inline BlurKernel sigma_kernel(double sigma, int max_size)
{
  int size = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  int cap = max_size % 2 == 0 ? max_size - 1 : max_size;
  return gaussian_kernel(std::max(1, std::min(size, cap)), sigma);
}

namespace detail {
// Mirror index without repeating the edge sample (d c b | a b c d | c b a).
inline Eigen::Index reflect(Eigen::Index i, Eigen::Index n)
{
  if (n == 1) {
    return 0;
  }
  while (i < 0 || i >= n) {
    i = i < 0 ? -i : 2 * (n - 1) - i;
  }
  return i;
}
} // namespace detail

template <typename Scalar> Image<Scalar> gaussian_blur(Image<Scalar> const &img, BlurKernel const &kernel)
{
  Eigen::Index const h = img.rows();
  Eigen::Index const w = img.cols();
  if (kernel.size % 2 == 0 || kernel.size > std::min(w, h)) {
    throw std::invalid_argument("gaussian_blur: kernel size must be odd and fit inside the image");
  }
  int const r = kernel.radius();
  Image<Scalar> tmp(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        acc += kernel.taps[k + r] * img(y, detail::reflect(x + k, w));
      }
      tmp(y, x) = static_cast<Scalar>(acc);
    }
  }
  Image<Scalar> out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        acc += kernel.taps[k + r] * tmp(detail::reflect(y + k, h), x);
      }
      out(y, x) = static_cast<Scalar>(acc);
    }
  }
  return out;
}

/// Min-max rescale to [0,1]; a constant image maps to zeros.
template <typename Scalar> Image<Scalar> normalize_unit(Image<Scalar> const &img)
{
  Scalar const lo = img.minCoeff();
  Scalar const hi = img.maxCoeff();
  if (!(hi > lo)) {
    return Image<Scalar>::Zero(img.rows(), img.cols());
  }
  Image<Scalar> out = (img - lo) / (hi - lo);
  // Division can land a hair outside the unit interval.
  return out.min(Scalar(1)).max(Scalar(0));
}

/// Nearest-rank p-th percentile: the ceil(p/100 * N)-th smallest value.
template <typename Scalar> Scalar percentile(Image<Scalar> const &img, double p)
{
  if (!(p > 0.0 && p <= 100.0)) {
    throw std::invalid_argument("percentile: p must lie in (0, 100]");
  }
  std::vector<Scalar> v(img.data(), img.data() + img.size());
  auto const n = static_cast<std::ptrdiff_t>(v.size());
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::ptrdiff_t>(rank, 1, n);
  std::nth_element(v.begin(), v.begin() + (rank - 1), v.end());
  return v[rank - 1];
}

template <typename Scalar> Image<Scalar> percentile_clip(Image<Scalar> const &img, double p)
{
  return img.min(percentile(img, p));
}

/// Strict threshold: 1 where value > th.
template <typename Derived> Mask binarize(Eigen::ArrayBase<Derived> const &img, double th)
{
  return (img.template cast<double>() > th).template cast<std::uint8_t>();
}

template <typename Scalar> Image<Scalar> to_image(Mask const &m)
{
  return m.template cast<Scalar>();
}

/// 8-connected components of the nonzero pixels. Each component lists its
/// row-major pixel indices ascending; components are ordered by first pixel.
std::vector<std::vector<Eigen::Index>> connected_components(Mask const &mask);

} // namespace synomaly
