#include "synomaly/inference.hpp"

#include <limits>
#include <stdexcept>

namespace synomaly {

void InferenceParams::validate(int T) const
{
  if (steps < 1 || steps > T) {
    throw std::invalid_argument("inference: steps must lie in [1, T]");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("inference: kernel size must be odd");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("inference: threshold must lie in (0, 1)");
  }
  if (max_stages < 1) {
    throw std::invalid_argument("inference: max_stages must be >= 1");
  }
  if (ddim_stride < 1) {
    throw std::invalid_argument("inference: ddim_stride must be >= 1");
  }
  if (!(convergence_eps >= 0.0)) {
    throw std::invalid_argument("inference: convergence_eps must be non-negative");
  }
}

Image2D residual_map(Image2D const &x0, Image2D const &xhat, int kernel)
{
  require_same_shape(x0, xhat, "anomaly_mask");
  BlurKernel const k = residual_kernel(kernel);
  return (gaussian_blur(x0, k) - gaussian_blur(xhat, k)).abs();
}

Mask anomaly_mask(Image2D const &x0, Image2D const &xhat, int kernel, double th)
{
  return binarize(residual_map(x0, xhat, kernel), th);
}

Image2D masked_fusion(Image2D const &x0, Image2D const &xhat, Mask const &m)
{
  require_same_shape(x0, xhat, "masked_fusion");
  require_same_shape(x0, m, "masked_fusion");
  return (m != 0).select(xhat, x0);
}

double relative_change(Eigen::Index previous, Eigen::Index current)
{
  if (previous == 0) {
    return current == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return std::abs(static_cast<double>(previous - current)) / static_cast<double>(previous);
}

} // namespace synomaly
