#pragma once

#include "image.hpp"
#include "rng.hpp"

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace synomaly {

enum class ScheduleKind
{
  linear,
  cosine
};

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind k);

/// Cumulative signal coefficients alphabar[0..T], alphabar[0] = 1.
struct Schedule
{
  ScheduleKind kind = ScheduleKind::linear;
  int T = 1000;
  std::vector<double> alphabar;

  double operator[](int t) const { return alphabar.at(static_cast<std::size_t>(t)); }

  /// sqrt((1 - a_{t-1}) / (1 - a_t)) * sqrt(1 - a_t / a_{t-1}) for t >= 1.
  double sigma(int t) const;
};

inline constexpr double linear_beta_start = 1e-4;
inline constexpr double linear_beta_end = 0.02;
inline constexpr double cosine_offset = 0.008;
inline constexpr double alphabar_floor = 1e-8;

Schedule make_schedule(ScheduleKind kind, int T);

/// Descending DDIM ladder {t_start, t_start - stride, ..., 0}.
std::vector<int> step_ladder(int t_start, int stride);

template <typename Scalar>
Image<Scalar> forward_noise(Image<Scalar> const &x0, int t, Image<Scalar> const &eps, Schedule const &sched)
{
  require_same_shape(x0, eps, "forward_noise");
  if (t < 0 || t > sched.T) {
    throw std::invalid_argument("forward_noise: step out of range");
  }
  double const a = sched[t];
  return (std::sqrt(a) * x0.template cast<double>() + std::sqrt(1.0 - a) * eps.template cast<double>())
    .template cast<Scalar>();
}

/// Clean-image estimate implied by a noise prediction at step t.
template <typename Scalar>
Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
predict_x0(Image<Scalar> const &xt, int t, Image<Scalar> const &eps_pred, Schedule const &sched)
{
  double const a = sched[t];
  return (xt.template cast<double>() - std::sqrt(1.0 - a) * eps_pred.template cast<double>()) / std::sqrt(a);
}

/// Stochastic reverse step t -> t-1. `eta` scales the injected noise; eta = 0
/// reduces the update to the deterministic sampler.
template <typename Scalar>
Image<Scalar> ddpm_step(Image<Scalar> const &xt, int t, Image<Scalar> const &eps_pred, Schedule const &sched, Rng &rng,
                        double eta = 1.0)
{
  require_same_shape(xt, eps_pred, "ddpm_step");
  if (t < 1 || t > sched.T) {
    throw std::invalid_argument("ddpm_step: step must lie in [1, T]");
  }
  double const a_prev = sched[t - 1];
  double const sig = eta * sched.sigma(t);
  double const dir = std::sqrt(std::max(0.0, 1.0 - a_prev - sig * sig));
  auto x = (std::sqrt(a_prev) * predict_x0(xt, t, eps_pred, sched) + dir * eps_pred.template cast<double>()).eval();
  if (sig > 0.0) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data()[i] += sig * rng.normal();
    }
  }
  return x.template cast<Scalar>();
}

template <typename Scalar>
Image<Scalar> ddim_step(Image<Scalar> const &xt, int t, int t_prev, Image<Scalar> const &eps_pred, Schedule const &sched)
{
  require_same_shape(xt, eps_pred, "ddim_step");
  if (t > sched.T || t_prev < 0 || t_prev >= t) {
    throw std::invalid_argument("ddim_step: need 0 <= t_prev < t <= T");
  }
  double const a_prev = sched[t_prev];
  return (std::sqrt(a_prev) * predict_x0(xt, t, eps_pred, sched) +
          std::sqrt(1.0 - a_prev) * eps_pred.template cast<double>())
    .template cast<Scalar>();
}

/// Deterministic DDIM descent from t_start to 0. `model(x, t)` returns the
/// noise prediction for x at step t.
template <typename Scalar, typename EpsModel>
Image<Scalar> denoise_run(Image<Scalar> const &xt, int t_start, EpsModel &&model, Schedule const &sched, int stride)
{
  if (t_start < 0 || t_start > sched.T) {
    throw std::invalid_argument("denoise_run: t_start out of range");
  }
  auto const ladder = step_ladder(t_start, stride);
  Image<Scalar> x = xt;
  for (std::size_t k = 0; k + 1 < ladder.size(); ++k) {
    Image<Scalar> const eps = model(x, ladder[k]);
    x = ddim_step(x, ladder[k], ladder[k + 1], eps, sched);
  }
  return x;
}

} // namespace synomaly
