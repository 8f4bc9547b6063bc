#pragma once

#include "diffusion.hpp"
#include "image.hpp"
#include "noise.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

namespace synomaly {

struct InferenceParams
{
  int steps = 250;        // noising depth per stage
  int kernel = 15;        // residual blur size n
  double threshold = 0.3; // Th
  int max_stages = 5;
  double convergence_eps = 0.01;
  int ddim_stride = 10;
  bool masked_fusion = true;

  void validate(int T) const;
};

/// binarize(|G_n * x0 - G_n * xhat|, th).
Mask anomaly_mask(Image2D const &x0, Image2D const &xhat, int kernel, double th);

/// Blurred absolute residual |G_n * x0 - G_n * xhat|.
Image2D residual_map(Image2D const &x0, Image2D const &xhat, int kernel);

/// m xhat + (1 - m) x0, selecting pixels rather than blending so unmasked
/// pixels keep the bits of x0.
Image2D masked_fusion(Image2D const &x0, Image2D const &xhat, Mask const &m);

/// Relative change of the mask size between stages. With an empty previous
/// mask the change is 0 when the current mask is also empty, else infinite.
double relative_change(Eigen::Index previous, Eigen::Index current);

struct StageRecord
{
  Image2D x_hat;
  Image2D fused;
  Mask mask;
  Eigen::Index mask_pixels = 0;
  double residual_sum = 0.0;
  // NaN for the first stage.
  double rel_change = std::numeric_limits<double>::quiet_NaN();
};

struct InferenceResult
{
  Mask mask;
  Image2D counterfactual;
  std::vector<StageRecord> trace;
  double elapsed_ms = 0.0;
};

/// The stage loop on its own: run_stage(n) performs stage n and returns its
/// mask pixel count. The first stage always runs, the convergence test starts
/// once two masks exist, and at most max_stages stages run. Returns the
/// number of stages executed.
template <typename StageFn> int stage_loop(int max_stages, double eps, StageFn &&run_stage)
{
  Eigen::Index previous = run_stage(0);
  int stages = 1;
  while (stages < max_stages) {
    Eigen::Index const current = run_stage(stages);
    ++stages;
    if (relative_change(previous, current) <= eps) {
      break;
    }
    previous = current;
  }
  return stages;
}

/// Multi-stage partial diffusion with masked fusion. Stage n noises the
/// previous fused image to `steps` with Gaussian noise from rng.substream(n),
/// runs the deterministic sampler back to 0 and compares against x0.
template <typename EpsModel>
InferenceResult multi_stage_infer(Image2D const &x0, EpsModel &&model, Schedule const &sched, InferenceParams const &params,
                                  Rng const &rng)
{
  params.validate(sched.T);
  auto const start = std::chrono::steady_clock::now();
  InferenceResult r;
  Image2D fused = x0;
  auto run_stage = [&](int n) {
    Rng stage_rng = rng.substream(static_cast<std::uint64_t>(n));
    Image2D const eps = gaussian_noise(static_cast<int>(x0.cols()), static_cast<int>(x0.rows()), stage_rng);
    Image2D const xt = forward_noise(fused, params.steps, eps, sched);
    StageRecord s;
    s.x_hat = denoise_run(xt, params.steps, model, sched, params.ddim_stride);
    Image2D const residual = residual_map(x0, s.x_hat, params.kernel);
    s.mask = binarize(residual, params.threshold);
    s.mask_pixels = count(s.mask);
    s.residual_sum = residual.template cast<double>().sum();
    s.fused = params.masked_fusion ? masked_fusion(x0, s.x_hat, s.mask) : s.x_hat;
    if (!r.trace.empty()) {
      s.rel_change = relative_change(r.trace.back().mask_pixels, s.mask_pixels);
    }
    fused = s.fused;
    r.trace.push_back(std::move(s));
    return r.trace.back().mask_pixels;
  };
  stage_loop(params.max_stages, params.convergence_eps, run_stage);
  r.mask = r.trace.back().mask;
  r.counterfactual = fused;
  r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

template <typename EpsModel>
InferenceResult single_stage_infer(Image2D const &x0, EpsModel &&model, Schedule const &sched, InferenceParams params,
                                   Rng const &rng)
{
  params.max_stages = 1;
  return multi_stage_infer(x0, model, sched, params, rng);
}

} // namespace synomaly
