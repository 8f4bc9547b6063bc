#pragma once

#include "denoiser.hpp"
#include "inference.hpp"
#include "phantom.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace synomaly {

struct PixelScores
{
  double dice = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Dice, precision and recall of pred against gt. Empty gt with empty pred
/// scores 1 throughout; empty gt with a nonempty pred gives precision 0,
/// recall 1, dice 0. An empty pred against a nonempty gt has precision 0.
PixelScores pixel_scores(Mask const &pred, Mask const &gt);

inline double dice(Mask const &pred, Mask const &gt)
{
  return pixel_scores(pred, gt).dice;
}
inline double precision(Mask const &pred, Mask const &gt)
{
  return pixel_scores(pred, gt).precision;
}
inline double recall(Mask const &pred, Mask const &gt)
{
  return pixel_scores(pred, gt).recall;
}

struct Summary
{
  double mean = 0.0;
  double std = 0.0; // population standard deviation
};

/// Empty input gives a zero summary.
Summary summarize(std::vector<double> const &values);

struct UndefinedMetric : std::domain_error
{
  using std::domain_error::domain_error;
};

/// Mann-Whitney AUROC: fraction of (anomalous, healthy) pairs ranked
/// correctly, ties counting one half. Needs both labels present.
double auroc(std::vector<double> const &scores, std::vector<bool> const &anomalous);

enum class ScoreKind
{
  mask_pixels,
  residual_sum
};

ScoreKind parse_score_kind(std::string_view name);
std::string_view to_string(ScoreKind k);

/// Image-level anomaly score from the last stage of a trace.
double image_score(std::vector<StageRecord> const &trace, ScoreKind kind = ScoreKind::mask_pixels);

struct GridSpec
{
  std::vector<int> steps;
  std::vector<int> kernels;
  std::vector<double> thresholds;

  void validate() const;
  std::size_t size() const { return steps.size() * kernels.size() * thresholds.size(); }
};

struct GridRow
{
  int steps = 0;
  int kernel = 0;
  double threshold = 0.0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
};

/// Exhaustive search over (steps, kernel, threshold) on images with ground
/// truth. `base` supplies the remaining inference settings. Image k uses
/// Rng(seed).substream(k) in every cell. Rows are sorted by mean Dice
/// descending, ties by (steps, kernel, threshold) ascending.
std::vector<GridRow> grid_search(Denoiser<float> const &model, Schedule const &sched,
                                 std::vector<LabeledImage> const &val, GridSpec const &grid,
                                 InferenceParams const &base, std::uint64_t seed, unsigned workers = 1);

void write_grid_csv(std::filesystem::path const &path, std::vector<GridRow> const &rows);

} // namespace synomaly
