#include "synomaly/metrics.hpp"

#include "synomaly/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <tuple>

namespace synomaly {

PixelScores pixel_scores(Mask const &pred, Mask const &gt)
{
  require_same_shape(pred, gt, "pixel_scores");
  auto const p = static_cast<double>((pred != 0).count());
  auto const g = static_cast<double>((gt != 0).count());
  auto const tp = static_cast<double>(((pred != 0) && (gt != 0)).count());
  PixelScores s;
  if (g == 0.0) {
    s.recall = 1.0;
    s.precision = p == 0.0 ? 1.0 : 0.0;
    s.dice = p == 0.0 ? 1.0 : 0.0;
    return s;
  }
  s.recall = tp / g;
  s.precision = p == 0.0 ? 0.0 : tp / p;
  s.dice = 2.0 * tp / (p + g);
  return s;
}

Summary summarize(std::vector<double> const &values)
{
  Summary s;
  if (values.empty()) {
    return s;
  }
  double const n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) {
    ss += (v - s.mean) * (v - s.mean);
  }
  s.std = std::sqrt(ss / n);
  return s;
}

double auroc(std::vector<double> const &scores, std::vector<bool> const &anomalous)
{
  if (scores.size() != anomalous.size()) {
    throw std::invalid_argument("auroc: scores and labels differ in length");
  }
  std::size_t const n = scores.size();
  std::size_t const pos = static_cast<std::size_t>(std::count(anomalous.begin(), anomalous.end(), true));
  std::size_t const neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetric("auroc: both healthy and anomalous samples are required");
  }
  // Mid-ranks handle ties; the rank-sum of positives gives the U statistic.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      ++j;
    }
    double const mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (anomalous[idx[k]]) {
        rank_sum += mid;
      }
    }
    i = j;
  }
  double const u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

ScoreKind parse_score_kind(std::string_view name)
{
  if (name == "mask_pixels") {
    return ScoreKind::mask_pixels;
  }
  if (name == "residual_sum") {
    return ScoreKind::residual_sum;
  }
  throw std::invalid_argument("unknown score kind: " + std::string(name));
}

std::string_view to_string(ScoreKind k)
{
  return k == ScoreKind::mask_pixels ? "mask_pixels" : "residual_sum";
}

double image_score(std::vector<StageRecord> const &trace, ScoreKind kind)
{
  if (trace.empty()) {
    throw std::invalid_argument("image_score: empty trace");
  }
  auto const &last = trace.back();
  return kind == ScoreKind::mask_pixels ? static_cast<double>(count(last.mask)) : last.residual_sum;
}

void GridSpec::validate() const
{
  if (steps.empty() || kernels.empty() || thresholds.empty()) {
    throw std::invalid_argument("grid: every axis needs at least one value");
  }
}

std::vector<GridRow> grid_search(Denoiser<float> const &model, Schedule const &sched,
                                 std::vector<LabeledImage> const &val, GridSpec const &grid,
                                 InferenceParams const &base, std::uint64_t seed, unsigned workers)
{
  grid.validate();
  if (val.empty()) {
    throw std::invalid_argument("grid_search: empty validation set");
  }
  std::vector<GridRow> rows;
  for (int s : grid.steps) {
    for (int k : grid.kernels) {
      for (double th : grid.thresholds) {
        rows.push_back({s, k, th, 0.0, 0.0});
      }
    }
  }
  // One task per (cell, image) keeps all workers busy on small grids.
  std::size_t const m = val.size();
  std::vector<double> dice_scores(rows.size() * m);
  Rng const root(seed);
  parallel_for(dice_scores.size(), workers, [&](std::size_t task) {
    auto const &row = rows[task / m];
    std::size_t const i = task % m;
    InferenceParams p = base;
    p.steps = row.steps;
    p.kernel = row.kernel;
    p.threshold = row.threshold;
    auto const r = multi_stage_infer(val[i].image, model, sched, p, root.substream(i));
    dice_scores[task] = dice(r.mask, val[i].gt);
  });
  for (std::size_t c = 0; c < rows.size(); ++c) {
    auto const s = summarize({dice_scores.begin() + static_cast<std::ptrdiff_t>(c * m),
                              dice_scores.begin() + static_cast<std::ptrdiff_t>((c + 1) * m)});
    rows[c].mean_dice = s.mean;
    rows[c].std_dice = s.std;
  }
  std::stable_sort(rows.begin(), rows.end(), [](GridRow const &a, GridRow const &b) {
    if (a.mean_dice != b.mean_dice) {
      return a.mean_dice > b.mean_dice;
    }
    return std::tie(a.steps, a.kernel, a.threshold) < std::tie(b.steps, b.kernel, b.threshold);
  });
  return rows;
}

void write_grid_csv(std::filesystem::path const &path, std::vector<GridRow> const &rows)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  os << "T,n,Th,mean_dice,std_dice\n";
  char buf[160];
  for (auto const &r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", r.steps, r.kernel, r.threshold, r.mean_dice, r.std_dice);
    os << buf;
  }
}

} // namespace synomaly
