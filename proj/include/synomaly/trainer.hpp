#pragma once

#include "denoiser.hpp"
#include "diffusion.hpp"
#include "noise.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace synomaly {

enum class NoiseKind
{
  gaussian,
  coarse,
  simplex,
  pyramid,
  synomaly
};

NoiseKind parse_noise_kind(std::string_view name);
std::string_view to_string(NoiseKind k);

struct TrainConfig
{
  NoiseKind noise = NoiseKind::synomaly;
  double sigma = 7.0;
  double tau = 150.0;
  int direction = 1;
  double intensity = 0.5;
  // Diameter of the centred disk limiting synthetic anomalies, as a fraction
  // of the image side; 0 disables the mask.
  double mask_fraction = 0.0;
  // Probability of corrupting a step with plain Gaussian noise instead.
  double gaussian_fraction = 0.0;
  CoarseParams coarse;
  SimplexParams simplex;
  int pyramid_levels = 4;
  double pyramid_decay = 0.8;

  ScheduleKind schedule = ScheduleKind::linear;
  int T = 1000;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  Architecture arch;

  void validate() const;
  SynomalyParams synomaly_params() const;

  /// Flat key=value view; doubles are printed with 17 significant digits so
  /// parse(describe()) is exact.
  std::map<std::string, std::string> describe() const;
  static TrainConfig parse(std::map<std::string, std::string> const &kv);
};

/// The corruption field for one example, drawn per `config.noise`.
Image2D draw_noise(TrainConfig const &config, Rng &rng);

/// t ~ U{1..T}, eps from the configured noise, x_t by forward noising.
/// eps_target is the very field used to build x_t.
Example<float> sample_training_example(Image2D const &x0, TrainConfig const &config, Schedule const &sched, Rng &rng);

struct Checkpoint
{
  static constexpr std::uint32_t version = 1;
  TrainConfig config;
  Denoiser<float> model;

  Schedule schedule() const { return make_schedule(config.schedule, config.T); }
};

inline constexpr char checkpoint_magic[] = "SYNOCKPT";

void save_checkpoint(Checkpoint const &ckpt, std::filesystem::path const &path);
Checkpoint load_checkpoint(std::filesystem::path const &path);
void write_checkpoint(std::ostream &os, Checkpoint const &ckpt);
Checkpoint read_checkpoint(std::istream &is);

struct TrainResult
{
  Checkpoint checkpoint;
  // Loss of the very first batch, before any update.
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
};

struct TrainOptions
{
  unsigned workers = 1;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

/// Adam on the noise-prediction loss. Every epoch redraws all corruptions;
/// the result depends only on the config and the data, not on `workers`.
TrainResult train(TrainConfig const &config, std::vector<Image2D> const &healthy, TrainOptions const &options = {});

void write_loss_csv(std::filesystem::path const &path, std::vector<double> const &epoch_loss);

} // namespace synomaly
