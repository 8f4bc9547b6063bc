#include "synomaly/trainer.hpp"

#include "synomaly/parallel.hpp"
#include "synomaly/phantom.hpp"
#include "synomaly/tensor_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace synomaly {

namespace {

std::string fmt(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(std::map<std::string, std::string> const &kv, std::string const &key)
{
  std::string const &s = kv.at(key);
  std::size_t used = 0;
  double const v = std::stod(s, &used);
  if (used != s.size()) {
    throw std::invalid_argument("not a number for " + key + ": " + s);
  }
  return v;
}

long long to_int(std::map<std::string, std::string> const &kv, std::string const &key)
{
  std::string const &s = kv.at(key);
  long long v = 0;
  auto const [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw std::invalid_argument("not an integer for " + key + ": " + s);
  }
  return v;
}

void put_u32(std::ostream &os, std::uint32_t v)
{
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char const *>(b), 4);
}

bool get_u32(std::istream &is, std::uint32_t &v)
{
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char *>(b), 4)) {
    return false;
  }
  v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

} // namespace

NoiseKind parse_noise_kind(std::string_view name)
{
  if (name == "gaussian") {
    return NoiseKind::gaussian;
  }
  if (name == "coarse") {
    return NoiseKind::coarse;
  }
  if (name == "simplex") {
    return NoiseKind::simplex;
  }
  if (name == "pyramid") {
    return NoiseKind::pyramid;
  }
  if (name == "synomaly") {
    return NoiseKind::synomaly;
  }
  throw std::invalid_argument("unknown noise kind: " + std::string(name));
}

std::string_view to_string(NoiseKind k)
{
  switch (k) {
  case NoiseKind::gaussian: return "gaussian";
  case NoiseKind::coarse: return "coarse";
  case NoiseKind::simplex: return "simplex";
  case NoiseKind::pyramid: return "pyramid";
  case NoiseKind::synomaly: return "synomaly";
  }
  return "unknown";
}

void TrainConfig::validate() const
{
  synomaly_params().validate();
  if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) {
    throw std::invalid_argument("noise.mask_fraction must lie in [0, 1]");
  }
  if (!(gaussian_fraction >= 0.0 && gaussian_fraction <= 1.0)) {
    throw std::invalid_argument("noise.gaussian_fraction must lie in [0, 1]");
  }
  if (coarse.resolution < 1 || simplex.octaves < 1 || pyramid_levels < 1) {
    throw std::invalid_argument("noise: resolution, octaves and levels must be >= 1");
  }
  if (T < 1 || epochs < 1 || batch < 1 || !(lr > 0.0) || width < 1 || height < 1) {
    throw std::invalid_argument("train: T, epochs, batch, lr and image size must be positive");
  }
  arch.validate();
}

SynomalyParams TrainConfig::synomaly_params() const
{
  SynomalyParams p;
  p.sigma = sigma;
  p.tau = tau;
  p.direction = direction;
  p.intensity = intensity;
  if (mask_fraction > 0.0) {
    p.anatomical_mask = circular_mask(width, height, mask_fraction);
  }
  return p;
}

std::map<std::string, std::string> TrainConfig::describe() const
{
  auto kv = arch.describe();
  kv["noise.kind"] = to_string(noise);
  kv["noise.sigma"] = fmt(sigma);
  kv["noise.tau"] = fmt(tau);
  kv["noise.direction"] = std::to_string(direction);
  kv["noise.intensity"] = fmt(intensity);
  kv["noise.mask_fraction"] = fmt(mask_fraction);
  kv["noise.gaussian_fraction"] = fmt(gaussian_fraction);
  kv["noise.coarse_resolution"] = std::to_string(coarse.resolution);
  kv["noise.coarse_std"] = fmt(coarse.std);
  kv["noise.simplex_octaves"] = std::to_string(simplex.octaves);
  kv["noise.simplex_persistence"] = fmt(simplex.persistence);
  kv["noise.simplex_frequency"] = fmt(simplex.frequency);
  kv["noise.pyramid_levels"] = std::to_string(pyramid_levels);
  kv["noise.pyramid_decay"] = fmt(pyramid_decay);
  kv["schedule.kind"] = to_string(schedule);
  kv["schedule.T"] = std::to_string(T);
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.batch"] = std::to_string(batch);
  kv["train.lr"] = fmt(lr);
  kv["train.seed"] = std::to_string(seed);
  kv["data.width"] = std::to_string(width);
  kv["data.height"] = std::to_string(height);
  return kv;
}

TrainConfig TrainConfig::parse(std::map<std::string, std::string> const &kv)
{
  TrainConfig c;
  c.arch = Architecture::parse(kv);
  c.noise = parse_noise_kind(kv.at("noise.kind"));
  c.sigma = to_double(kv, "noise.sigma");
  c.tau = to_double(kv, "noise.tau");
  c.direction = static_cast<int>(to_int(kv, "noise.direction"));
  c.intensity = to_double(kv, "noise.intensity");
  c.mask_fraction = to_double(kv, "noise.mask_fraction");
  c.gaussian_fraction = to_double(kv, "noise.gaussian_fraction");
  c.coarse.resolution = static_cast<int>(to_int(kv, "noise.coarse_resolution"));
  c.coarse.std = to_double(kv, "noise.coarse_std");
  c.simplex.octaves = static_cast<int>(to_int(kv, "noise.simplex_octaves"));
  c.simplex.persistence = to_double(kv, "noise.simplex_persistence");
  c.simplex.frequency = to_double(kv, "noise.simplex_frequency");
  c.pyramid_levels = static_cast<int>(to_int(kv, "noise.pyramid_levels"));
  c.pyramid_decay = to_double(kv, "noise.pyramid_decay");
  c.schedule = parse_schedule_kind(kv.at("schedule.kind"));
  c.T = static_cast<int>(to_int(kv, "schedule.T"));
  c.epochs = static_cast<int>(to_int(kv, "train.epochs"));
  c.batch = static_cast<int>(to_int(kv, "train.batch"));
  c.lr = to_double(kv, "train.lr");
  c.seed = std::stoull(kv.at("train.seed"));
  c.width = static_cast<int>(to_int(kv, "data.width"));
  c.height = static_cast<int>(to_int(kv, "data.height"));
  c.validate();
  return c;
}

Image2D draw_noise(TrainConfig const &config, Rng &rng)
{
  int const w = config.width;
  int const h = config.height;
  if (config.gaussian_fraction > 0.0 && rng.uniform() < config.gaussian_fraction) {
    return gaussian_noise(w, h, rng);
  }
  switch (config.noise) {
  case NoiseKind::gaussian: return gaussian_noise(w, h, rng);
  case NoiseKind::coarse: return coarse_noise(w, h, config.coarse, rng);
  case NoiseKind::simplex: return simplex_noise(w, h, config.simplex, rng);
  case NoiseKind::pyramid: return pyramid_noise(w, h, config.pyramid_levels, config.pyramid_decay, rng);
  case NoiseKind::synomaly: return synomaly_noise(w, h, config.synomaly_params(), rng).field;
  }
  throw std::invalid_argument("draw_noise: invalid kind");
}

Example<float> sample_training_example(Image2D const &x0, TrainConfig const &config, Schedule const &sched, Rng &rng)
{
  if (x0.cols() != config.width || x0.rows() != config.height) {
    throw std::invalid_argument("sample_training_example: image size does not match the config");
  }
  Example<float> ex;
  ex.t = static_cast<int>(rng.uniform_int(1, sched.T));
  ex.eps_target = draw_noise(config, rng);
  ex.x_t = forward_noise(x0, ex.t, ex.eps_target, sched);
  return ex;
}

void write_checkpoint(std::ostream &os, Checkpoint const &ckpt)
{
  os.write(checkpoint_magic, 8);
  put_u32(os, Checkpoint::version);
  std::string descriptor;
  auto kv = ckpt.config.describe();
  kv["checkpoint.tensors"] = std::to_string(ckpt.model.params().size());
  for (auto const &[k, v] : kv) {
    descriptor += k + "=" + v + "\n";
  }
  put_u32(os, static_cast<std::uint32_t>(descriptor.size()));
  os.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
  for (auto const &p : ckpt.model.params()) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    Tensor t;
    t.dims.assign(p.shape.begin(), p.shape.end());
    t.data.assign(p.value.data(), p.value.data() + p.value.size());
    write_tensor(os, t);
  }
}

Checkpoint read_checkpoint(std::istream &is)
{
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != checkpoint_magic) {
    throw FormatError("checkpoint: bad magic, expected \"SYNOCKPT\"");
  }
  std::uint32_t version = 0;
  if (!get_u32(is, version)) {
    throw FormatError("checkpoint: truncated header");
  }
  if (version != Checkpoint::version) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::uint32_t len = 0;
  if (!get_u32(is, len) || len > (1u << 20)) {
    throw FormatError("checkpoint: bad descriptor length");
  }
  std::string descriptor(len, '\0');
  if (!is.read(descriptor.data(), len)) {
    throw FormatError("checkpoint: truncated descriptor");
  }
  std::map<std::string, std::string> kv;
  std::stringstream ss(descriptor);
  std::string line;
  while (std::getline(ss, line)) {
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("checkpoint: malformed descriptor line: " + line);
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Checkpoint ckpt;
  std::size_t tensors = 0;
  try {
    ckpt.config = TrainConfig::parse(kv);
    tensors = std::stoull(kv.at("checkpoint.tensors"));
  } catch (FormatError const &) {
    throw;
  } catch (std::exception const &e) {
    throw FormatError(std::string("checkpoint: bad descriptor: ") + e.what());
  }
  ParameterSet<float> params;
  for (std::size_t i = 0; i < tensors; ++i) {
    std::uint32_t name_len = 0;
    if (!get_u32(is, name_len) || name_len > 4096) {
      throw FormatError("checkpoint: truncated tensor table");
    }
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw FormatError("checkpoint: truncated tensor name");
    }
    Tensor const t = read_tensor(is);
    Parameter<float> p;
    p.name = std::move(name);
    p.shape.assign(t.dims.begin(), t.dims.end());
    p.value = Eigen::Map<Vector<float> const>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
    params.push_back(std::move(p));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("checkpoint: trailing bytes");
  }
  try {
    ckpt.model = Denoiser<float>(ckpt.config.arch, std::move(params));
  } catch (std::invalid_argument const &e) {
    throw FormatError(std::string("checkpoint: tensors do not match the architecture: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(Checkpoint const &ckpt, std::filesystem::path const &path)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  write_checkpoint(os, ckpt);
  if (!os) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

Checkpoint load_checkpoint(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open for reading: " + path.string());
  }
  return read_checkpoint(is);
}

TrainResult train(TrainConfig const &config, std::vector<Image2D> const &healthy, TrainOptions const &options)
{
  config.validate();
  if (healthy.empty()) {
    throw std::invalid_argument("train: the healthy set is empty");
  }
  Schedule const sched = make_schedule(config.schedule, config.T);
  TrainResult result;
  result.checkpoint.config = config;
  Denoiser<float> &model = result.checkpoint.model;
  model = init_model<float>(config.arch, config.seed);
  auto adam = AdamState<float>::for_params(model.params(), config.lr);

  Rng const root(config.seed, 0x7a11);
  std::size_t const n = healthy.size();
  std::vector<std::size_t> order(n);
  bool first = true;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.substream(1).substream(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i)))]);
    }
    Rng const epoch_rng = root.substream(2).substream(static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch)) {
      std::size_t const end = std::min(n, start + static_cast<std::size_t>(config.batch));
      std::vector<Example<float>> batch(end - start);
      parallel_for(batch.size(), options.workers, [&](std::size_t b) {
        Rng rng = epoch_rng.substream(start + b);
        batch[b] = sample_training_example(healthy[order[start + b]], config, sched, rng);
      });
      auto const lg = model.loss_and_grad(batch);
      if (!std::isfinite(lg.loss)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                                 std::to_string(start));
      }
      if (first) {
        result.initial_loss = lg.loss;
        first = false;
      }
      loss_sum += lg.loss * static_cast<double>(batch.size());
      adam_update(model.params(), lg.grads, adam);
    }
    double const mean = loss_sum / static_cast<double>(n);
    result.epoch_loss.push_back(mean);
    if (options.on_epoch) {
      options.on_epoch(epoch + 1, mean);
    }
  }
  return result;
}

void write_loss_csv(std::filesystem::path const &path, std::vector<double> const &epoch_loss)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  os << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    os << e + 1 << ',' << fmt(epoch_loss[e]) << '\n';
  }
}

} // namespace synomaly
