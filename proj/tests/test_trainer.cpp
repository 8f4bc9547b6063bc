#include "synomaly/phantom.hpp"
#include "synomaly/tensor_io.hpp"
#include "synomaly/trainer.hpp"

#include <doctest.h>

#include <cstring>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace synomaly;

namespace fs = std::filesystem;

namespace {

TrainConfig small_config()
{
  TrainConfig c;
  c.width = 16;
  c.height = 16;
  c.arch = Architecture::tiny();
  c.epochs = 2;
  c.batch = 4;
  c.seed = 5;
  c.mask_fraction = 0.9;
  return c;
}

std::vector<Image2D> small_set(int n, int size = 16)
{
  PhantomSpec spec;
  spec.size = size;
  std::vector<Image2D> out;
  for (int k = 0; k < n; ++k) {
    out.push_back(gen_healthy(spec, Rng(2).substream(k)).image);
  }
  return out;
}

std::string bytes_of(Checkpoint const &c)
{
  std::ostringstream os;
  write_checkpoint(os, c);
  return os.str();
}

bool identical(Image2D const &a, Image2D const &b)
{
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

} // namespace

TEST_CASE("gaussian training examples")
{
  TrainConfig c = small_config();
  c.noise = NoiseKind::gaussian;
  auto const sched = make_schedule(c.schedule, c.T);
  Image2D const x0 = small_set(1)[0];
  Rng a(7);
  Rng b(7);
  auto const ex = sample_training_example(x0, c, sched, a);
  int const t = static_cast<int>(b.uniform_int(1, c.T));
  CHECK(ex.t == t);
  CHECK(identical(ex.eps_target, gaussian_noise(16, 16, b)));
  // x_t is rebuilt bit for bit from the stored target.
  CHECK(identical(ex.x_t, forward_noise(x0, ex.t, ex.eps_target, sched)));
}

TEST_CASE("synomaly examples carry the full corruption as target")
{
  TrainConfig c = small_config();
  auto const sched = make_schedule(c.schedule, c.T);
  Image2D const x0 = small_set(1)[0];
  for (int s = 0; s < 20; ++s) {
    Rng a(11, s);
    Rng b(11, s);
    auto const ex = sample_training_example(x0, c, sched, a);
    b.uniform_int(1, c.T);
    auto const smp = synomaly_noise(16, 16, c.synomaly_params(), b);
    CHECK(identical(ex.eps_target, smp.field));
    CHECK(identical(ex.x_t, forward_noise(x0, ex.t, ex.eps_target, sched)));
  }

  // With tau = 255 no region survives, so the draw is the Gaussian one.
  c.tau = 255.0;
  TrainConfig g = c;
  g.noise = NoiseKind::gaussian;
  for (int s = 0; s < 20; ++s) {
    Rng a(12, s);
    Rng b(12, s);
    auto const syn = sample_training_example(x0, c, sched, a);
    auto const gau = sample_training_example(x0, g, sched, b);
    CHECK(identical(syn.eps_target, gau.eps_target));
  }
}

TEST_CASE("every noise family produces finite fields of the right size")
{
  TrainConfig c = small_config();
  for (auto kind : {NoiseKind::gaussian, NoiseKind::coarse, NoiseKind::simplex, NoiseKind::pyramid, NoiseKind::synomaly}) {
    c.noise = kind;
    Rng rng(1);
    Image2D const f = draw_noise(c, rng);
    CHECK(f.rows() == 16);
    CHECK(f.cols() == 16);
    CHECK(all_finite(f));
    CHECK(parse_noise_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_noise_kind("perlin"), std::invalid_argument);
}

TEST_CASE("timesteps are uniform on 1..T")
{
  TrainConfig c = small_config();
  c.noise = NoiseKind::gaussian;
  auto const sched = make_schedule(c.schedule, c.T);
  Image2D const x0 = Image2D::Zero(16, 16);
  Rng rng(21);
  int const bins = 20;
  std::vector<int> hist(bins, 0);
  int const draws = 10000;
  for (int i = 0; i < draws; ++i) {
    int const t = sample_training_example(x0, c, sched, rng).t;
    REQUIRE(t >= 1);
    REQUIRE(t <= c.T);
    hist[(t - 1) * bins / c.T] += 1;
  }
  double chi2 = 0.0;
  double const expect = static_cast<double>(draws) / bins;
  for (int h : hist) {
    chi2 += (h - expect) * (h - expect) / expect;
  }
  // 95% quantile of chi-square with 19 degrees of freedom.
  CHECK(chi2 < 30.144);
}

TEST_CASE("config describe and parse round trip")
{
  TrainConfig c = small_config();
  c.lr = 0.1 + 0.2;
  c.sigma = 3.3;
  c.noise = NoiseKind::simplex;
  auto const back = TrainConfig::parse(c.describe());
  CHECK(back.describe() == c.describe());
  CHECK(back.lr == c.lr);
  CHECK(back.arch == c.arch);
  auto kv = c.describe();
  kv["train.epochs"] = "0";
  CHECK_THROWS_AS(TrainConfig::parse(kv), std::invalid_argument);
}

TEST_CASE("one image, one epoch, one batch")
{
  TrainConfig c = small_config();
  c.epochs = 1;
  auto const r = train(c, small_set(1));
  CHECK(r.epoch_loss.size() == 1);
  CHECK(r.epoch_loss[0] == r.initial_loss);
  CHECK_THROWS_AS(train(c, {}), std::invalid_argument);
}

TEST_CASE("logged loss is the exact batch mean")
{
  TrainConfig c = small_config();
  c.epochs = 1;
  c.batch = 6;
  auto const data = small_set(6);
  auto const r = train(c, data);
  REQUIRE(r.epoch_loss.size() == 1);

  // Replay the epoch: same shuffle and per-example streams, initial weights.
  auto const sched = make_schedule(c.schedule, c.T);
  auto const model = init_model<float>(c.arch, c.seed);
  Rng const root(c.seed, 0x7a11);
  std::vector<std::size_t> order(6);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle = root.substream(1).substream(0);
  for (std::size_t i = 5; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i)))]);
  }
  double fold = 0.0;
  for (std::size_t b = 0; b < 6; ++b) {
    Rng rng = root.substream(2).substream(0).substream(b);
    auto const ex = sample_training_example(data[order[b]], c, sched, rng);
    fold += (model.forward(ex.x_t, ex.t) - ex.eps_target).cast<double>().square().mean();
  }
  CHECK(r.epoch_loss[0] == doctest::Approx(fold / 6.0).epsilon(1e-6));
}

TEST_CASE("training is deterministic and independent of the worker count")
{
  TrainConfig const c = small_config();
  auto const data = small_set(10);
  TrainOptions one;
  TrainOptions three;
  three.workers = 3;
  auto const a = train(c, data, one);
  auto const b = train(c, data, three);
  CHECK(bytes_of(a.checkpoint) == bytes_of(b.checkpoint));
  CHECK(a.epoch_loss == b.epoch_loss);
  TrainConfig other = c;
  other.seed = 6;
  CHECK(bytes_of(train(other, data).checkpoint) != bytes_of(a.checkpoint));
}

TEST_CASE("non-finite loss aborts training")
{
  TrainConfig c = small_config();
  auto data = small_set(4);
  data[2](3, 3) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train(c, data), std::runtime_error);
}

TEST_CASE("training reduces the loss")
{
  TrainConfig c = small_config();
  c.arch = Architecture::desk();
  c.epochs = 12;
  c.batch = 8;
  auto const r = train(c, small_set(64));
  INFO("initial " << r.initial_loss << " final " << r.epoch_loss.back());
  CHECK(r.epoch_loss.back() < 0.5 * r.initial_loss);
}

TEST_CASE("checkpoint round trip")
{
  TrainConfig c = small_config();
  c.epochs = 1;
  auto const r = train(c, small_set(4));
  auto const dir = fs::temp_directory_path() / "synomaly_test_ckpt";
  fs::create_directories(dir);
  save_checkpoint(r.checkpoint, dir / "a.ckpt");
  auto const back = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(back, dir / "b.ckpt");
  std::string const bytes = bytes_of(r.checkpoint);
  CHECK(bytes == bytes_of(back));
  REQUIRE(back.model.params().size() == r.checkpoint.model.params().size());
  for (std::size_t i = 0; i < back.model.params().size(); ++i) {
    auto const &p = back.model.params()[i];
    auto const &q = r.checkpoint.model.params()[i];
    CHECK(p.name == q.name);
    CHECK(p.shape == q.shape);
    CHECK(std::memcmp(p.value.data(), q.value.data(), sizeof(float) * static_cast<std::size_t>(p.value.size())) == 0);
  }
  CHECK(back.config.describe() == c.describe());
  CHECK(bytes.substr(0, 8) == "SYNOCKPT");

  for (std::size_t cut : {std::size_t{4}, std::size_t{10}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream is(bytes.substr(0, cut));
    CHECK_THROWS_AS(read_checkpoint(is), FormatError);
  }
  std::string foreign = bytes;
  foreign.replace(0, 8, "NOTACKPT");
  std::istringstream fis(foreign);
  try {
    read_checkpoint(fis);
    FAIL("expected a format error");
  } catch (FormatError const &e) {
    CHECK(std::string(e.what()).find("SYNOCKPT") != std::string::npos);
  }
  std::string future = bytes;
  future[8] = 2;
  std::istringstream vis(future);
  CHECK_THROWS_AS(read_checkpoint(vis), FormatError);
}

TEST_CASE("loss csv")
{
  auto const path = fs::temp_directory_path() / "synomaly_test_loss.csv";
  write_loss_csv(path, {1.5, 0.25});
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "epoch,mean_loss\n1,1.5\n2,0.25\n");
}
