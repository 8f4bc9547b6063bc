#include "cli.hpp"

#include "synomaly/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Outcome
{
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> const &args)
{
  std::ostringstream out;
  std::ostringstream err;
  int const code = synomaly::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(fs::path const &p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(fs::path const &p)
{
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) {
    out.push_back(l);
  }
  return out;
}

std::map<std::string, std::string> snapshot(fs::path const &dir)
{
  std::map<std::string, std::string> m;
  for (auto const &e : fs::directory_iterator(dir)) {
    if (e.path().filename() != "timing.csv") {
      m[e.path().filename().string()] = slurp(e.path());
    }
  }
  return m;
}

fs::path workspace()
{
  static fs::path const root = [] {
    auto const r = fs::temp_directory_path() / "synomaly_test_cli";
    fs::remove_all(r);
    fs::create_directories(r);
    return r;
  }();
  return root;
}

std::string at(std::string const &name)
{
  return (workspace() / name).string();
}

std::vector<std::string> const tiny_model{"--set", "model.channels=2,2", "--set", "model.embed_dim=8",
                                          "--set", "model.bottleneck_convs=1"};

// A dataset, a one-epoch tiny checkpoint and an inference run, built once.
void ensure_pipeline()
{
  static bool done = false;
  if (done) {
    return;
  }
  REQUIRE(run({"gen-phantom", "--kind", "vessel", "--counts", "12,3,3", "--size", "32", "--out", at("data"), "--seed",
               "1"})
            .code == 0);
  std::vector<std::string> train{"train", "--data", at("data"), "--noise", "synomaly", "--preset", "large",
                                 "--epochs", "1", "--out", at("run"), "--seed", "2"};
  train.insert(train.end(), tiny_model.begin(), tiny_model.end());
  REQUIRE(run(train).code == 0);
  REQUIRE(run({"infer", "--ckpt", at("run/model.ckpt"), "--data", at("data"), "--steps", "40", "--kernel", "5", "--th",
               "0.1", "--max-stages", "3", "--multi", "--out", at("pred"), "--seed", "3", "--workers", "1"})
            .code == 0);
  done = true;
}

} // namespace

TEST_CASE("noise-preview writes a PGM pair")
{
  auto const r = run({"noise-preview", "--preset", "moderate", "--out", at("preview"), "--seed", "5"});
  REQUIRE(r.code == 0);
  for (auto const *name : {"field.pgm", "regions.pgm"}) {
    std::string const bytes = slurp(workspace() / "preview" / name);
    CHECK(bytes.rfind("P5\n64 64\n255\n", 0) == 0);
    CHECK(bytes.size() == 13 + 64 * 64);
  }
  CHECK(fs::exists(workspace() / "preview/field.stnsr"));
  CHECK(fs::exists(workspace() / "preview/regions.stnsr"));
  CHECK(fs::exists(workspace() / "preview/run_config.txt"));
}

TEST_CASE("pipeline outputs")
{
  ensure_pipeline();
  CHECK(lines(workspace() / "data/manifest.csv").size() == 1 + 18);
  CHECK(lines(workspace() / "run/loss.csv") == std::vector<std::string>{"epoch,mean_loss", lines(workspace() / "run/loss.csv")[1]});
  CHECK(fs::exists(workspace() / "run/run_config.txt"));
  for (auto const *f : {"a_00000_counterfactual.pgm", "a_00000_counterfactual.stnsr", "a_00000_mask.stnsr",
                        "h_00002_trace.csv", "scores.csv", "timing.csv", "run_config.txt"}) {
    CHECK(fs::exists(workspace() / "pred" / f));
  }
  auto const trace = lines(workspace() / "pred/a_00001_trace.csv");
  CHECK(trace.front() == "stage,mask_pixels,rel_change");
  CHECK(trace.size() >= 2);
  CHECK(trace.size() <= 4);
  CHECK(trace[1].rfind("1,", 0) == 0);

  REQUIRE(run({"eval", "--pred", at("pred"), "--gt", at("data"), "--out", at("eval")}).code == 0);
  CHECK(lines(workspace() / "eval/per_image.csv").size() == 7);
  CHECK(lines(workspace() / "eval/per_image.csv").front() == "id,dice,precision,recall");
  CHECK(lines(workspace() / "eval/aggregate.csv").front() == "metric,mean,std");
  CHECK(lines(workspace() / "eval/roc.csv").size() == 7);
  CHECK(lines(workspace() / "eval/roc.csv").front() == "score,label");
}

TEST_CASE("eval on identical prediction and truth gives dice 1")
{
  ensure_pipeline();
  REQUIRE(run({"eval", "--pred", at("pred"), "--gt", at("pred"), "--out", at("self")}).code == 0);
  auto const agg = lines(workspace() / "self/aggregate.csv");
  REQUIRE(agg.size() >= 2);
  CHECK(agg[1] == "dice,1,0");
}

TEST_CASE("grid-search over a 2x2x2 grid has 8 rows")
{
  ensure_pipeline();
  auto const r = run({"grid-search", "--ckpt", at("run/model.ckpt"), "--data", at("data"), "--grid",
                      "T=20,40;n=3,5;Th=0.1,0.2", "--out", at("grid"), "--seed", "4"});
  REQUIRE(r.code == 0);
  auto const rows = lines(workspace() / "grid/grid.csv");
  CHECK(rows.size() == 9);
  CHECK(rows.front() == "T,n,Th,mean_dice,std_dice");
}

TEST_CASE("re-running from the config echo reproduces outputs")
{
  ensure_pipeline();
  REQUIRE(run({"train", "--config", at("run/run_config.txt"), "--out", at("run_again")}).code == 0);
  CHECK(slurp(workspace() / "run/model.ckpt") == slurp(workspace() / "run_again/model.ckpt"));
  CHECK(slurp(workspace() / "run/loss.csv") == slurp(workspace() / "run_again/loss.csv"));

  REQUIRE(run({"infer", "--config", at("pred/run_config.txt"), "--out", at("pred_again"), "--workers", "3"}).code == 0);
  CHECK(snapshot(workspace() / "pred") == snapshot(workspace() / "pred_again"));
}

TEST_CASE("exit codes")
{
  ensure_pipeline();
  {
    std::ofstream(workspace() / "bad.cfg") << "# comment\ninfer.steps = 10\ninfer.stepz = 3\n";
    auto const r = run({"infer", "--config", at("bad.cfg"), "--ckpt", at("run/model.ckpt"), "--data", at("data"),
                        "--out", at("x"), "--seed", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("infer.stepz") != std::string::npos);
  }
  {
    auto const r = run({"noise-preview", "--set", "noise.colour=blue", "--out", at("x"), "--seed", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("noise.colour") != std::string::npos);
  }
  CHECK(run({"infer", "--ckpt", at("missing.ckpt"), "--data", at("data"), "--out", at("x"), "--seed", "1"}).code == 3);
  CHECK(run({"train", "--data", at("nowhere"), "--out", at("x"), "--seed", "1"}).code == 3);
  CHECK(run({"train", "--config", at("nothing.cfg"), "--out", at("x"), "--seed", "1"}).code == 3);
  CHECK(run({"eval", "--pred", at("pred"), "--gt", at("nowhere"), "--out", at("x")}).code == 3);
  // Randomized commands refuse to run without a seed.
  CHECK(run({"gen-phantom", "--out", at("x")}).code == 2);
  CHECK(run({"noise-preview", "--preset", "large", "--out", at("x")}).code == 2);
  CHECK(run({"infer", "--ckpt", at("run/model.ckpt"), "--data", at("data"), "--out", at("x")}).code == 2);
  CHECK(run({"noise-preview", "--preset", "huge", "--out", at("x"), "--seed", "1"}).code == 2);
  CHECK(run({"infer", "--ckpt", at("run/model.ckpt"), "--data", at("data"), "--kernel", "4", "--out", at("x"),
             "--seed", "1"})
          .code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"infer", "--single", "--multi", "--out", at("x")}).code == 2);

  std::ofstream(workspace() / "junk.ckpt") << "not a checkpoint at all";
  CHECK(run({"infer", "--ckpt", at("junk.ckpt"), "--data", at("data"), "--out", at("x"), "--seed", "1"}).code == 4);
}

TEST_CASE("config registry")
{
  synomaly::RunConfig rc;
  CHECK(rc.get("infer.steps") == "250");
  CHECK_THROWS_AS(rc.set("model.depth", "3"), synomaly::UnknownKey);
  rc.merge_text("eval.grid_T = 10, 20\n\n# note\ninfer.th=0.25\n");
  CHECK(rc.get_ints("eval.grid_T") == std::vector<int>{10, 20});
  CHECK(rc.get_double("infer.th") == 0.25);
  CHECK_THROWS_AS(rc.get_seed("train.seed"), synomaly::ConfigError);
  rc.set("infer.steps", "12x");
  CHECK_THROWS_AS(rc.get_int("infer.steps"), synomaly::ConfigError);
  synomaly::RunConfig back;
  back.merge_text(rc.to_text());
  CHECK(back.values() == rc.values());
  for (auto const &key : synomaly::RunConfig::keys()) {
    auto const ns = key.substr(0, key.find('.'));
    bool const ok = ns == "data" || ns == "noise" || ns == "schedule" || ns == "model" || ns == "train" ||
                    ns == "infer" || ns == "eval";
    CHECK(ok);
  }
}
