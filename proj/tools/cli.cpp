#include "cli.hpp"

#include "synomaly/config.hpp"
#include "synomaly/parallel.hpp"
#include "synomaly/tensor_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <list>
#include <optional>
#include <set>

namespace synomaly::cli {

namespace fs = std::filesystem;

namespace {

std::string const config_echo = "run_config.txt";

struct Common
{
  std::optional<std::string> config_file;
  std::vector<std::string> sets;
  unsigned workers = default_workers();
  std::string out;
};

// Flag values land here and are copied into the config after the file and
// --set overrides, so flags win.
struct Bindings
{
  std::list<std::pair<std::string, std::optional<std::string>>> flags;

  void add(CLI::App *app, std::string const &flag, std::string const &key, std::string const &help)
  {
    flags.emplace_back(key, std::nullopt);
    app->add_option(flag, flags.back().second, help + " [" + key + "]");
  }

  void apply(RunConfig &rc) const
  {
    for (auto const &[key, value] : flags) {
      if (value) {
        rc.set(key, *value);
      }
    }
  }
};

void add_common(CLI::App *app, Common &c, bool needs_out = true)
{
  app->add_option("--config", c.config_file, "key=value configuration file");
  app->add_option("--set", c.sets, "override one key, as key=value");
  app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  auto *o = app->add_option("--out", c.out, "output directory");
  if (needs_out) {
    o->required();
  }
}

RunConfig resolve(Common const &c, Bindings const &b)
{
  RunConfig rc;
  if (c.config_file) {
    rc.load(*c.config_file);
  }
  for (auto const &s : c.sets) {
    rc.merge_text(s, "--set");
  }
  b.apply(rc);
  return rc;
}

fs::path prepare_out(Common const &c, RunConfig const &rc)
{
  fs::path const out(c.out);
  fs::create_directories(out);
  rc.save(out / config_echo);
  return out;
}

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(fs::path const &p)
{
  std::ofstream os(p, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + p.string());
  }
  return os;
}

fs::path data_root(RunConfig const &rc)
{
  if (!rc.has("data.root")) {
    throw ConfigError("a dataset is required: pass --data or set data.root");
  }
  fs::path const root(rc.get("data.root"));
  require_exists(root / "manifest.csv");
  return root;
}

Checkpoint checkpoint(RunConfig const &rc)
{
  if (!rc.has("infer.ckpt")) {
    throw ConfigError("a checkpoint is required: pass --ckpt or set infer.ckpt");
  }
  require_exists(rc.get("infer.ckpt"));
  return load_checkpoint(rc.get("infer.ckpt"));
}

void validate(InferenceParams const &p, int T)
{
  try {
    p.validate(T);
  } catch (std::invalid_argument const &e) {
    throw ConfigError(e.what());
  }
}

int gen_phantom(Common const &c, Bindings const &b, std::ostream &out)
{
  RunConfig const rc = resolve(c, b);
  auto const spec = phantom_spec(rc);
  auto const counts = dataset_counts(rc);
  std::uint64_t const seed = rc.get_seed("data.seed");
  gen_dataset(c.out, counts, spec, seed, c.workers);
  prepare_out(c, rc);
  out << "wrote " << counts.train_healthy + counts.test_anomalous + counts.test_healthy << " phantoms to " << c.out
      << "\n";
  return ok;
}

int train_cmd(Common const &c, Bindings const &b, std::ostream &out)
{
  RunConfig const rc = resolve(c, b);
  auto const root = data_root(rc);
  auto const images = load_train_images(root);
  if (images.empty()) {
    throw ConfigError("dataset has no training images: " + root.string());
  }
  TrainConfig const config = train_config(rc, static_cast<int>(images[0].cols()), static_cast<int>(images[0].rows()));
  fs::path const dir = prepare_out(c, rc);
  TrainOptions opts;
  opts.workers = c.workers;
  opts.on_epoch = [&](int epoch, double loss) { out << "epoch " << epoch << " loss " << num(loss) << std::endl; };
  auto const r = train(config, images, opts);
  save_checkpoint(r.checkpoint, dir / "model.ckpt");
  write_loss_csv(dir / "loss.csv", r.epoch_loss);
  out << "initial loss " << num(r.initial_loss) << ", final " << num(r.epoch_loss.back()) << "\n";
  return ok;
}

void write_trace(fs::path const &p, std::vector<StageRecord> const &trace)
{
  auto os = open_out(p);
  os << "stage,mask_pixels,rel_change\n";
  for (std::size_t s = 0; s < trace.size(); ++s) {
    os << s + 1 << "," << trace[s].mask_pixels << "," << num(trace[s].rel_change) << "\n";
  }
}

int infer_cmd(Common const &c, Bindings const &b, std::ostream &out)
{
  RunConfig const rc = resolve(c, b);
  auto const ckpt = checkpoint(rc);
  auto const root = data_root(rc);
  auto const params = inference_params(rc);
  std::uint64_t const seed = rc.get_seed("infer.seed");
  auto const sched = ckpt.schedule();
  validate(params, sched.T);
  auto const images = load_test_images(root);
  fs::path const dir = prepare_out(c, rc);

  std::vector<InferenceResult> results(images.size());
  Rng const rng(seed);
  parallel_for(images.size(), c.workers, [&](std::size_t i) {
    results[i] = multi_stage_infer(images[i].image, ckpt.model, sched, params, rng.substream(i));
  });

  auto scores = open_out(dir / "scores.csv");
  auto timing = open_out(dir / "timing.csv");
  scores << "id,label,mask_pixels,residual_sum\n";
  timing << "id,stages,ms\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto const &id = images[i].id;
    auto const &r = results[i];
    save_image(dir / (id + "_counterfactual.stnsr"), r.counterfactual);
    save_pgm(dir / (id + "_counterfactual.pgm"), r.counterfactual);
    save_mask(dir / (id + "_mask.stnsr"), r.mask);
    write_trace(dir / (id + "_trace.csv"), r.trace);
    scores << id << "," << (images[i].anomalous ? 1 : 0) << "," << num(image_score(r.trace, ScoreKind::mask_pixels))
           << "," << num(image_score(r.trace, ScoreKind::residual_sum)) << "\n";
    timing << id << "," << r.trace.size() << "," << num(r.elapsed_ms) << "\n";
  }
  out << "inferred " << images.size() << " images into " << c.out << "\n";
  return ok;
}

ScoreKind checked_score(RunConfig const &rc)
{
  try {
    return parse_score_kind(rc.get("eval.score"));
  } catch (std::invalid_argument const &e) {
    throw ConfigError(std::string("eval.score: ") + e.what());
  }
}

struct Scored
{
  std::string id;
  double score = 0.0;
  bool anomalous = false;
};

std::vector<Scored> read_scores(fs::path const &p, ScoreKind kind)
{
  std::vector<Scored> out;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (auto next = line.find(','); ; next = line.find(',', pos)) {
      f.push_back(line.substr(pos, next - pos));
      if (next == std::string::npos) {
        break;
      }
      pos = next + 1;
    }
    if (f.size() != 4) {
      throw FormatError("scores.csv: expected id,label,mask_pixels,residual_sum");
    }
    out.push_back({f[0], std::stod(kind == ScoreKind::mask_pixels ? f[2] : f[3]), f[1] == "1"});
  }
  return out;
}

int eval_cmd(Common const &c, Bindings const &b, std::ostream &out)
{
  RunConfig const rc = resolve(c, b);
  if (!rc.has("eval.pred") || !rc.has("eval.gt")) {
    throw ConfigError("eval needs --pred and --gt");
  }
  fs::path const pred(rc.get("eval.pred"));
  fs::path const gt(rc.get("eval.gt"));
  require_exists(pred);
  require_exists(gt);
  ScoreKind const kind = checked_score(rc);

  // Ground truth from a dataset manifest, or mask files named like the predictions.
  struct Item
  {
    std::string id;
    Mask gt;
    std::optional<bool> anomalous;
  };
  std::vector<Item> items;
  if (fs::exists(gt / "manifest.csv")) {
    for (auto &li : load_test_images(gt)) {
      items.push_back({li.id, std::move(li.gt), li.anomalous});
    }
  } else {
    std::set<std::string> ids;
    for (auto const &e : fs::directory_iterator(pred)) {
      std::string const name = e.path().filename().string();
      std::string const suffix = "_mask.stnsr";
      if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        ids.insert(name.substr(0, name.size() - suffix.size()));
      }
    }
    for (auto const &id : ids) {
      fs::path g = gt / (id + "_mask.stnsr");
      if (!fs::exists(g)) {
        g = gt / (id + "_gt.stnsr");
      }
      require_exists(g);
      items.push_back({id, load_mask(g), std::nullopt});
    }
  }
  if (items.empty()) {
    throw ConfigError("eval: nothing to evaluate in " + pred.string());
  }

  fs::path const dir = prepare_out(c, rc);
  auto per_image = open_out(dir / "per_image.csv");
  per_image << "id,dice,precision,recall\n";
  std::vector<double> d, p, r, da, pa, ra;
  for (auto const &it : items) {
    fs::path const m = pred / (it.id + "_mask.stnsr");
    require_exists(m);
    auto const s = pixel_scores(load_mask(m), it.gt);
    per_image << it.id << "," << num(s.dice) << "," << num(s.precision) << "," << num(s.recall) << "\n";
    d.push_back(s.dice);
    p.push_back(s.precision);
    r.push_back(s.recall);
    if (it.anomalous.value_or(false)) {
      da.push_back(s.dice);
      pa.push_back(s.precision);
      ra.push_back(s.recall);
    }
  }

  auto agg = open_out(dir / "aggregate.csv");
  agg << "metric,mean,std\n";
  auto row = [&](std::string const &name, std::vector<double> const &v) {
    auto const s = summarize(v);
    agg << name << "," << num(s.mean) << "," << num(s.std) << "\n";
  };
  row("dice", d);
  row("precision", p);
  row("recall", r);
  bool const labelled = items.front().anomalous.has_value();
  if (labelled && !da.empty()) {
    row("dice_anomalous", da);
    row("precision_anomalous", pa);
    row("recall_anomalous", ra);
  }
  if (labelled && fs::exists(pred / "scores.csv")) {
    auto const scored = read_scores(pred / "scores.csv", kind);
    auto roc = open_out(dir / "roc.csv");
    roc << "score,label\n";
    std::vector<double> s;
    std::vector<bool> y;
    for (auto const &x : scored) {
      roc << num(x.score) << "," << (x.anomalous ? 1 : 0) << "\n";
      s.push_back(x.score);
      y.push_back(x.anomalous);
    }
    try {
      agg << "auroc," << num(auroc(s, y)) << ",0\n";
    } catch (UndefinedMetric const &) {
      // Single-class score sets have no AUROC.
    }
  }
  out << "mean dice " << num(summarize(d).mean) << " over " << items.size() << " images\n";
  return ok;
}

int grid_cmd(Common const &c, Bindings const &b, std::ostream &out)
{
  RunConfig const rc = resolve(c, b);
  auto const ckpt = checkpoint(rc);
  auto const root = data_root(rc);
  auto const grid = grid_spec(rc);
  auto const base = inference_params(rc);
  std::uint64_t const seed = rc.get_seed("infer.seed");
  for (int steps : grid.steps) {
    InferenceParams p = base;
    p.steps = steps;
    for (int k : grid.kernels) {
      p.kernel = k;
      for (double th : grid.thresholds) {
        p.threshold = th;
        validate(p, ckpt.config.T);
      }
    }
  }
  std::vector<LabeledImage> val;
  for (auto &li : load_test_images(root)) {
    if (li.anomalous) {
      val.push_back(std::move(li));
    }
  }
  if (val.empty()) {
    throw ConfigError("grid-search needs anomalous images with ground truth in " + root.string());
  }
  fs::path const dir = prepare_out(c, rc);
  auto const rows = grid_search(ckpt.model, ckpt.schedule(), val, grid, base, seed, c.workers);
  write_grid_csv(dir / "grid.csv", rows);
  auto const &best = rows.front();
  out << "best T=" << best.steps << " n=" << best.kernel << " Th=" << num(best.threshold) << " dice "
      << num(best.mean_dice) << "\n";
  return ok;
}

int noise_preview(Common const &c, Bindings const &b, std::ostream &out)
{
  RunConfig const rc = resolve(c, b);
  SynomalyParams p = noise_params(rc);
  int const size = static_cast<int>(rc.get_int("data.size"));
  double const mf = rc.get_double("noise.mask_fraction");
  if (mf > 0.0) {
    p.anatomical_mask = circular_mask(size, size, mf);
  }
  Rng rng(rc.get_seed("noise.seed"));
  auto const s = synomaly_noise(size, size, p, rng);
  fs::path const dir = prepare_out(c, rc);
  save_image(dir / "field.stnsr", s.field);
  save_pgm(dir / "field.pgm", normalize_unit(s.field));
  save_mask(dir / "regions.stnsr", s.region_mask);
  save_pgm(dir / "regions.pgm", to_image<float>(s.region_mask));
  out << "regions " << connected_components(s.region_mask).size() << ", pixels " << count(s.region_mask) << "\n";
  return ok;
}

} // namespace

int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Synomaly anomaly segmentation toolkit", "synomaly"};
  app.require_subcommand(1);
  Common common;
  std::map<std::string, Bindings> bind;

  auto *gen = app.add_subcommand("gen-phantom", "generate a phantom dataset");
  add_common(gen, common);
  bind["gen-phantom"].add(gen, "--kind", "data.kind", "vessel or organ");
  bind["gen-phantom"].add(gen, "--counts", "data.counts", "train_healthy,test_anomalous,test_healthy");
  bind["gen-phantom"].add(gen, "--size", "data.size", "image side");
  bind["gen-phantom"].add(gen, "--seed", "data.seed", "random seed");

  auto *tr = app.add_subcommand("train", "train a denoiser on healthy images");
  add_common(tr, common);
  bind["train"].add(tr, "--data", "data.root", "dataset directory");
  bind["train"].add(tr, "--noise", "noise.kind", "gaussian, coarse, simplex, pyramid or synomaly");
  bind["train"].add(tr, "--preset", "noise.preset", "small, moderate, intermediate or large");
  bind["train"].add(tr, "--epochs", "train.epochs", "epochs");
  bind["train"].add(tr, "--seed", "train.seed", "random seed");

  auto *inf = app.add_subcommand("infer", "segment anomalies in test images");
  add_common(inf, common);
  auto &ib = bind["infer"];
  ib.add(inf, "--ckpt", "infer.ckpt", "checkpoint");
  ib.add(inf, "--data", "data.root", "dataset directory");
  ib.add(inf, "--steps", "infer.steps", "noising depth");
  ib.add(inf, "--kernel", "infer.kernel", "residual blur size");
  ib.add(inf, "--th", "infer.th", "residual threshold");
  ib.add(inf, "--max-stages", "infer.max_stages", "stage cap");
  ib.add(inf, "--seed", "infer.seed", "random seed");
  bool multi = false;
  bool single = false;
  bool no_fusion = false;
  auto *m = inf->add_flag("--multi", multi, "multi-stage inference");
  inf->add_flag("--single", single, "single-stage inference")->excludes(m);
  inf->add_flag("--no-masked-fusion", no_fusion, "feed the raw reconstruction to the next stage");

  auto *ev = app.add_subcommand("eval", "score predicted masks");
  add_common(ev, common);
  bind["eval"].add(ev, "--pred", "eval.pred", "inference output directory");
  bind["eval"].add(ev, "--gt", "eval.gt", "dataset or mask directory");
  bind["eval"].add(ev, "--score", "eval.score", "mask_pixels or residual_sum");

  auto *gs = app.add_subcommand("grid-search", "tune steps, kernel and threshold");
  add_common(gs, common);
  std::optional<std::string> grid;
  bind["grid-search"].add(gs, "--ckpt", "infer.ckpt", "checkpoint");
  bind["grid-search"].add(gs, "--data", "data.root", "validation dataset");
  bind["grid-search"].add(gs, "--seed", "infer.seed", "random seed");
  gs->add_option("--grid", grid, "T=..;n=..;Th=..");

  auto *np = app.add_subcommand("noise-preview", "write one Synomaly draw");
  add_common(np, common);
  auto &nb = bind["noise-preview"];
  auto *preset = np->add_option("--preset", nb.flags.emplace_back("noise.preset", std::nullopt).second, "size class");
  auto *sigma = np->add_option("--sigma", nb.flags.emplace_back("noise.sigma", std::nullopt).second, "shape blur");
  np->add_option("--tau", nb.flags.emplace_back("noise.tau", std::nullopt).second, "shape threshold");
  nb.add(np, "--d", "noise.direction", "offset sign");
  nb.add(np, "--i", "noise.intensity", "offset magnitude");
  nb.add(np, "--size", "data.size", "image side");
  nb.add(np, "--seed", "noise.seed", "random seed");
  preset->excludes(sigma);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (CLI::ParseError const &e) {
    return app.exit(e, out, err) == 0 ? ok : bad_config;
  }

  try {
    auto *sub = app.get_subcommands().front();
    std::string const name = sub->get_name();
    Bindings &b = bind[name];
    if (name == "infer") {
      if (single) {
        b.flags.emplace_back("infer.multi", "false");
      } else if (multi) {
        b.flags.emplace_back("infer.multi", "true");
      }
      if (no_fusion) {
        b.flags.emplace_back("infer.masked_fusion", "false");
      }
    }
    if (name == "grid-search" && grid) {
      RunConfig probe;
      apply_grid_flag(probe, *grid);
      for (auto const *key : {"eval.grid_T", "eval.grid_n", "eval.grid_Th"}) {
        b.flags.emplace_back(key, probe.get(key));
      }
    }
    if (name == "gen-phantom") {
      return gen_phantom(common, b, out);
    }
    if (name == "train") {
      return train_cmd(common, b, out);
    }
    if (name == "infer") {
      return infer_cmd(common, b, out);
    }
    if (name == "eval") {
      return eval_cmd(common, b, out);
    }
    if (name == "grid-search") {
      return grid_cmd(common, b, out);
    }
    return noise_preview(common, b, out);
  } catch (UnknownKey const &e) {
    err << "error: " << e.what() << "\n";
    return bad_config;
  } catch (ConfigError const &e) {
    err << "error: " << e.what() << "\n";
    return bad_config;
  } catch (MissingFile const &e) {
    err << "error: " << e.what() << "\n";
    return missing_file;
  } catch (FormatError const &e) {
    err << "error: " << e.what() << "\n";
    return bad_format;
  } catch (std::exception const &e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
}

} // namespace synomaly::cli
