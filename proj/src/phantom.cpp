#include "synomaly/phantom.hpp"

#include "synomaly/noise.hpp"
#include "synomaly/parallel.hpp"
#include "synomaly/tensor_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace synomaly {

namespace fs = std::filesystem;

namespace {

using Field = Image<double>;

// Soft inside indicator for a signed distance d (positive inside).
double soft(double d)
{
  return 1.0 / (1.0 + std::exp(-d / 0.6));
}

Field smooth_noise(int size, double sigma, Rng &rng)
{
  Field const raw = gaussian_noise<double>(size, size, rng);
  return standardize(gaussian_blur(raw, sigma_kernel(sigma, size)));
}

struct Blob
{
  double cx, cy;
  double a, b; // semi-axes
  double angle;

  // Signed distance proxy in pixels, positive inside.
  double inside(double x, double y, double scale) const
  {
    double const c = std::cos(angle);
    double const s = std::sin(angle);
    double const u = (x - cx) * c + (y - cy) * s;
    double const v = -(x - cx) * s + (y - cy) * c;
    double const rho = std::hypot(u / (a * scale), v / (b * scale));
    return (1.0 - rho) * std::min(a, b) * scale;
  }
};

struct Geometry
{
  double cx, cy;
  double outer;        // vessel outer radius or organ semi-axis a
  double inner;        // vessel lumen radius or organ semi-axis b
  double angle = 0.0;  // organ rotation
  double gradient = 0.0;
};

Geometry draw_geometry(PhantomSpec const &spec, Rng &rng)
{
  double const s = spec.size;
  Geometry g;
  g.cx = s / 2.0 - 0.5 + rng.uniform(-2.0, 2.0) * s / 64.0;
  g.cy = s / 2.0 - 0.5 + rng.uniform(-2.0, 2.0) * s / 64.0;
  if (spec.kind == PhantomKind::vessel) {
    g.outer = 0.40 * s * rng.uniform(0.93, 1.07);
    g.inner = g.outer * rng.uniform(0.72, 0.80);
  } else {
    g.outer = 0.34 * s * rng.uniform(0.9, 1.1);
    g.inner = 0.27 * s * rng.uniform(0.9, 1.1);
    g.angle = rng.uniform(0.0, std::numbers::pi);
    g.gradient = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return g;
}

// Structure indicator and hard anatomy for the drawn geometry.
double organ_inside(Geometry const &g, double x, double y)
{
  Blob const e{g.cx, g.cy, g.outer, g.inner, g.angle};
  return e.inside(x, y, 1.0);
}

struct Base
{
  Field image;     // before speckle and normalisation
  Field lumen;     // soft lumen indicator (vessel) or organ indicator
  Mask anatomy;
};

Base healthy_base(PhantomSpec const &spec, Geometry const &g, Rng &tex)
{
  int const n = spec.size;
  Base b;
  b.image.resize(n, n);
  b.lumen.resize(n, n);
  b.anatomy.resize(n, n);
  Field const tissue = smooth_noise(n, n / 12.0, tex);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (spec.kind == PhantomKind::vessel) {
        double const r = std::hypot(x - g.cx, y - g.cy);
        double const in_vessel = soft(g.outer - r);
        double const in_lumen = soft(g.inner - r);
        double const bg = 0.35 + 0.06 * tissue(y, x);
        b.image(y, x) = bg * (1.0 - in_vessel) + in_vessel * (0.85 * (1.0 - in_lumen) + 0.08 * in_lumen);
        b.lumen(y, x) = in_lumen;
        b.anatomy(y, x) = r < g.outer ? 1 : 0;
      } else {
        double const d = organ_inside(g, x, y);
        double const in_organ = soft(d);
        double const ramp = ((x - g.cx) * std::cos(g.gradient) + (y - g.cy) * std::sin(g.gradient)) / n;
        double const organ = 0.7 + 0.2 * ramp + 0.03 * tissue(y, x);
        double const bg = 0.12 + 0.03 * tissue(y, x);
        b.image(y, x) = bg * (1.0 - in_organ) + organ * in_organ;
        b.lumen(y, x) = in_organ;
        b.anatomy(y, x) = d > 0.0 ? 1 : 0;
      }
    }
  }
  return b;
}

Image2D finish(PhantomSpec const &spec, Field img, Rng &tex)
{
  int const n = spec.size;
  if (spec.kind == PhantomKind::vessel) {
    Field const speckle = smooth_noise(n, 0.8, tex);
    img = (img * (1.0 + spec.texture * speckle)).max(0.0);
  } else {
    Field const grain = smooth_noise(n, 1.5, tex);
    img += spec.texture * 0.15 * grain;
  }
  Image2D const f = img.cast<float>();
  return normalize_unit(percentile_clip(f, 99.0));
}

struct Planted
{
  Field weight; // soft blob indicator
  Mask gt;
};

Planted plant(PhantomSpec const &spec, Geometry const &g, Base const &base, Rng &rng)
{
  int const n = spec.size;
  int const k = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<Blob> blobs;
  double const start = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < k; ++i) {
    double const aspect = rng.uniform(1.0, 1.6);
    if (spec.kind == PhantomKind::vessel) {
      // Plaques sit on the inner wall, elongated along it.
      double const phi = start + 2.0 * std::numbers::pi * i / k + rng.uniform(-0.4, 0.4);
      blobs.push_back({g.cx + g.inner * std::cos(phi), g.cy + g.inner * std::sin(phi), 1.0, aspect, phi});
    } else {
      double const phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double const rho = std::sqrt(rng.uniform(0.0, 1.0)) * 0.55;
      double const c = std::cos(g.angle);
      double const s = std::sin(g.angle);
      double const u = rho * g.outer * std::cos(phi);
      double const v = rho * g.inner * std::sin(phi);
      blobs.push_back({g.cx + u * c - v * s, g.cy + u * s + v * c, aspect, 1.0, rng.uniform(0.0, std::numbers::pi)});
    }
  }
  double const target = spec.area_fraction * static_cast<double>(count(base.anatomy));

  auto evaluate = [&](double scale) {
    Planted p;
    p.weight.resize(n, n);
    p.gt.resize(n, n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        double d = -1e9;
        for (auto const &b : blobs) {
          d = std::max(d, b.inside(x, y, scale));
        }
        // Only the part that lands in the lumen or organ is visible.
        double const w = soft(d) * base.lumen(y, x);
        p.weight(y, x) = w;
        p.gt(y, x) = d > 0.0 && base.lumen(y, x) > 0.5 && base.anatomy(y, x) ? 1 : 0;
      }
    }
    return p;
  };
  double lo = 0.0;
  double hi = n;
  for (int it = 0; it < 40; ++it) {
    double const mid = 0.5 * (lo + hi);
    (static_cast<double>(count(evaluate(mid).gt)) < target ? lo : hi) = mid;
  }
  return evaluate(hi);
}

} // namespace

PhantomKind parse_phantom_kind(std::string_view name)
{
  if (name == "vessel") {
    return PhantomKind::vessel;
  }
  if (name == "organ") {
    return PhantomKind::organ;
  }
  throw std::invalid_argument("unknown phantom kind: " + std::string(name));
}

std::string_view to_string(PhantomKind k)
{
  return k == PhantomKind::vessel ? "vessel" : "organ";
}

void PhantomSpec::validate() const
{
  if (size < 16) {
    throw std::invalid_argument("phantom: size must be >= 16");
  }
  if (!(area_fraction > 0.0 && area_fraction <= 0.3)) {
    throw std::invalid_argument("phantom: anomaly_area_fraction must lie in (0, 0.3]");
  }
  if (direction < -1 || direction > 1) {
    throw std::invalid_argument("phantom: direction must be -1, 0 or +1");
  }
  if (!(texture >= 0.0)) {
    throw std::invalid_argument("phantom: texture must be non-negative");
  }
}

double PhantomSpec::nominal_area() const
{
  double const s = size;
  return kind == PhantomKind::vessel ? std::numbers::pi * 0.16 * s * s : std::numbers::pi * 0.34 * 0.27 * s * s;
}

PhantomSample gen_healthy(PhantomSpec const &spec, Rng const &rng)
{
  spec.validate();
  Rng geo = rng.substream(1);
  Rng tex = rng.substream(2);
  Geometry const g = draw_geometry(spec, geo);
  Base const base = healthy_base(spec, g, tex);
  PhantomSample s;
  s.image = finish(spec, base.image, tex);
  s.anatomy_mask = base.anatomy;
  s.gt_anomaly = Mask::Zero(spec.size, spec.size);
  return s;
}

PhantomSample gen_anomalous(PhantomSpec const &spec, Rng const &rng)
{
  spec.validate();
  Rng geo = rng.substream(1);
  Rng tex = rng.substream(2);
  Rng anom = rng.substream(3);
  Geometry const g = draw_geometry(spec, geo);
  Base const base = healthy_base(spec, g, tex);
  Planted const p = plant(spec, g, base, anom);

  Field img = base.image;
  if (spec.kind == PhantomKind::vessel) {
    double const level = spec.polarity() > 0 ? 0.7 * anom.uniform(0.9, 1.1) : 0.0;
    img += p.weight * (level - img);
  } else {
    double const delta = spec.polarity() * 0.3 * anom.uniform(0.9, 1.1);
    img += p.weight * delta;
  }
  PhantomSample s;
  s.image = finish(spec, img, tex);
  s.anatomy_mask = base.anatomy;
  s.gt_anomaly = p.gt;
  return s;
}

Mask circular_mask(int w, int h, double fraction)
{
  Mask m(h, w);
  double const r = 0.5 * fraction * std::min(w, h);
  double const cx = (w - 1) / 2.0;
  double const cy = (h - 1) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m(y, x) = std::hypot(x - cx, y - cy) <= r ? 1 : 0;
    }
  }
  return m;
}

void gen_dataset(fs::path const &out, DatasetCounts const &counts, PhantomSpec const &spec, std::uint64_t seed,
                 unsigned workers)
{
  if (counts.train_healthy < 1 || counts.test_anomalous < 1 || counts.test_healthy < 1) {
    throw std::invalid_argument("gen_dataset: counts must be positive");
  }
  spec.validate();
  for (auto const *dir : {"train/healthy", "test/anomalous", "test/healthy"}) {
    fs::create_directories(out / dir);
  }
  Rng const root(seed);
  auto name = [](char const *prefix, int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05d", prefix, k);
    return std::string(buf);
  };

  parallel_for(static_cast<std::size_t>(counts.train_healthy), workers, [&](std::size_t k) {
    auto const s = gen_healthy(spec, root.substream(0).substream(k));
    save_image(out / "train/healthy" / (name("h", static_cast<int>(k)) + ".stnsr"), s.image);
  });
  parallel_for(static_cast<std::size_t>(counts.test_anomalous), workers, [&](std::size_t k) {
    auto const s = gen_anomalous(spec, root.substream(1).substream(k));
    auto const base = out / "test/anomalous" / name("a", static_cast<int>(k));
    save_image(base.string() + ".stnsr", s.image);
    save_mask(base.string() + "_gt.stnsr", s.gt_anomaly);
    save_mask(base.string() + "_anat.stnsr", s.anatomy_mask);
  });
  parallel_for(static_cast<std::size_t>(counts.test_healthy), workers, [&](std::size_t k) {
    auto const s = gen_healthy(spec, root.substream(2).substream(k));
    save_image(out / "test/healthy" / (name("h", static_cast<int>(k)) + ".stnsr"), s.image);
  });

  std::ofstream manifest(out / "manifest.csv", std::ios::binary);
  if (!manifest) {
    throw std::runtime_error("cannot write manifest under " + out.string());
  }
  manifest << "path,split,label\n";
  for (int k = 0; k < counts.train_healthy; ++k) {
    manifest << "train/healthy/" << name("h", k) << ".stnsr,train,healthy\n";
  }
  for (int k = 0; k < counts.test_anomalous; ++k) {
    manifest << "test/anomalous/" << name("a", k) << ".stnsr,test,anomalous\n";
  }
  for (int k = 0; k < counts.test_healthy; ++k) {
    manifest << "test/healthy/" << name("h", k) << ".stnsr,test,healthy\n";
  }
  if (!manifest) {
    throw std::runtime_error("manifest write failed under " + out.string());
  }
}

std::vector<ManifestEntry> read_manifest(fs::path const &root)
{
  std::ifstream in(root / "manifest.csv");
  if (!in) {
    throw std::runtime_error("cannot open manifest: " + (root / "manifest.csv").string());
  }
  std::string line;
  std::getline(in, line);
  if (line != "path,split,label") {
    throw FormatError("manifest: unexpected header in " + (root / "manifest.csv").string());
  }
  std::vector<ManifestEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    ManifestEntry e;
    if (!std::getline(ss, e.path, ',') || !std::getline(ss, e.split, ',') || !std::getline(ss, e.label)) {
      throw FormatError("manifest: malformed row: " + line);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Image2D> load_train_images(fs::path const &root)
{
  std::vector<Image2D> out;
  for (auto const &e : read_manifest(root)) {
    if (e.split == "train") {
      out.push_back(load_image(root / e.path));
    }
  }
  return out;
}

std::vector<LabeledImage> load_test_images(fs::path const &root)
{
  std::vector<LabeledImage> out;
  for (auto const &e : read_manifest(root)) {
    if (e.split != "test") {
      continue;
    }
    LabeledImage li;
    fs::path const p = root / e.path;
    li.id = p.stem().string();
    li.image = load_image(p);
    li.anomalous = e.label == "anomalous";
    fs::path const gt = p.parent_path() / (li.id + "_gt.stnsr");
    li.gt = fs::exists(gt) ? load_mask(gt) : Mask::Zero(li.image.rows(), li.image.cols());
    out.push_back(std::move(li));
  }
  return out;
}

} // namespace synomaly
