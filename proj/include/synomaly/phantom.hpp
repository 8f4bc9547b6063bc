#pragma once

#include "image.hpp"
#include "rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace synomaly {

enum class PhantomKind
{
  vessel, // dark lumen inside a bright speckled wall, bright plaques
  organ   // smooth bright blob on a dark background, dark lesions
};

PhantomKind parse_phantom_kind(std::string_view name);
std::string_view to_string(PhantomKind k);

struct PhantomSpec
{
  PhantomKind kind = PhantomKind::vessel;
  int size = 64;
  // +1 brighter, -1 darker; 0 picks the kind's natural polarity.
  int direction = 0;
  double area_fraction = 0.10;
  double texture = 0.2;

  int polarity() const { return direction != 0 ? direction : (kind == PhantomKind::vessel ? 1 : -1); }
  void validate() const;
  /// Expected anatomy area for the kind before geometric jitter.
  double nominal_area() const;
};

struct PhantomSample
{
  Image2D image;
  Mask anatomy_mask;
  Mask gt_anomaly;
};

PhantomSample gen_healthy(PhantomSpec const &spec, Rng const &rng);

/// The healthy sample drawn from the same `rng`, plus planted anomalies.
PhantomSample gen_anomalous(PhantomSpec const &spec, Rng const &rng);

/// Centred disk whose diameter is `fraction` of the shorter side.
Mask circular_mask(int w, int h, double fraction);

struct DatasetCounts
{
  int train_healthy = 2000;
  int test_anomalous = 200;
  int test_healthy = 200;
};

/// Writes train/healthy, test/anomalous (+ _gt, _anat), test/healthy and
/// manifest.csv under `out`. Sample k of each split uses its own substream.
void gen_dataset(std::filesystem::path const &out, DatasetCounts const &counts, PhantomSpec const &spec,
                 std::uint64_t seed, unsigned workers = 1);

struct ManifestEntry
{
  std::string path; // relative to the dataset root
  std::string split;
  std::string label;
};

std::vector<ManifestEntry> read_manifest(std::filesystem::path const &root);

/// A test image with its ground truth; healthy images get an empty mask.
struct LabeledImage
{
  std::string id;
  Image2D image;
  Mask gt;
  bool anomalous = false;
};

std::vector<Image2D> load_train_images(std::filesystem::path const &root);
std::vector<LabeledImage> load_test_images(std::filesystem::path const &root);

} // namespace synomaly
