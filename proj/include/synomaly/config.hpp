#pragma once

#include "inference.hpp"
#include "metrics.hpp"
#include "phantom.hpp"
#include "trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace synomaly {

/// A key outside the registry. what() names the key.
struct UnknownKey : std::invalid_argument
{
  explicit UnknownKey(std::string key)
    : std::invalid_argument("unknown config key: " + key)
    , key(std::move(key))
  {
  }
  std::string key;
};

/// A value that fails to parse or validate, or a required key left unset.
struct ConfigError : std::invalid_argument
{
  using std::invalid_argument::invalid_argument;
};

struct MissingFile : std::runtime_error
{
  explicit MissingFile(std::filesystem::path const &p)
    : std::runtime_error("missing file: " + p.string())
  {
  }
};

void require_exists(std::filesystem::path const &p);

/// Flat key=value run configuration over a fixed key registry
/// (data.*, noise.*, schedule.*, model.*, train.*, infer.*, eval.*).
/// Every key has a default; an empty value means "unset".
class RunConfig
{
public:
  RunConfig();

  static std::vector<std::string> const &keys();
  static bool known(std::string const &key);

  void set(std::string const &key, std::string value);
  std::string const &get(std::string const &key) const;
  bool has(std::string const &key) const { return !get(key).empty(); }

  /// Parses `key = value` lines; blank lines and lines starting with '#' are skipped.
  void merge_text(std::string const &text, std::string const &origin = "config");
  void load(std::filesystem::path const &path);

  std::string to_text() const;
  void save(std::filesystem::path const &path) const;

  std::int64_t get_int(std::string const &key) const;
  std::uint64_t get_seed(std::string const &key) const;
  double get_double(std::string const &key) const;
  bool get_bool(std::string const &key) const;
  std::vector<double> get_doubles(std::string const &key) const;
  std::vector<int> get_ints(std::string const &key) const;

  std::map<std::string, std::string> const &values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

PhantomSpec phantom_spec(RunConfig const &rc);
DatasetCounts dataset_counts(RunConfig const &rc);
/// Training configuration; image size is taken from the data.
TrainConfig train_config(RunConfig const &rc, int width, int height);
SynomalyParams noise_params(RunConfig const &rc);
InferenceParams inference_params(RunConfig const &rc);
GridSpec grid_spec(RunConfig const &rc);

/// "T=100,250;n=7,15;Th=0.2,0.3" into the eval.grid_* keys.
void apply_grid_flag(RunConfig &rc, std::string const &grid);

} // namespace synomaly
