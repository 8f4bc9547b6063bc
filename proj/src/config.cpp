#include "synomaly/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace synomaly {

namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> const &defaults()
{
  static std::map<std::string, std::string> const d = [] {
    auto kv = TrainConfig{}.describe();
    kv.erase("noise.mask_fraction");
    // The image size comes from the data, and seeds must be explicit.
    kv.erase("data.width");
    kv.erase("data.height");
    kv["train.seed"] = "";
    kv.insert({{"data.root", ""},
               {"data.kind", "vessel"},
               {"data.size", "64"},
               {"data.area_fraction", "0.1"},
               {"data.texture", "0.2"},
               {"data.direction", "0"},
               {"data.counts", "2000,200,200"},
               {"data.seed", ""},
               {"noise.preset", ""},
               {"noise.mask_fraction", "0.9"},
               {"noise.seed", ""},
               {"infer.ckpt", ""},
               {"infer.steps", "250"},
               {"infer.kernel", "15"},
               {"infer.th", "0.3"},
               {"infer.max_stages", "5"},
               {"infer.eps", "0.01"},
               {"infer.stride", "10"},
               {"infer.multi", "true"},
               {"infer.masked_fusion", "true"},
               {"infer.seed", ""},
               {"eval.pred", ""},
               {"eval.gt", ""},
               {"eval.score", "mask_pixels"},
               {"eval.grid_T", "100,250,400"},
               {"eval.grid_n", "7,11,15"},
               {"eval.grid_Th", "0.1,0.2,0.3"}});
    return kv;
  }();
  return d;
}

std::string trim(std::string const &s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string const &s, char sep)
{
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto const next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next - pos)));
    if (next == std::string::npos) {
      return out;
    }
    pos = next + 1;
  }
}

template <typename T> T parse_number(std::string const &key, std::string const &text)
{
  T v{};
  auto const *end = text.data() + text.size();
  auto const [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  }
  return v;
}

// Library validation errors become config errors naming the offending namespace.
template <typename Fn> auto checked(char const *what, Fn &&fn)
{
  try {
    return fn();
  } catch (ConfigError const &) {
    throw;
  } catch (std::invalid_argument const &e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

} // namespace

void require_exists(fs::path const &p)
{
  if (!fs::exists(p)) {
    throw MissingFile(p);
  }
}

RunConfig::RunConfig()
  : values_(defaults())
{
}

std::vector<std::string> const &RunConfig::keys()
{
  static std::vector<std::string> const k = [] {
    std::vector<std::string> out;
    for (auto const &[key, value] : defaults()) {
      out.push_back(key);
    }
    return out;
  }();
  return k;
}

bool RunConfig::known(std::string const &key)
{
  return defaults().count(key) > 0;
}

void RunConfig::set(std::string const &key, std::string value)
{
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw UnknownKey(key);
  }
  it->second = std::move(value);
}

std::string const &RunConfig::get(std::string const &key) const
{
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw UnknownKey(key);
  }
  return it->second;
}

void RunConfig::merge_text(std::string const &text, std::string const &origin)
{
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string const t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    auto const eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void RunConfig::load(fs::path const &path)
{
  require_exists(path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

std::string RunConfig::to_text() const
{
  std::string out;
  for (auto const &[key, value] : values_) {
    out += key + "=" + value + "\n";
  }
  return out;
}

void RunConfig::save(fs::path const &path) const
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  os << to_text();
}

std::int64_t RunConfig::get_int(std::string const &key) const
{
  return parse_number<std::int64_t>(key, get(key));
}

std::uint64_t RunConfig::get_seed(std::string const &key) const
{
  if (!has(key)) {
    throw ConfigError("a seed is required: pass --seed or set " + key);
  }
  return parse_number<std::uint64_t>(key, get(key));
}

double RunConfig::get_double(std::string const &key) const
{
  std::string const &v = get(key);
  try {
    std::size_t used = 0;
    double const d = std::stod(v, &used);
    if (used == v.size()) {
      return d;
    }
  } catch (std::exception const &) {
  }
  throw ConfigError("invalid value for " + key + ": '" + v + "'");
}

bool RunConfig::get_bool(std::string const &key) const
{
  std::string const &v = get(key);
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ConfigError("invalid value for " + key + ": '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(std::string const &key) const
{
  std::vector<double> out;
  for (auto const &part : split(get(key), ',')) {
    RunConfig probe;
    probe.values_[key] = part;
    out.push_back(probe.get_double(key));
  }
  return out;
}

std::vector<int> RunConfig::get_ints(std::string const &key) const
{
  std::vector<int> out;
  for (auto const &part : split(get(key), ',')) {
    out.push_back(parse_number<int>(key, part));
  }
  return out;
}

PhantomSpec phantom_spec(RunConfig const &rc)
{
  return checked("data", [&] {
    PhantomSpec s;
    s.kind = parse_phantom_kind(rc.get("data.kind"));
    s.size = static_cast<int>(rc.get_int("data.size"));
    s.direction = static_cast<int>(rc.get_int("data.direction"));
    s.area_fraction = rc.get_double("data.area_fraction");
    s.texture = rc.get_double("data.texture");
    s.validate();
    return s;
  });
}

DatasetCounts dataset_counts(RunConfig const &rc)
{
  auto const c = rc.get_ints("data.counts");
  if (c.size() != 3 || c[0] < 1 || c[1] < 1 || c[2] < 1) {
    throw ConfigError("data.counts must be three positive integers: train_healthy,test_anomalous,test_healthy");
  }
  return {c[0], c[1], c[2]};
}

namespace {

void apply_preset(RunConfig const &rc, double &sigma, double &tau)
{
  if (rc.has("noise.preset")) {
    auto const p = synomaly_preset(parse_size_class(rc.get("noise.preset")));
    sigma = p.sigma;
    tau = p.tau;
  }
}

} // namespace

TrainConfig train_config(RunConfig const &rc, int width, int height)
{
  return checked("train", [&] {
    auto kv = rc.values();
    kv["data.width"] = std::to_string(width);
    kv["data.height"] = std::to_string(height);
    kv["train.seed"] = std::to_string(rc.get_seed("train.seed"));
    TrainConfig c = TrainConfig::parse(kv);
    apply_preset(rc, c.sigma, c.tau);
    c.validate();
    return c;
  });
}

SynomalyParams noise_params(RunConfig const &rc)
{
  return checked("noise", [&] {
    SynomalyParams p;
    p.sigma = rc.get_double("noise.sigma");
    p.tau = rc.get_double("noise.tau");
    p.direction = static_cast<int>(rc.get_int("noise.direction"));
    p.intensity = rc.get_double("noise.intensity");
    apply_preset(rc, p.sigma, p.tau);
    p.validate();
    return p;
  });
}

InferenceParams inference_params(RunConfig const &rc)
{
  InferenceParams p;
  p.steps = static_cast<int>(rc.get_int("infer.steps"));
  p.kernel = static_cast<int>(rc.get_int("infer.kernel"));
  p.threshold = rc.get_double("infer.th");
  p.max_stages = rc.get_bool("infer.multi") ? static_cast<int>(rc.get_int("infer.max_stages")) : 1;
  p.convergence_eps = rc.get_double("infer.eps");
  p.ddim_stride = static_cast<int>(rc.get_int("infer.stride"));
  p.masked_fusion = rc.get_bool("infer.masked_fusion");
  return p;
}

GridSpec grid_spec(RunConfig const &rc)
{
  return checked("eval", [&] {
    GridSpec g{rc.get_ints("eval.grid_T"), rc.get_ints("eval.grid_n"), rc.get_doubles("eval.grid_Th")};
    g.validate();
    return g;
  });
}

void apply_grid_flag(RunConfig &rc, std::string const &grid)
{
  for (auto const &part : split(grid, ';')) {
    auto const eq = part.find('=');
    std::string const axis = eq == std::string::npos ? part : trim(part.substr(0, eq));
    if (eq == std::string::npos || (axis != "T" && axis != "n" && axis != "Th")) {
      throw ConfigError("--grid expects T=..;n=..;Th=.., got '" + part + "'");
    }
    rc.set("eval.grid_" + axis, trim(part.substr(eq + 1)));
  }
}

} // namespace synomaly
