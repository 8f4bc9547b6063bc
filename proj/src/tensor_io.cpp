#include "synomaly/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace synomaly {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian");

namespace {

void put_u32(std::ostream &os, std::uint32_t v)
{
  os.write(reinterpret_cast<char const *>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream &is)
{
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char *>(&v), sizeof v)) {
    throw FormatError("tensor: truncated header");
  }
  return v;
}

} // namespace

void write_tensor(std::ostream &os, Tensor const &t)
{
  std::size_t n = 1;
  for (auto d : t.dims) {
    n *= d;
  }
  if (n != t.data.size()) {
    throw std::invalid_argument("write_tensor: dims do not match data length");
  }
  os.write(tensor_magic, 6);
  put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) {
    put_u32(os, d);
  }
  os.write(reinterpret_cast<char const *>(t.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

Tensor read_tensor(std::istream &is)
{
  char magic[6] = {};
  if (!is.read(magic, 6) || std::memcmp(magic, tensor_magic, 6) != 0) {
    throw FormatError("tensor: bad magic, expected \"STNSR1\"");
  }
  Tensor t;
  auto const rank = get_u32(is);
  if (rank > 8) {
    throw FormatError("tensor: implausible rank " + std::to_string(rank));
  }
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims.push_back(get_u32(is));
    n *= t.dims.back();
  }
  if (n > (std::size_t{1} << 31)) {
    throw FormatError("tensor: implausible element count");
  }
  t.data.resize(n);
  if (!is.read(reinterpret_cast<char *>(t.data.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
    throw FormatError("tensor: truncated payload");
  }
  return t;
}

void save_tensor(std::filesystem::path const &path, Tensor const &t)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  write_tensor(os, t);
  if (!os) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

Tensor load_tensor(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open for reading: " + path.string());
  }
  return read_tensor(is);
}

Tensor to_tensor(Image2D const &img)
{
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(img.rows()), static_cast<std::uint32_t>(img.cols())};
  t.data.assign(img.data(), img.data() + img.size());
  return t;
}

Image2D to_image(Tensor const &t)
{
  if (t.dims.size() != 2) {
    throw FormatError("tensor: expected a rank-2 image");
  }
  Image2D img(t.dims[0], t.dims[1]);
  std::copy(t.data.begin(), t.data.end(), img.data());
  return img;
}

void save_image(std::filesystem::path const &path, Image2D const &img)
{
  save_tensor(path, to_tensor(img));
}

Image2D load_image(std::filesystem::path const &path)
{
  return to_image(load_tensor(path));
}

void save_mask(std::filesystem::path const &path, Mask const &m)
{
  save_image(path, m.cast<float>());
}

Mask load_mask(std::filesystem::path const &path)
{
  Image2D const img = load_image(path);
  if (((img != 0.0f) && (img != 1.0f)).any()) {
    throw FormatError("mask tensor holds values other than 0 and 1: " + path.string());
  }
  return img.cast<std::uint8_t>();
}

void save_pgm(std::filesystem::path const &path, Image2D const &img)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  os << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.size()));
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    float const v = std::clamp(img.data()[i], 0.0f, 1.0f);
    bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace synomaly
