#pragma once

#include "image.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace synomaly {

struct FormatError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

// STNSR1 tensor: magic, u32 rank, rank u32 dims, row-major little-endian f32.
struct Tensor
{
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline constexpr char tensor_magic[] = "STNSR1";

void write_tensor(std::ostream &os, Tensor const &t);
Tensor read_tensor(std::istream &is);

void save_tensor(std::filesystem::path const &path, Tensor const &t);
Tensor load_tensor(std::filesystem::path const &path);

Tensor to_tensor(Image2D const &img);
Image2D to_image(Tensor const &t);

void save_image(std::filesystem::path const &path, Image2D const &img);
Image2D load_image(std::filesystem::path const &path);
void save_mask(std::filesystem::path const &path, Mask const &m);
Mask load_mask(std::filesystem::path const &path);

/// 8-bit binary PGM, value = round(clamp(v,0,1) * 255).
void save_pgm(std::filesystem::path const &path, Image2D const &img);

} // namespace synomaly
