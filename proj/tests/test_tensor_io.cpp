#include "synomaly/noise.hpp"
#include "synomaly/tensor_io.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace synomaly;

namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const &name)
{
  auto const dir = fs::temp_directory_path() / "synomaly_test_tensor_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(fs::path const &p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("tensor header layout")
{
  Tensor t{{2, 3}, {1, 2, 3, 4, 5, 6}};
  std::ostringstream os;
  write_tensor(os, t);
  std::string const bytes = os.str();
  REQUIRE(bytes.size() == 6 + 4 + 8 + 24);
  CHECK(bytes.substr(0, 6) == "STNSR1");
  CHECK(static_cast<unsigned char>(bytes[6]) == 2);
  CHECK(static_cast<unsigned char>(bytes[10]) == 2);
  CHECK(static_cast<unsigned char>(bytes[14]) == 3);
  float first = 0.f;
  std::memcpy(&first, bytes.data() + 18, 4);
  CHECK(first == 1.f);
}

TEST_CASE("image round trip is bit exact")
{
  Rng rng(3);
  Image2D const img = gaussian_noise(13, 7, rng);
  auto const path = scratch("img.stnsr");
  save_image(path, img);
  Image2D const back = load_image(path);
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 13);
  CHECK(std::memcmp(back.data(), img.data(), sizeof(float) * img.size()) == 0);
  save_image(scratch("img2.stnsr"), back);
  CHECK(slurp(path) == slurp(scratch("img2.stnsr")));
}

TEST_CASE("mask round trip and validation")
{
  Mask m = Mask::Zero(4, 5);
  m(1, 2) = 1;
  m(3, 4) = 1;
  save_mask(scratch("m.stnsr"), m);
  CHECK((load_mask(scratch("m.stnsr")) == m).all());
  Image2D bad = Image2D::Zero(2, 2);
  bad(0, 0) = 0.5f;
  save_image(scratch("bad.stnsr"), bad);
  CHECK_THROWS_AS(load_mask(scratch("bad.stnsr")), FormatError);
}

TEST_CASE("corrupt tensors raise format errors")
{
  std::istringstream foreign(std::string("NOTATENSOR0000000000"));
  try {
    read_tensor(foreign);
    FAIL("expected a format error");
  } catch (FormatError const &e) {
    CHECK(std::string(e.what()).find("STNSR1") != std::string::npos);
  }

  Tensor t{{4, 4}, std::vector<float>(16, 1.f)};
  std::ostringstream os;
  write_tensor(os, t);
  std::string const full = os.str();
  for (std::size_t cut : {std::size_t{3}, std::size_t{8}, std::size_t{14}, full.size() - 1}) {
    std::istringstream truncated(full.substr(0, cut));
    CHECK_THROWS_AS(read_tensor(truncated), FormatError);
  }
  CHECK_THROWS(load_image(scratch("does_not_exist.stnsr")));
}

TEST_CASE("pgm export quantises to eight bits")
{
  Image2D img(1, 4);
  img << -0.5f, 0.f, 0.5f, 2.f;
  save_pgm(scratch("x.pgm"), img);
  std::string const bytes = slurp(scratch("x.pgm"));
  std::string const header = "P5\n4 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 4);
  CHECK(bytes.substr(0, header.size()) == header);
  auto px = [&](int i) { return static_cast<unsigned char>(bytes[header.size() + i]); };
  CHECK(px(0) == 0);
  CHECK(px(1) == 0);
  CHECK(px(2) == 128);
  CHECK(px(3) == 255);
}
