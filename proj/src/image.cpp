#include "synomaly/image.hpp"

#include <map>

namespace synomaly {

namespace {

struct DisjointSet
{
  std::vector<Eigen::Index> parent;

  explicit DisjointSet(Eigen::Index n)
    : parent(static_cast<std::size_t>(n))
  {
    std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  }

  Eigen::Index find(Eigen::Index i)
  {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }

  void unite(Eigen::Index a, Eigen::Index b)
  {
    a = find(a);
    b = find(b);
    if (a != b) {
      // Smaller index becomes the root so labels are canonical.
      if (b < a) {
        std::swap(a, b);
      }
      parent[b] = a;
    }
  }
};

} // namespace

std::vector<std::vector<Eigen::Index>> connected_components(Mask const &mask)
{
  Eigen::Index const h = mask.rows();
  Eigen::Index const w = mask.cols();
  DisjointSet sets(h * w);

  // Raster scan: link each foreground pixel to its already-visited neighbours.
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!mask(y, x)) {
        continue;
      }
      Eigen::Index const i = y * w + x;
      if (x > 0 && mask(y, x - 1)) {
        sets.unite(i, i - 1);
      }
      if (y > 0) {
        for (Eigen::Index dx = -1; dx <= 1; ++dx) {
          Eigen::Index const nx = x + dx;
          if (nx >= 0 && nx < w && mask(y - 1, nx)) {
            sets.unite(i, (y - 1) * w + nx);
          }
        }
      }
    }
  }

  std::map<Eigen::Index, std::size_t> slot;
  std::vector<std::vector<Eigen::Index>> out;
  for (Eigen::Index i = 0; i < h * w; ++i) {
    if (!mask(i / w, i % w)) {
      continue;
    }
    auto const root = sets.find(i);
    auto [it, fresh] = slot.try_emplace(root, out.size());
    if (fresh) {
      out.emplace_back();
    }
    out[it->second].push_back(i);
  }
  return out;
}

} // namespace synomaly
