#include "deforma/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deforma {

namespace {

inline bool better(double d2, std::size_t idx, const NearestHit& best) {
  return d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index);
}

}  // namespace

PointIndex::PointIndex(std::span<const Vec3> points, std::size_t grid_threshold)
    : points_(points.begin(), points.end()) {
  if (points_.empty()) throw InvalidArgument("nearest-neighbour index needs at least one point");
  for (const Vec3& p : points_) {
    if (!is_finite(p)) throw InvalidArgument("nearest-neighbour index got a non-finite point");
  }
  if (points_.size() <= grid_threshold) return;

  Vec3 lo = points_.front();
  Vec3 hi = points_.front();
  for (const Vec3& p : points_) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, 1e-9});
  // About two points per occupied cell for surface-like data.
  const double target_cells = static_cast<double>(points_.size()) / 2.0;
  cell_ = extent / std::max(1.0, std::cbrt(target_cells));
  origin_ = lo;
  std::size_t total = 1;
  for (int k = 0; k < 3; ++k) {
    dims_[k] = std::max(1, static_cast<int>(std::floor((hi[k] - lo[k]) / cell_)) + 1);
    total *= static_cast<std::size_t>(dims_[k]);
  }

  std::vector<std::size_t> cell_of(points_.size());
  std::vector<std::size_t> counts(total + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Vec3& p = points_[i];
    const std::size_t c = (static_cast<std::size_t>(cell_coord(p.z, 2)) * static_cast<std::size_t>(dims_[1]) +
                           static_cast<std::size_t>(cell_coord(p.y, 1))) *
                              static_cast<std::size_t>(dims_[0]) +
                          static_cast<std::size_t>(cell_coord(p.x, 0));
    cell_of[i] = c;
    ++counts[c + 1];
  }
  for (std::size_t c = 0; c < total; ++c) counts[c + 1] += counts[c];
  cell_start_ = counts;
  cell_items_.resize(points_.size());
  std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) cell_items_[fill[cell_of[i]]++] = i;
}

int PointIndex::cell_coord(double v, int axis) const {
  const int c = static_cast<int>(std::floor((v - origin_[axis]) / cell_));
  return std::clamp(c, 0, dims_[axis] - 1);
}

NearestHit PointIndex::nearest(const Vec3& query) const {
  if (!is_finite(query)) throw InvalidArgument("nearest-neighbour query is not finite");
  return uses_grid() ? grid_search(query) : scan(query);
}

NearestHit PointIndex::scan(const Vec3& query) const {
  NearestHit best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double d2 = squared_distance(query, points_[i]);
    if (better(d2, i, best)) best = {i, d2};
  }
  return best;
}

NearestHit PointIndex::grid_search(const Vec3& query) const {
  const int qc[3] = {cell_coord(query.x, 0), cell_coord(query.y, 1), cell_coord(query.z, 2)};
  NearestHit best{0, std::numeric_limits<double>::infinity()};
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  for (int r = 0; r <= max_ring; ++r) {
    int lo[3];
    int hi[3];
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::max(0, qc[k] - r);
      hi[k] = std::min(dims_[k] - 1, qc[k] + r);
    }
    for (int z = lo[2]; z <= hi[2]; ++z) {
      for (int y = lo[1]; y <= hi[1]; ++y) {
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const bool on_ring = std::abs(x - qc[0]) == r || std::abs(y - qc[1]) == r || std::abs(z - qc[2]) == r;
          if (!on_ring) continue;
          const std::size_t c =
              (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_[1]) + static_cast<std::size_t>(y)) *
                  static_cast<std::size_t>(dims_[0]) +
              static_cast<std::size_t>(x);
          for (std::size_t j = cell_start_[c]; j < cell_start_[c + 1]; ++j) {
            const std::size_t i = cell_items_[j];
            const double d2 = squared_distance(query, points_[i]);
            if (better(d2, i, best)) best = {i, d2};
          }
        }
      }
    }
    // Distance from the query to the nearest face of the visited block that
    // still has unvisited cells beyond it.
    double bound = std::numeric_limits<double>::infinity();
    bool exhausted = true;
    for (int k = 0; k < 3; ++k) {
      if (lo[k] > 0) {
        exhausted = false;
        bound = std::min(bound, query[k] - (origin_[k] + lo[k] * cell_));
      }
      if (hi[k] < dims_[k] - 1) {
        exhausted = false;
        bound = std::min(bound, origin_[k] + (hi[k] + 1) * cell_ - query[k]);
      }
    }
    if (exhausted) break;
    bound = std::max(0.0, bound) * (1.0 - 1e-9);
    if (bound * bound > best.squared_distance) break;
  }
  return best;
}

}  // namespace deforma
