#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deforma/common.hpp"

namespace deforma {

struct NearestHit {
  std::size_t index = 0;
  double squared_distance = 0.0;
};

/// Nearest-neighbour queries over a fixed point set.
///
/// Small sets are scanned exhaustively. Above `grid_threshold` points a
/// uniform grid is searched ring by ring; the result is identical to the
/// exhaustive scan, including lowest-index tie breaking, because both
/// compute the same squared distance expression and the grid only stops
/// once no unvisited cell can hold an equal or closer point.
class PointIndex {
 public:
  static constexpr std::size_t kDefaultGridThreshold = 4096;

  explicit PointIndex(std::span<const Vec3> points, std::size_t grid_threshold = kDefaultGridThreshold);

  NearestHit nearest(const Vec3& query) const;
  bool uses_grid() const { return !cell_start_.empty(); }
  std::size_t size() const { return points_.size(); }

 private:
  NearestHit scan(const Vec3& query) const;
  NearestHit grid_search(const Vec3& query) const;
  int cell_coord(double v, int axis) const;

  std::vector<Vec3> points_;
  Vec3 origin_;
  double cell_ = 1.0;
  int dims_[3] = {1, 1, 1};
  std::vector<std::size_t> cell_start_;  // prefix offsets into cell_items_
  std::vector<std::size_t> cell_items_;  // point indices, ascending within a cell
};

}  // namespace deforma
