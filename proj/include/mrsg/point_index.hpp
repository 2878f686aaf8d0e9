#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mrsg/geometry.hpp"

namespace mrsg {

/// Uniform hash grid over a fixed point set for radius-bounded queries.
class PointIndex {
 public:
  PointIndex(const std::vector<Vec3>& points, double cell);

  struct Hit {
    std::size_t index;
    double distance;
  };

  /// Closest point within `radius` (radius <= cell keeps the search to the
  /// 27 surrounding cells).
  std::optional<Hit> nearest(const Vec3& q, double radius) const;
  /// Up to k closest points within `radius`, ascending by distance.
  std::vector<Hit> knn(const Vec3& q, std::size_t k, double radius) const;

  const std::vector<Vec3>& points() const { return points_; }

 private:
  using Key = std::array<std::int64_t, 3>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  Key key(const Vec3& p) const;
  template <typename F>
  void visit(const Vec3& q, double radius, F&& f) const;

  std::vector<Vec3> points_;
  double cell_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> grid_;
};

}  // namespace mrsg
