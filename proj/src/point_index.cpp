#include "mrsg/point_index.hpp"

#include <algorithm>
#include <cmath>

namespace mrsg {

std::size_t PointIndex::KeyHash::operator()(const Key& k) const {
  return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
}

PointIndex::PointIndex(const std::vector<Vec3>& points, double cell) : points_(points), cell_(cell) {
  for (std::size_t i = 0; i < points_.size(); ++i) grid_[key(points_[i])].push_back(i);
}

PointIndex::Key PointIndex::key(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

template <typename F>
void PointIndex::visit(const Vec3& q, double radius, F&& f) const {
  const int reach = static_cast<int>(std::ceil(radius / cell_));
  const Key c = key(q);
  for (int dx = -reach; dx <= reach; ++dx) {
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dz = -reach; dz <= reach; ++dz) {
        const auto it = grid_.find({c[0] + dx, c[1] + dy, c[2] + dz});
        if (it == grid_.end()) continue;
        for (std::size_t i : it->second) f(i);
      }
    }
  }
}

std::optional<PointIndex::Hit> PointIndex::nearest(const Vec3& q, double radius) const {
  std::optional<Hit> best;
  double best_sq = radius * radius;
  visit(q, radius, [&](std::size_t i) {
    const double d = (points_[i] - q).squaredNorm();
    if (d <= best_sq && (!best || d < best_sq || i < best->index)) {
      best_sq = d;
      best = Hit{i, 0.0};
    }
  });
  if (best) best->distance = std::sqrt(best_sq);
  return best;
}

std::vector<PointIndex::Hit> PointIndex::knn(const Vec3& q, std::size_t k, double radius) const {
  std::vector<Hit> hits;
  const double r2 = radius * radius;
  visit(q, radius, [&](std::size_t i) {
    const double d = (points_[i] - q).squaredNorm();
    if (d <= r2) hits.push_back({i, d});
  });
  const auto cmp = [](const Hit& a, const Hit& b) { return a.distance < b.distance || (a.distance == b.distance && a.index < b.index); };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), cmp);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), cmp);
  }
  for (auto& h : hits) h.distance = std::sqrt(h.distance);
  return hits;
}

}  // namespace mrsg
