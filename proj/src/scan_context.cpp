#include "mrsg/scan_context.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrsg/errors.hpp"

namespace mrsg {

Eigen::MatrixXf scan_context(const PointCloud& cloud, const ScanContextConfig& config) {
  if (config.sectors < 1 || config.rings < 1 || !(config.max_radius > 0.0)) {
    throw ConfigError("scan context needs sectors, rings >= 1 and max_radius > 0");
  }
  Eigen::MatrixXf m = Eigen::MatrixXf::Zero(config.rings, config.sectors);
  for (const Vec3& p : cloud.points) {
    const double rho = std::hypot(p.x(), p.y());
    if (rho >= config.max_radius || p.z() < config.min_height) continue;
    const int ring = std::min(config.rings - 1, static_cast<int>(std::floor(rho / config.max_radius * config.rings)));
    const double frac = (std::atan2(p.y(), p.x()) + M_PI) / (2.0 * M_PI);
    const int sector = std::clamp(static_cast<int>(std::floor(frac * config.sectors)), 0, config.sectors - 1);
    m(ring, sector) = std::max(m(ring, sector), static_cast<float>(p.z()));
  }
  return m;
}

Eigen::MatrixXf shift_columns(const Eigen::MatrixXf& m, int k) {
  const int n = static_cast<int>(m.cols());
  Eigen::MatrixXf out(m.rows(), m.cols());
  for (int j = 0; j < n; ++j) out.col(j) = m.col(((j + k) % n + n) % n);
  return out;
}

ScMatch sc_distance(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigMismatch("scan context dimensions differ");
  }
  const int n = static_cast<int>(a.cols());
  Eigen::VectorXd norm_a(n), norm_b(n);
  for (int j = 0; j < n; ++j) {
    norm_a(j) = a.col(j).cast<double>().norm();
    norm_b(j) = b.col(j).cast<double>().norm();
  }
  ScMatch best{std::numeric_limits<double>::infinity(), 0};
  for (int s = 0; s < n; ++s) {
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < n; ++j) {
      const int k = (j + s) % n;
      const bool za = norm_a(j) == 0.0, zb = norm_b(k) == 0.0;
      if (za && zb) continue;
      ++used;
      if (za || zb) {
        sum += 1.0;
        continue;
      }
      if (a.col(j) == b.col(k)) continue;  // exact match, avoids rounding in c
      const double c = a.col(j).cast<double>().dot(b.col(k).cast<double>()) / (norm_a(j) * norm_b(k));
      sum += std::max(0.0, 1.0 - c);
    }
    const double d = used == 0 ? 1.0 : std::clamp(sum / used, 0.0, 1.0);
    if (d < best.distance) {
      best.distance = d;
      best.shift = s;
    }
  }
  return best;
}

}  // namespace mrsg
