#pragma once

// Minimal absolute pose from three bearing/world-point correspondences.
//
// Grunert-style formulation: with camera-frame depths l1, l2, l3 along unit
// bearings b_i, the law of cosines gives
//   li^2 + lj^2 - 2 li lj cos_ij = |Xi - Xj|^2   for each pair.
// Substituting l2 = u l1, l3 = v l1 yields two quadratics in u whose
// resultant is a quartic in v. Each real root is back-substituted, the depths
// are polished with Newton's method on the three distance equations, and the
// pose is recovered by aligning the camera-frame and world triangles.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "meshloc/geom.hpp"

namespace meshloc {

struct BearingPoint {
  Vec3 bearing;  // unit length, camera frame
  Vec3 world;
};

namespace p3p_detail {

// Polynomial coefficients, lowest degree first.
using Poly = std::vector<double>;

inline Poly mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline Poly sub(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] -= b[i];
  return r;
}

inline double eval(const Poly& p, double x) {
  double r = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) r = r * x + p[i];
  return r;
}

// Real roots via companion-matrix eigenvalues. Roots with a small imaginary
// part are kept; callers polish and verify them.
inline std::vector<double> real_roots(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) <= 1e-13 * scale) p.pop_back();
  const int n = static_cast<int>(p.size()) - 1;
  if (n < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) companion(0, i) = -p[n - 1 - i] / p[n];
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < n; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (std::abs(z.imag()) <= 1e-4 * (1.0 + std::abs(z.real()))) {
      // A few Newton steps on the polynomial itself.
      double x = z.real();
      for (int k = 0; k < 3; ++k) {
        double d = 0.0;
        for (std::size_t j = p.size(); j-- > 1;) d = d * x + static_cast<double>(j) * p[j];
        if (d == 0.0) break;
        const double step = eval(p, x) / d;
        if (!std::isfinite(step) || std::abs(step) > 1e-3 * (1.0 + std::abs(x))) break;
        x -= step;
      }
      roots.push_back(x);
    }
  }
  return roots;
}

// Newton's method on the three law-of-cosines equations.
inline bool polish_depths(Eigen::Vector3d& l, const std::array<double, 3>& cosines,
                          const std::array<double, 3>& dist2) {
  static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  auto residual = [&](const Eigen::Vector3d& x) {
    Eigen::Vector3d f;
    for (int k = 0; k < 3; ++k) {
      const int i = kPairs[k][0], j = kPairs[k][1];
      f[k] = x[i] * x[i] + x[j] * x[j] - 2.0 * x[i] * x[j] * cosines[k] - dist2[k];
    }
    return f;
  };
  for (int it = 0; it < 8; ++it) {
    const Eigen::Vector3d f = residual(l);
    Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 3; ++k) {
      const int i = kPairs[k][0], j = kPairs[k][1];
      jac(k, i) = 2.0 * l[i] - 2.0 * l[j] * cosines[k];
      jac(k, j) = 2.0 * l[j] - 2.0 * l[i] * cosines[k];
    }
    const Eigen::Vector3d step = jac.fullPivLu().solve(f);
    if (!step.allFinite()) break;
    const Eigen::Vector3d next = l - step;
    if (residual(next).norm() > f.norm()) break;
    l = next;
    if (step.norm() <= 1e-16 * l.norm()) break;
  }
  return l.allFinite() && (l.array() > 0.0).all();
}

inline Mat3 triangle_frame(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = (b - a).normalized();
  const Vec3 e3 = (b - a).cross(c - a).normalized();
  Mat3 f;
  f.col(0) = e1;
  f.col(1) = e3.cross(e1);
  f.col(2) = e3;
  return f;
}

}  // namespace p3p_detail

// Maximum angle between a returned pose's predicted bearing and the input
// bearing for the solution to be kept.
inline constexpr double kP3PMaxBearingErrorRad = 1e-6;

inline double bearing_error(const Pose& pose, const BearingPoint& c) {
  const Vec3 dir = pose.to_camera(c.world);
  return std::atan2(dir.cross(c.bearing).norm(), dir.dot(c.bearing));
}

// Up to four poses consistent with three bearing/world correspondences. Empty
// for (near-)collinear or coincident world points.
inline std::vector<Pose> p3p(const std::array<BearingPoint, 3>& corr) {
  using namespace p3p_detail;
  const Vec3& x1 = corr[0].world;
  const Vec3& x2 = corr[1].world;
  const Vec3& x3 = corr[2].world;
  const double d12 = (x1 - x2).squaredNorm();
  const double d13 = (x1 - x3).squaredNorm();
  const double d23 = (x2 - x3).squaredNorm();
  const double longest = std::max({d12, d13, d23});
  if (!(longest > 0.0)) return {};
  if ((x2 - x1).cross(x3 - x1).norm() <= 1e-10 * longest) return {};

  const Vec3 b1 = corr[0].bearing.normalized();
  const Vec3 b2 = corr[1].bearing.normalized();
  const Vec3 b3 = corr[2].bearing.normalized();
  const double c12 = b1.dot(b2), c13 = b1.dot(b3), c23 = b2.dot(b3);

  // Quadratics in u with v-polynomial coefficients:
  //   A: d13 u^2 - 2 d13 c12 u + (d13 - d12 (1 - 2 c13 v + v^2)) = 0
  //   B: (d23 - d12) u^2 + (-2 d23 c12 + 2 d12 c23 v) u + (d23 - d12 v^2) = 0
  const Poly qa2{d13}, qa1{-2.0 * d13 * c12}, qa0{d13 - d12, 2.0 * d12 * c13, -d12};
  const Poly qb2{d23 - d12}, qb1{-2.0 * d23 * c12, 2.0 * d12 * c23}, qb0{d23, 0.0, -d12};

  const Poly n = sub(mul(qa2, qb0), mul(qa0, qb2));  // a2 b0 - a0 b2
  const Poly m = sub(mul(qa2, qb1), mul(qa1, qb2));  // a2 b1 - a1 b2
  const Poly k = sub(mul(qa1, qb0), mul(qa0, qb1));  // a1 b0 - a0 b1
  const Poly resultant = sub(mul(n, n), mul(m, k));

  const std::array<double, 3> cosines{c12, c13, c23};
  const std::array<double, 3> dist2{d12, d13, d23};

  std::vector<Pose> solutions;
  auto try_depths = [&](double u, double v) {
    if (!(u > 0.0) || !(v > 0.0)) return;
    const double denom = 1.0 + u * u - 2.0 * u * c12;
    if (!(denom > 0.0)) return;
    const double l1 = std::sqrt(d12 / denom);
    Eigen::Vector3d l(l1, u * l1, v * l1);
    if (!polish_depths(l, cosines, dist2)) return;

    const Vec3 y1 = l[0] * b1, y2 = l[1] * b2, y3 = l[2] * b3;
    const Mat3 r = triangle_frame(y1, y2, y3) * triangle_frame(x1, x2, x3).transpose();
    const Pose pose(r, x1 - r.transpose() * y1);
    for (const BearingPoint& c : corr)
      if (!(bearing_error(pose, c) <= kP3PMaxBearingErrorRad)) return;
    for (const Pose& s : solutions)
      if ((s.center - pose.center).norm() <= 1e-8 && rotation_distance(s.rotation, pose.rotation) <= 1e-8) return;
    solutions.push_back(pose);
  };

  for (const double v : real_roots(resultant)) {
    const double num = eval(n, v);
    const double den = -eval(m, v);  // b2 a1 - a2 b1
    const double scale = std::abs(num) + std::abs(den) * (1.0 + std::abs(v));
    if (std::abs(den) > 1e-10 * scale && scale > 0.0) {
      try_depths(num / den, v);
    } else {
      // Both roots of quadratic A are candidates.
      const double qa = d13, qb = -2.0 * d13 * c12, qc = eval(qa0, v);
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc < 0.0) continue;
      const double s = std::sqrt(disc);
      try_depths((-qb + s) / (2.0 * qa), v);
      try_depths((-qb - s) / (2.0 * qa), v);
    }
  }
  return solutions;
}

}  // namespace meshloc
