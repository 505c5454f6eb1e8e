#include "labtwin/tour_path.hpp"

#include "labtwin/error.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace labtwin {

namespace {

constexpr int kTableSamples = 65;
// Absolute arc-length tolerance per adaptive integration, meters.
constexpr double kArcTolerance = 1e-6;

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 8> kGlNodes = {-0.9602898564975363, -0.7966664774136267,
                                            -0.5255324099163290, -0.1834346424956498,
                                            0.1834346424956498,  0.5255324099163290,
                                            0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlWeights = {0.1012285362903763, 0.2223810344533745,
                                              0.3137066458778873, 0.3626837833783620,
                                              0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};

template <typename F> double gauss_legendre(const F &f, double a, double b) {
  const double half = (b - a) / 2;
  const double mid = (a + b) / 2;
  double sum = 0;
  for (std::size_t i = 0; i < kGlNodes.size(); ++i)
    sum += kGlWeights[i] * f(mid + half * kGlNodes[i]);
  return sum * half;
}

// Adaptive subdivision: split until the two-halves estimate agrees with the
// whole-interval estimate to within tol.
template <typename F>
double adaptive_arc(const F &f, double a, double b, double whole, double tol, int depth) {
  const double m = (a + b) / 2;
  const double left = gauss_legendre(f, a, m);
  const double right = gauss_legendre(f, m, b);
  if (depth <= 0 || std::abs(left + right - whole) <= tol)
    return left + right;
  return adaptive_arc(f, a, m, left, tol / 2, depth - 1) +
         adaptive_arc(f, m, b, right, tol / 2, depth - 1);
}

} // namespace

TourPath TourPath::from_scene(const SceneDefinition &scene) {
  std::vector<Waypoint> controls;
  for (const auto &id : scene.tour.waypoint_ids) {
    const Waypoint *w = scene.find_waypoint(id);
    if (!w)
      throw ValidationError(fmt::format("tour references unknown waypoint '{}'", id));
    controls.push_back(*w);
  }
  return TourPath(std::move(controls));
}

TourPath::TourPath(std::vector<Waypoint> controls) : controls_(std::move(controls)) {
  const std::size_t n = controls_.size();
  if (n < 2)
    throw ValidationError(fmt::format("tour needs at least 2 waypoints, got {}", n));
  std::vector<Vec3> p;
  p.reserve(n + 2);
  p.push_back(2 * controls_[0].position - controls_[1].position);
  for (const auto &c : controls_)
    p.push_back(c.position);
  p.push_back(2 * controls_[n - 1].position - controls_[n - 2].position);

  arc_.assign(1, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec3 &p0 = p[i];
    const Vec3 &p1 = p[i + 1];
    const Vec3 &p2 = p[i + 2];
    const Vec3 &p3 = p[i + 3];
    const double t01 = std::sqrt((p1 - p0).norm());
    const double t12 = std::sqrt((p2 - p1).norm());
    const double t23 = std::sqrt((p3 - p2).norm());
    if (t12 == 0)
      throw ValidationError(fmt::format("tour waypoints '{}' and '{}' coincide",
                                        controls_[i].id, controls_[i + 1].id));
    Segment seg;
    seg.p1 = p1;
    seg.p2 = p2;
    seg.m1 = (p2 - p1) + t12 * ((p1 - p0) / t01 - (p2 - p0) / (t01 + t12));
    seg.m2 = (p2 - p1) + t12 * ((p3 - p2) / t23 - (p3 - p1) / (t12 + t23));
    segments_.push_back(std::move(seg));

    const std::size_t si = segments_.size() - 1;
    auto &table = segments_.back().table_s;
    table.resize(kTableSamples);
    table[0] = 0;
    for (int k = 1; k < kTableSamples; ++k) {
      const double u0 = double(k - 1) / (kTableSamples - 1);
      const double u1 = double(k) / (kTableSamples - 1);
      table[static_cast<std::size_t>(k)] = table[static_cast<std::size_t>(k - 1)] + segment_arc(si, u0, u1);
    }
    arc_.push_back(arc_.back() + table.back());
  }
}

Vec3 TourPath::evaluate(std::size_t i, double u) const {
  const Segment &s = segments_[i];
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * s.p1 + (u3 - 2 * u2 + u) * s.m1 + (-2 * u3 + 3 * u2) * s.p2 +
         (u3 - u2) * s.m2;
}

Vec3 TourPath::derivative(std::size_t i, double u) const {
  const Segment &s = segments_[i];
  const double u2 = u * u;
  return (6 * u2 - 6 * u) * s.p1 + (3 * u2 - 4 * u + 1) * s.m1 + (-6 * u2 + 6 * u) * s.p2 +
         (3 * u2 - 2 * u) * s.m2;
}

double TourPath::segment_arc(std::size_t i, double u0, double u1) const {
  const auto speed = [&](double u) { return derivative(i, u).norm(); };
  return adaptive_arc(speed, u0, u1, gauss_legendre(speed, u0, u1), kArcTolerance, 12);
}

double TourPath::invert(std::size_t i, double local_s) const {
  const auto &table = segments_[i].table_s;
  const auto it = std::upper_bound(table.begin(), table.end(), local_s);
  const auto k = static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(it - table.begin() - 1, 0, kTableSamples - 2));
  double lo = double(k) / (kTableSamples - 1);
  double hi = double(k + 1) / (kTableSamples - 1);
  const double base_u = lo;
  const double base_s = table[k];
  const double span = table[k + 1] - table[k];
  double u = span > 0 ? lo + (hi - lo) * (local_s - base_s) / span : lo;
  // Safeguarded Newton on arc(base_u, u) = local_s - base_s.
  const auto speed = [&](double x) { return derivative(i, x).norm(); };
  for (int iter = 0; iter < 20; ++iter) {
    const double f = base_s + gauss_legendre(speed, base_u, u) - local_s;
    if (std::abs(f) < 1e-10)
      break;
    if (f > 0)
      hi = u;
    else
      lo = u;
    const double d = speed(u);
    double next = d > 0 ? u - f / d : (lo + hi) / 2;
    if (!(next > lo && next < hi))
      next = (lo + hi) / 2;
    u = next;
  }
  return u;
}

TourSample TourPath::at(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
  std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - arc_.begin() - 1, 0));
  i = std::min(i, segments_.size() - 1);
  const double seg_len = arc_[i + 1] - arc_[i];
  const double local = s - arc_[i];

  TourSample out;
  if (local <= 0)
    out.position = segments_[i].p1;
  else if (local >= seg_len)
    out.position = segments_[i].p2;
  else
    out.position = evaluate(i, invert(i, local));

  const double f = seg_len > 0 ? std::clamp(local / seg_len, 0.0, 1.0) : 0.0;
  const Waypoint &a = controls_[i];
  const Waypoint &b = controls_[i + 1];
  out.yaw_deg = wrap_degrees_360(a.yaw_deg + f * wrap_degrees_180(b.yaw_deg - a.yaw_deg));
  out.pitch_deg = a.pitch_deg + f * (b.pitch_deg - a.pitch_deg);
  return out;
}

} // namespace labtwin
