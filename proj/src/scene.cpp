#include "vd/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vd/error.hpp"
#include "vd/rng.hpp"

namespace vd::scene {
namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 axpy(const Vec3& o, double t, const Vec3& d) { return {o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]}; }
Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal{0.0, 0.0, -1.0};
  Vec3 albedo{0.0, 0.0, 0.0};
};

void hit_plane(const Plane& p, const Vec3& o, const Vec3& d, Hit& best) {
  const double denom = dot(p.normal, d);
  if (std::abs(denom) < 1e-12) return;
  const double t = (p.offset - dot(p.normal, o)) / denom;
  if (t > 0.0 && t < best.t) {
    best.t = t;
    best.normal = denom < 0.0 ? p.normal : Vec3{-p.normal[0], -p.normal[1], -p.normal[2]};
    best.albedo = p.albedo;
  }
}

void hit_sphere(const Sphere& s, const Vec3& o, const Vec3& d, Hit& best) {
  const Vec3 oc = sub(o, s.center);
  const double a = dot(d, d), b = dot(oc, d), c = dot(oc, oc) - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / a;
  if (t <= 0.0) t = (-b + sq) / a;
  if (t > 0.0 && t < best.t) {
    best.t = t;
    best.normal = normalized(sub(axpy(o, t, d), s.center));
    best.albedo = s.albedo;
  }
}

void hit_box(const Box& bx, const Vec3& o, const Vec3& d, Hit& best) {
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (o[k] < bx.lo[k] || o[k] > bx.hi[k]) return;
      continue;
    }
    double a = (bx.lo[k] - o[k]) / d[k], b = (bx.hi[k] - o[k]) / d[k];
    double s = -1.0;
    if (a > b) {
      std::swap(a, b);
      s = 1.0;
    }
    if (a > t0) {
      t0 = a;
      axis = k;
      sign = s;
    }
    t1 = std::min(t1, b);
  }
  if (axis < 0 || t0 > t1 || t0 <= 0.0 || t0 >= best.t) return;
  best.t = t0;
  best.normal = {0.0, 0.0, 0.0};
  best.normal[static_cast<std::size_t>(axis)] = sign;
  best.albedo = bx.albedo;
}

Vec3 random_albedo(Rng& rng) { return {rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95)}; }

}  // namespace

Vec3 CameraPose::to_world(const Vec3& v) const {
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const Vec3 p{v[0], cp * v[1] - sp * v[2], sp * v[1] + cp * v[2]};
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  return {cy * p[0] + sy * p[2], p[1], -sy * p[0] + cy * p[2]};
}

void SceneSpec::validate() const {
  if (height < 1 || width < 1) throw ContractError("scene resolution must be positive");
  intrinsics.validate(height, width);
  if (std::abs(dot(background.normal, background.normal) - 1.0) > 1e-9)
    throw ContractError("background normal must be unit length");
  for (const Sphere& s : spheres)
    if (!(s.radius > 0.0)) throw ContractError("sphere radius must be positive");
  for (const Box& b : boxes)
    for (int k = 0; k < 3; ++k)
      if (!(b.lo[static_cast<std::size_t>(k)] < b.hi[static_cast<std::size_t>(k)]))
        throw ContractError("box needs lo < hi on every axis");
  if (!(ambient >= 0.0 && ambient <= 1.0)) throw ContractError("ambient must lie in [0, 1]");
}

SceneSpec random_scene(std::uint64_t seed, int height, int width) {
  Rng rng(derive_seed(seed, 0x5ce7e));
  SceneSpec s;
  s.seed = seed;
  s.height = height;
  s.width = width;
  s.intrinsics = random_intrinsics(derive_seed(seed, 0x1a7), height, width);
  const double eye_height = rng.uniform(1.2, 1.8);
  s.pose.yaw = rng.uniform(-0.3, 0.3);
  s.pose.pitch = rng.uniform(-0.15, 0.15);

  // Wall orthogonal to the optical axis, so every forward ray reaches it.
  const double wall = rng.uniform(4.0, 11.0);
  const Vec3 fwd = s.pose.to_world({0.0, 0.0, 1.0});
  s.background = {fwd, dot(fwd, s.pose.position) + wall, random_albedo(rng)};
  // World y points down like the image rows; the floor sits eye_height below.
  s.planes.push_back({{0.0, 1.0, 0.0}, eye_height, random_albedo(rng)});

  auto in_front = [&](double z_lo, double z_hi, double lateral) {
    const Vec3 c{rng.uniform(-lateral, lateral), rng.uniform(-lateral, lateral), rng.uniform(z_lo, z_hi)};
    const Vec3 w = s.pose.to_world(c);
    return Vec3{s.pose.position[0] + w[0], s.pose.position[1] + w[1], s.pose.position[2] + w[2]};
  };
  const int n_spheres = 1 + static_cast<int>(rng.index(3));
  for (int i = 0; i < n_spheres; ++i) {
    const double r = rng.uniform(0.2, 0.8);
    s.spheres.push_back({in_front(r + 1.0, wall - r, 0.25 * wall), r, random_albedo(rng)});
  }
  const int n_boxes = static_cast<int>(rng.index(3));
  for (int i = 0; i < n_boxes; ++i) {
    const Vec3 c = in_front(1.5, wall - 0.6, 0.25 * wall);
    const Vec3 half{rng.uniform(0.15, 0.6), rng.uniform(0.15, 0.6), rng.uniform(0.15, 0.6)};
    s.boxes.push_back({sub(c, half), {c[0] + half[0], c[1] + half[1], c[2] + half[2]}, random_albedo(rng)});
  }
  s.light = normalized({rng.uniform(-0.6, 0.6), -1.0, rng.uniform(-1.0, -0.2)});
  return s;
}

std::pair<RgbImage, DepthMap> render_scene(const SceneSpec& spec) {
  spec.validate();
  const int h = spec.height, w = spec.width;
  const Intrinsics& k = spec.intrinsics;
  const Vec3 light = normalized(spec.light);
  std::vector<double> depth(static_cast<std::size_t>(h) * w);
  RgbImage rgb(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Camera-frame direction with unit z (same pixel convention as
      // depth_to_points), so the hit parameter is the z-depth.
      const Vec3 dir = spec.pose.to_world({(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0});
      const Vec3& o = spec.pose.position;
      Hit best;
      hit_plane(spec.background, o, dir, best);
      for (const Plane& p : spec.planes) hit_plane(p, o, dir, best);
      for (const Sphere& s : spec.spheres) hit_sphere(s, o, dir, best);
      for (const Box& b : spec.boxes) hit_box(b, o, dir, best);
      if (!std::isfinite(best.t))
        throw DegenerateInputError("camera ray misses the background at pixel (" + std::to_string(y) +
                                   ", " + std::to_string(x) + ")");
      depth[static_cast<std::size_t>(y) * w + x] = best.t;
      const double shade = spec.ambient + (1.0 - spec.ambient) * std::max(0.0, dot(best.normal, light));
      for (int c = 0; c < 3; ++c)
        rgb.set(c, y, x, std::clamp(best.albedo[static_cast<std::size_t>(c)] * shade, 0.0, 1.0));
    }
  return {std::move(rgb), DepthMap(h, w, std::move(depth))};
}

}  // namespace vd::scene
