#pragma once

// Ray-cast synthetic RGBD scenes: planes, spheres and axis-aligned boxes
// in front of a background wall that every camera ray hits.

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "vd/depth.hpp"

namespace vd::scene {

using Vec3 = std::array<double, 3>;

struct Plane {
  Vec3 normal;   // unit
  double offset;  // points p with normal·p = offset
  Vec3 albedo;
};

struct Sphere {
  Vec3 center;
  double radius;
  Vec3 albedo;
};

struct Box {
  Vec3 lo, hi;
  Vec3 albedo;
};

// Camera looks along +z with y pointing down the image; rotation is yaw
// about world y, then pitch about the camera x axis.
struct CameraPose {
  Vec3 position{0.0, 0.0, 0.0};
  double yaw = 0.0;
  double pitch = 0.0;

  // World direction for a camera-frame vector.
  Vec3 to_world(const Vec3& v) const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  Intrinsics intrinsics{64.0, 64.0, 32.0, 32.0};
  CameraPose pose;
  Plane background;  // must face the camera across the whole frustum
  std::vector<Plane> planes;
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;
  Vec3 light{0.3, -0.8, -0.5};  // direction towards the light, world frame
  double ambient = 0.25;

  void validate() const;
};

inline constexpr double kMinDepth = 0.3;
inline constexpr double kMaxDepth = 12.0;

// Procedural scene: back wall, floor, 1-3 spheres and 0-2 boxes.
SceneSpec random_scene(std::uint64_t seed, int height, int width);

// Dense z-depth (meters along the optical axis) and Lambertian RGB.
std::pair<RgbImage, DepthMap> render_scene(const SceneSpec& spec);

}  // namespace vd::scene
