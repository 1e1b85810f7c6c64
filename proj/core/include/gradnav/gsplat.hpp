// Copyright 2026 The GRaD-Nav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRADNAV_GSPLAT_HPP_
#define GRADNAV_GSPLAT_HPP_

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gradnav/image.hpp"

namespace gradnav {

using Vec3 = std::array<double, 3>;
using Quat = std::array<double, 4>;  // scalar-first

// Anisotropic 3-D Gaussian primitive. Covariance is R diag(scale^2) R^T.
struct Gaussian {
  Vec3 mu{0, 0, 0};        // world mean, m
  Vec3 scale{0.1, 0.1, 0.1};  // per-axis standard deviations, m (> 0)
  Quat rot{1, 0, 0, 0};    // principal-axis orientation
  Vec3 color{1, 1, 1};     // RGB in [0,1]
  double alpha = 1.0;      // opacity in [0,1]
  bool obstacle = false;   // participates in distance queries
};

struct Scene {
  std::vector<Gaussian> gaussians;
  Vec3 background{0, 0, 0};
  Vec3 bounds_lo{-2, -3, 0};
  Vec3 bounds_hi{10, 3, 3};
  std::vector<Vec3> waypoints;              // strictly increasing in x
  std::vector<Vec3> reference_trajectory;   // >= 2 points
  std::vector<Vec3> obstacle_points;        // defaults to obstacle-tagged means
  double gate_x = std::nan("");             // optional stage-labeling metadata

  bool has_gate_x() const { return !std::isnan(gate_x); }
  void validate() const;
  // Populates obstacle_points from obstacle-tagged gaussians when empty.
  void default_obstacle_points();
};

struct BodyPose {
  Vec3 p{0, 0, 0};
  Quat q{1, 0, 0, 0};
};

// Pinhole camera rigidly mounted on the drone body. The default mount looks
// along body +x, level with the body frame.
struct Camera {
  double fx = 40.0, fy = 40.0;
  double cx = 32.0, cy = 32.0;
  int width = 64, height = 64;
  double near = 0.05;                  // m
  double fov_half_angle = 0.9;         // rad, obstacle visibility cone
  std::array<double, 9> mount_rot{0, -1, 0, 0, 0, -1, 1, 0, 0};  // body->cam
  Vec3 mount_trans{0, 0, 0};           // camera origin in body frame

  static Camera make_default(int width = 64, int height = 64);
};

struct RenderOptions {
  double far_depth = 10.0;       // m reported where weight mass is absent
  double min_weight_sum = 1e-3;  // below this a pixel reports far_depth
  double cov_regularization = 0.3;  // px^2 added to the projected covariance
  double cull_sigma = 3.0;       // bounding-rectangle radius in sigmas
  // Reserved: gradients through the camera pose are not supported; rendering
  // is detached from the dynamics graph.
  bool differentiable_pose = false;
};

struct RenderResult {
  Image rgb;
  DepthImage depth;
  std::vector<double> weight_sum;      // per pixel, sum of w_i
  std::vector<double> transmittance;   // per pixel, T after the last splat
};

struct ProjectedGaussian {
  double mean_px[2];   // pixel coordinates of the projected mean
  double cov_px[3];    // 2x2 symmetric covariance: xx, xy, yy (px^2)
  double depth = 0.0;  // camera-space z, m
  bool visible = false;  // false signals a near-plane cull
};

// Depth-sorted front-to-back alpha compositing of peak-normalized projected
// Gaussians; each pixel color is a convex combination of splat colors and
// the background.
RenderResult render(const Scene& scene, const BodyPose& pose,
                    const Camera& cam, const RenderOptions& options = {});
Image render_rgb(const Scene& scene, const BodyPose& pose, const Camera& cam,
                 const RenderOptions& options = {});
DepthImage render_depth(const Scene& scene, const BodyPose& pose,
                        const Camera& cam, const RenderOptions& options = {});

ProjectedGaussian project_gaussian(const Gaussian& g, const BodyPose& pose,
                                   const Camera& cam,
                                   const RenderOptions& options = {});

// Minimum Euclidean distance from the body position to obstacle points that
// lie inside the camera cone (+infinity when none does).
double min_obstacle_distance(const Scene& scene, const BodyPose& pose,
                             const Camera& cam);

// Index of the FOV-visible obstacle point closest to the body position, or
// -1 when none is visible; distance_out, when given, receives the distance.
int64_t nearest_visible_obstacle(const Scene& scene, const BodyPose& pose,
                                 const Camera& cam,
                                 double* distance_out = nullptr);

Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);

struct GateSceneParams {
  double gate_x = 4.5;
  double opening_width = 1.4;
  double opening_height = 1.2;
  double flight_height = 1.3;
  int distractors = 6;
};

// Procedural corridor with a gate at the requested lateral offset, seeded
// distractor clutter, waypoints through the opening, and a piecewise-linear
// reference trajectory.
Scene make_gate_scene(double gate_y, uint64_t distractor_seed,
                      const GateSceneParams& params = {});

}  // namespace gradnav

#endif  // GRADNAV_GSPLAT_HPP_
