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

#include "gradnav/gsplat.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gradnav/rng.hpp"

namespace gradnav {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("scene: " + msg);
}

// 3x3 row-major helpers.
using Mat3 = std::array<double, 9>;

Mat3 quat_to_rot(const Quat& q_in) {
  double n = std::sqrt(q_in[0] * q_in[0] + q_in[1] * q_in[1] +
                       q_in[2] * q_in[2] + q_in[3] * q_in[3]);
  if (n == 0.0) fail("zero quaternion");
  double w = q_in[0] / n, x = q_in[1] / n, y = q_in[2] / n, z = q_in[3] / n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
}

Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = acc;
    }
  return c;
}

Mat3 transpose3(const Mat3& a) {
  return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

Vec3 matvec3(const Mat3& a, const Vec3& v) {
  return {a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
          a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
          a[6] * v[0] + a[7] * v[1] + a[8] * v[2]};
}

Vec3 sub3(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

Vec3 add3(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

double norm3(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

// World->camera frame for a body pose and mount.
struct CamFrame {
  Mat3 rot;       // world -> camera rotation
  Vec3 origin;    // camera origin in world coordinates
  Vec3 to_cam(const Vec3& world) const {
    return matvec3(rot, sub3(world, origin));
  }
};

void check_pose(const BodyPose& pose) {
  double n = std::sqrt(pose.q[0] * pose.q[0] + pose.q[1] * pose.q[1] +
                       pose.q[2] * pose.q[2] + pose.q[3] * pose.q[3]);
  if (std::abs(n - 1.0) > 1e-6)
    fail("pose quaternion must be normalized (|q| = " + std::to_string(n) + ")");
}

CamFrame cam_frame(const BodyPose& pose, const Camera& cam) {
  Mat3 r_wb = quat_to_rot(pose.q);
  Mat3 mount;
  std::copy(cam.mount_rot.begin(), cam.mount_rot.end(), mount.begin());
  CamFrame f;
  f.rot = matmul3(mount, transpose3(r_wb));
  f.origin = add3(pose.p, matvec3(r_wb, cam.mount_trans));
  return f;
}

}  // namespace

Camera Camera::make_default(int width, int height) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = 0.625 * width;
  cam.fy = 0.625 * width;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  return cam;
}

void Scene::validate() const {
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    for (double s : g.scale)
      if (!(s > 0.0))
        fail("gaussians[" + std::to_string(i) + "]: scales must be positive");
    if (g.alpha < 0.0 || g.alpha > 1.0)
      fail("gaussians[" + std::to_string(i) + "]: alpha must lie in [0,1]");
  }
  for (size_t i = 1; i < waypoints.size(); ++i)
    if (!(waypoints[i][0] > waypoints[i - 1][0]))
      fail("waypoints must be strictly increasing in x (violated at index " +
           std::to_string(i) + ")");
  if (reference_trajectory.size() < 2)
    fail("reference_trajectory needs at least 2 points");
  for (int axis = 0; axis < 3; ++axis)
    if (!(bounds_lo[axis] < bounds_hi[axis])) fail("bounds must satisfy lo < hi");
}

void Scene::default_obstacle_points() {
  if (!obstacle_points.empty()) return;
  for (const Gaussian& g : gaussians)
    if (g.obstacle) obstacle_points.push_back(g.mu);
}

ProjectedGaussian project_gaussian(const Gaussian& g, const BodyPose& pose,
                                   const Camera& cam,
                                   const RenderOptions& options) {
  check_pose(pose);
  CamFrame frame = cam_frame(pose, cam);
  ProjectedGaussian out;
  Vec3 mu_c = frame.to_cam(g.mu);
  out.depth = mu_c[2];
  if (!(mu_c[2] > cam.near)) {
    out.visible = false;
    return out;
  }
  out.visible = true;
  double inv_z = 1.0 / mu_c[2];
  out.mean_px[0] = cam.fx * mu_c[0] * inv_z + cam.cx;
  out.mean_px[1] = cam.fy * mu_c[1] * inv_z + cam.cy;

  // World covariance R diag(s^2) R^T pushed through the camera rotation and
  // the pinhole Jacobian at the mean.
  Mat3 rg = quat_to_rot(g.rot);
  Mat3 s2{};
  s2[0] = g.scale[0] * g.scale[0];
  s2[4] = g.scale[1] * g.scale[1];
  s2[8] = g.scale[2] * g.scale[2];
  Mat3 cov_w = matmul3(matmul3(rg, s2), transpose3(rg));
  Mat3 cov_c = matmul3(matmul3(frame.rot, cov_w), transpose3(frame.rot));

  double jx[3] = {cam.fx * inv_z, 0.0, -cam.fx * mu_c[0] * inv_z * inv_z};
  double jy[3] = {0.0, cam.fy * inv_z, -cam.fy * mu_c[1] * inv_z * inv_z};
  auto quad = [&](const double* a, const double* b) {
    double acc = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc += a[i] * cov_c[i * 3 + j] * b[j];
    return acc;
  };
  out.cov_px[0] = quad(jx, jx) + options.cov_regularization;
  out.cov_px[1] = quad(jx, jy);
  out.cov_px[2] = quad(jy, jy) + options.cov_regularization;
  return out;
}

namespace {

struct Splat {
  double u, v;
  double inv_xx, inv_xy, inv_yy;
  double radius;
  double depth;
  double alpha;
  Vec3 color;
  const Gaussian* src;
};

bool splat_order(const Splat& a, const Splat& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  // Order-invariance for coincident depths: fall back to full parameters.
  const Gaussian &ga = *a.src, &gb = *b.src;
  if (ga.mu != gb.mu) return ga.mu < gb.mu;
  if (ga.scale != gb.scale) return ga.scale < gb.scale;
  if (ga.rot != gb.rot) return ga.rot < gb.rot;
  if (ga.color != gb.color) return ga.color < gb.color;
  return ga.alpha < gb.alpha;
}

}  // namespace

RenderResult render(const Scene& scene, const BodyPose& pose,
                    const Camera& cam, const RenderOptions& options) {
  if (options.differentiable_pose)
    fail("differentiable_pose rendering is not supported");
  check_pose(pose);
  if (cam.width < 1 || cam.height < 1) fail("camera image must be at least 1x1");

  std::vector<Splat> splats;
  splats.reserve(scene.gaussians.size());
  for (const Gaussian& g : scene.gaussians) {
    ProjectedGaussian p = project_gaussian(g, pose, cam, options);
    if (!p.visible) continue;
    double xx = p.cov_px[0], xy = p.cov_px[1], yy = p.cov_px[2];
    double det = xx * yy - xy * xy;
    if (det <= 0.0) continue;  // regularization keeps this from happening
    Splat s;
    s.u = p.mean_px[0];
    s.v = p.mean_px[1];
    s.inv_xx = yy / det;
    s.inv_xy = -xy / det;
    s.inv_yy = xx / det;
    double half_trace = 0.5 * (xx + yy);
    double lambda_max =
        half_trace + std::sqrt(std::max(0.0, half_trace * half_trace - det));
    s.radius = options.cull_sigma * std::sqrt(lambda_max);
    s.depth = p.depth;
    s.alpha = g.alpha;
    s.color = g.color;
    s.src = &g;
    splats.push_back(s);
  }
  std::sort(splats.begin(), splats.end(), splat_order);

  int w = cam.width, h = cam.height;
  RenderResult out;
  out.rgb = Image{w, h, std::vector<double>(w * h * 3, 0.0)};
  out.depth = DepthImage{w, h, std::vector<double>(w * h, 0.0)};
  out.weight_sum.assign(w * h, 0.0);
  out.transmittance.assign(w * h, 1.0);
  std::vector<double> depth_acc(w * h, 0.0);

  double sigma_cut = 0.5 * options.cull_sigma * options.cull_sigma;
  for (const Splat& s : splats) {
    int x0 = std::max(0, (int)std::ceil(s.u - s.radius - 0.5));
    int x1 = std::min(w - 1, (int)std::floor(s.u + s.radius - 0.5));
    int y0 = std::max(0, (int)std::ceil(s.v - s.radius - 0.5));
    int y1 = std::min(h - 1, (int)std::floor(s.v + s.radius - 0.5));
    for (int py = y0; py <= y1; ++py) {
      double dy = py + 0.5 - s.v;
      for (int px = x0; px <= x1; ++px) {
        int idx = py * w + px;
        double t = out.transmittance[idx];
        if (t < 1e-5) continue;
        double dx = px + 0.5 - s.u;
        double e = 0.5 * (s.inv_xx * dx * dx + 2.0 * s.inv_xy * dx * dy +
                          s.inv_yy * dy * dy);
        if (e > sigma_cut) continue;
        double weight = s.alpha * std::exp(-e);
        if (weight < 1e-12) continue;
        double contribution = weight * t;
        out.rgb.rgb[idx * 3 + 0] += contribution * s.color[0];
        out.rgb.rgb[idx * 3 + 1] += contribution * s.color[1];
        out.rgb.rgb[idx * 3 + 2] += contribution * s.color[2];
        out.weight_sum[idx] += contribution;
        depth_acc[idx] += contribution * s.depth;
        out.transmittance[idx] = t * (1.0 - weight);
      }
    }
  }

  for (int idx = 0; idx < w * h; ++idx) {
    double t = out.transmittance[idx];
    out.rgb.rgb[idx * 3 + 0] += t * scene.background[0];
    out.rgb.rgb[idx * 3 + 1] += t * scene.background[1];
    out.rgb.rgb[idx * 3 + 2] += t * scene.background[2];
    double wsum = out.weight_sum[idx];
    out.depth.depth[idx] = wsum < options.min_weight_sum
                               ? options.far_depth
                               : depth_acc[idx] / std::max(wsum, 1e-12);
  }
  return out;
}

Image render_rgb(const Scene& scene, const BodyPose& pose, const Camera& cam,
                 const RenderOptions& options) {
  return render(scene, pose, cam, options).rgb;
}

DepthImage render_depth(const Scene& scene, const BodyPose& pose,
                        const Camera& cam, const RenderOptions& options) {
  return render(scene, pose, cam, options).depth;
}

int64_t nearest_visible_obstacle(const Scene& scene, const BodyPose& pose,
                                 const Camera& cam, double* distance_out) {
  check_pose(pose);
  CamFrame frame = cam_frame(pose, cam);
  double cos_limit = std::cos(cam.fov_half_angle);
  double best = std::numeric_limits<double>::infinity();
  int64_t best_index = -1;
  for (size_t i = 0; i < scene.obstacle_points.size(); ++i) {
    const Vec3& point = scene.obstacle_points[i];
    Vec3 in_cam = frame.to_cam(point);
    if (!(in_cam[2] > 0.0)) continue;
    double range = norm3(in_cam);
    if (range <= 0.0 || in_cam[2] / range < cos_limit) continue;
    double distance = norm3(sub3(point, pose.p));
    if (distance < best) {
      best = distance;
      best_index = static_cast<int64_t>(i);
    }
  }
  if (distance_out) *distance_out = best;
  return best_index;
}

double min_obstacle_distance(const Scene& scene, const BodyPose& pose,
                             const Camera& cam) {
  double distance = std::numeric_limits<double>::infinity();
  nearest_visible_obstacle(scene, pose, cam, &distance);
  return distance;
}

// ---------------------------------------------------------------------------
// Scene file format (JSON, one document)

namespace {

int line_of_byte(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

Vec3 get_vec3(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3)
    fail(context + ": expected an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Quat get_quat(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 4)
    fail(context + ": expected an array of 4 numbers (scalar-first)");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

const json& require(const json& obj, const char* key,
                    const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(context + ": missing field '" + key + "'");
  return *it;
}

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(path + ": parse error at line " +
         std::to_string(line_of_byte(text, e.byte)) + ": " + e.what());
  }

  Scene scene;
  scene.background = get_vec3(require(doc, "background", path), "background");
  const json& bounds = require(doc, "bounds", path);
  scene.bounds_lo = get_vec3(require(bounds, "lo", "bounds"), "bounds.lo");
  scene.bounds_hi = get_vec3(require(bounds, "hi", "bounds"), "bounds.hi");
  for (const json& wp : require(doc, "waypoints", path))
    scene.waypoints.push_back(get_vec3(wp, "waypoints"));
  for (const json& pt : require(doc, "reference_trajectory", path))
    scene.reference_trajectory.push_back(get_vec3(pt, "reference_trajectory"));
  if (doc.contains("gate_x")) scene.gate_x = doc["gate_x"].get<double>();

  const json& gaussians = require(doc, "gaussians", path);
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const json& jg = gaussians[i];
    std::string context = "gaussians[" + std::to_string(i) + "]";
    Gaussian g;
    g.mu = get_vec3(require(jg, "mu", context), context + ".mu");
    g.scale = get_vec3(require(jg, "scale", context), context + ".scale");
    g.rot = get_quat(require(jg, "rot", context), context + ".rot");
    g.color = get_vec3(require(jg, "color", context), context + ".color");
    g.alpha = require(jg, "alpha", context).get<double>();
    g.obstacle = jg.value("obstacle", false);
    scene.gaussians.push_back(g);
  }
  if (doc.contains("obstacle_points"))
    for (const json& pt : doc["obstacle_points"])
      scene.obstacle_points.push_back(get_vec3(pt, "obstacle_points"));

  scene.validate();
  scene.default_obstacle_points();
  return scene;
}

void save_scene(const Scene& scene, const std::string& path) {
  scene.validate();
  json doc;
  doc["background"] = vec3_json(scene.background);
  doc["bounds"] = {{"lo", vec3_json(scene.bounds_lo)},
                   {"hi", vec3_json(scene.bounds_hi)}};
  doc["waypoints"] = json::array();
  for (const Vec3& wp : scene.waypoints) doc["waypoints"].push_back(vec3_json(wp));
  doc["reference_trajectory"] = json::array();
  for (const Vec3& pt : scene.reference_trajectory)
    doc["reference_trajectory"].push_back(vec3_json(pt));
  if (scene.has_gate_x()) doc["gate_x"] = scene.gate_x;
  doc["gaussians"] = json::array();
  for (const Gaussian& g : scene.gaussians) {
    json jg;
    jg["mu"] = vec3_json(g.mu);
    jg["scale"] = vec3_json(g.scale);
    jg["rot"] = json::array({g.rot[0], g.rot[1], g.rot[2], g.rot[3]});
    jg["color"] = vec3_json(g.color);
    jg["alpha"] = g.alpha;
    jg["obstacle"] = g.obstacle;
    doc["gaussians"].push_back(jg);
  }
  if (!scene.obstacle_points.empty()) {
    doc["obstacle_points"] = json::array();
    for (const Vec3& pt : scene.obstacle_points)
      doc["obstacle_points"].push_back(vec3_json(pt));
  }
  std::ofstream out(path);
  if (!out) fail("cannot open " + path + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) fail("short write to " + path);
}

// ---------------------------------------------------------------------------
// Procedural gate scenes

namespace {

double lateral_ramp(double x, double gate_y) {
  double s = std::clamp((x - 1.5) / 2.5, 0.0, 1.0);
  double smooth = s * s * (3.0 - 2.0 * s);
  return gate_y * smooth;
}

Gaussian blob(Vec3 mu, Vec3 scale, Vec3 color, double alpha,
              bool obstacle = false) {
  Gaussian g;
  g.mu = mu;
  g.scale = scale;
  g.color = color;
  g.alpha = alpha;
  g.obstacle = obstacle;
  return g;
}

}  // namespace

Scene make_gate_scene(double gate_y, uint64_t distractor_seed,
                      const GateSceneParams& params) {
  Scene scene;
  scene.background = {0.62, 0.75, 0.88};
  scene.bounds_lo = {-2.0, -3.0, 0.0};
  scene.bounds_hi = {10.0, 3.0, 3.0};
  scene.gate_x = params.gate_x;
  if (gate_y < scene.bounds_lo[1] + 1.0 || gate_y > scene.bounds_hi[1] - 1.0)
    fail("gate_y outside the scene bounds corridor");

  // Floor checkerboard.
  int floor_index = 0;
  for (double x = -1.6; x <= 9.7; x += 0.8) {
    for (double y = -2.8; y <= 2.9; y += 0.8) {
      bool check = (floor_index++ % 2) == 0;
      Vec3 color = check ? Vec3{0.45, 0.40, 0.34} : Vec3{0.56, 0.51, 0.44};
      scene.gaussians.push_back(
          blob({x, y, 0.0}, {0.5, 0.5, 0.06}, color, 0.9));
    }
  }
  // Side walls.
  for (double x = -1.5; x <= 9.6; x += 0.9) {
    for (double z : {0.75, 2.25}) {
      scene.gaussians.push_back(
          blob({x, -3.0, z}, {0.5, 0.08, 0.8}, {0.70, 0.72, 0.75}, 0.9));
      scene.gaussians.push_back(
          blob({x, 3.0, z}, {0.5, 0.08, 0.8}, {0.74, 0.70, 0.68}, 0.9));
    }
  }
  // Back wall.
  for (double y = -2.5; y <= 2.6; y += 1.0) {
    for (double z : {0.75, 2.25}) {
      scene.gaussians.push_back(
          blob({10.0, y, z}, {0.08, 0.55, 0.8}, {0.58, 0.64, 0.70}, 0.9));
    }
  }

  // Gate: two pillars flanking the opening plus a top bar. The pillars are
  // the primary obstacles the policy must keep clear of.
  double half = params.opening_width / 2.0;
  double pillar_y[2] = {gate_y - half - 0.15, gate_y + half + 0.15};
  for (double py : pillar_y) {
    for (double z = 0.15; z <= 2.6; z += 0.35) {
      scene.gaussians.push_back(blob({params.gate_x, py, z},
                                     {0.12, 0.12, 0.20}, {0.95, 0.45, 0.10},
                                     0.95, /*obstacle=*/true));
    }
  }
  double bar_z = params.flight_height + params.opening_height / 2.0 + 0.2;
  for (double y = pillar_y[0]; y <= pillar_y[1] + 1e-9; y += 0.25) {
    scene.gaussians.push_back(blob({params.gate_x, y, bar_z},
                                   {0.12, 0.14, 0.12}, {0.95, 0.45, 0.10},
                                   0.95, /*obstacle=*/true));
  }

  // Seeded distractor clutter kept clear of the flight corridor.
  Rng rng(distractor_seed);
  const Vec3 palette[5] = {{0.85, 0.15, 0.2},
                           {0.2, 0.6, 0.85},
                           {0.25, 0.75, 0.3},
                           {0.9, 0.8, 0.2},
                           {0.65, 0.3, 0.8}};
  for (int i = 0; i < params.distractors; ++i) {
    double x = 0, y = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      x = rng.uniform(0.5, 9.0);
      y = rng.uniform(-2.5, 2.5);
      if (std::abs(y - lateral_ramp(x, gate_y)) > 1.4 &&
          std::abs(x - params.gate_x) > 0.8)
        break;
    }
    double z = rng.uniform(0.3, 2.3);
    double size = rng.uniform(0.18, 0.34);
    Vec3 color = palette[static_cast<size_t>(rng.uniform_int(0, 4))];
    scene.gaussians.push_back(
        blob({x, y, z}, {size, size, size}, color, 0.92, /*obstacle=*/true));
  }

  // Waypoints through the opening and a denser reference polyline.
  for (int k = 0; k <= 6; ++k) {
    double x = 1.0 + k * (7.0 / 6.0);
    scene.waypoints.push_back({x, lateral_ramp(x, gate_y),
                               params.flight_height});
  }
  // The middle waypoint sits exactly at the gate center.
  scene.waypoints[3] = {params.gate_x, gate_y, params.flight_height};
  for (double x = 0.0; x <= 9.01; x += 0.5)
    scene.reference_trajectory.push_back(
        {x, lateral_ramp(x, gate_y), params.flight_height});

  scene.default_obstacle_points();
  scene.validate();
  return scene;
}

}  // namespace gradnav
