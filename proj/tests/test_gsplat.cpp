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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "gradnav/gsplat.hpp"
#include "gradnav/image.hpp"
#include "gradnav/rng.hpp"

using namespace gradnav;

namespace {

// Odd-sized camera whose optical axis hits the center pixel's sample point.
Camera centered_camera() {
  Camera cam = Camera::make_default(33, 33);
  return cam;
}

Gaussian axis_gaussian(double distance, Vec3 color, double alpha) {
  Gaussian g;
  g.mu = {distance, 0.0, 0.0};  // straight ahead of an identity body pose
  g.scale = {0.2, 0.2, 0.2};
  g.color = color;
  g.alpha = alpha;
  return g;
}

Scene minimal_scene() {
  Scene scene;
  scene.reference_trajectory = {{0, 0, 1.3}, {1, 0, 1.3}};
  return scene;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("empty scene renders pure background") {
  Scene scene = minimal_scene();
  scene.background = {0.25, 0.5, 0.75};
  Camera cam = centered_camera();
  Image img = render_rgb(scene, BodyPose{}, cam);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(img.at(y, x, c) == scene.background[c]);
}

TEST_CASE("opaque on-axis gaussian owns the center pixel exactly") {
  Scene scene = minimal_scene();
  scene.background = {0, 0, 0};
  scene.gaussians.push_back(axis_gaussian(2.0, {0.8, 0.3, 0.1}, 1.0));
  Camera cam = centered_camera();
  Image img = render_rgb(scene, BodyPose{}, cam);
  CHECK(img.at(16, 16, 0) == 0.8);
  CHECK(img.at(16, 16, 1) == 0.3);
  CHECK(img.at(16, 16, 2) == 0.1);
}

TEST_CASE("two coaxial half-opaque gaussians composite to 0.5 / 0.25") {
  Scene scene = minimal_scene();
  scene.background = {0, 0, 1.0};
  scene.gaussians.push_back(axis_gaussian(2.0, {1, 0, 0}, 0.5));
  scene.gaussians.push_back(axis_gaussian(3.0, {0, 1, 0}, 0.5));
  Camera cam = centered_camera();
  RenderResult result = render(scene, BodyPose{}, cam);
  int center = 16 * cam.width + 16;
  CHECK(result.weight_sum[center] == 0.75);
  CHECK(result.transmittance[center] == 0.25);
  CHECK(result.rgb.rgb[center * 3 + 0] == 0.5);
  CHECK(result.rgb.rgb[center * 3 + 1] == 0.25);
  CHECK(result.rgb.rgb[center * 3 + 2] == 0.25);
  // Alpha-weighted mean depth of the same case.
  double expected = (0.5 * 2.0 + 0.25 * 3.0) / 0.75;
  CHECK(result.depth.depth[center] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("depth image reports plain distance and far value") {
  Scene scene = minimal_scene();
  scene.gaussians.push_back(axis_gaussian(2.0, {1, 1, 1}, 1.0));
  Camera cam = centered_camera();
  RenderOptions options;
  options.far_depth = 10.0;
  DepthImage depth = render_depth(scene, BodyPose{}, cam, options);
  CHECK(depth.at(16, 16) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(depth.at(0, 0) == 10.0);  // corner far from the splat

  DepthImage empty = render_depth(minimal_scene(), BodyPose{}, cam, options);
  for (double d : empty.depth) CHECK(d == 10.0);
}

TEST_CASE("projection matches the closed-form pinhole Jacobian") {
  Camera cam = centered_camera();
  RenderOptions options;
  Gaussian g = axis_gaussian(4.0, {1, 1, 1}, 1.0);
  g.scale = {0.3, 0.3, 0.3};
  ProjectedGaussian p = project_gaussian(g, BodyPose{}, cam, options);
  REQUIRE(p.visible);
  double expected = cam.fx * 0.3 / 4.0;
  expected *= expected;
  CHECK(p.cov_px[0] - options.cov_regularization ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK(p.cov_px[2] - options.cov_regularization ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK(p.cov_px[1] == doctest::Approx(0.0).epsilon(1e-12));

  SUBCASE("doubling depth halves the projected standard deviation") {
    Gaussian far_g = g;
    far_g.mu = {8.0, 0.0, 0.0};
    ProjectedGaussian pf = project_gaussian(far_g, BodyPose{}, cam, options);
    double sigma_near = std::sqrt(p.cov_px[0] - options.cov_regularization);
    double sigma_far = std::sqrt(pf.cov_px[0] - options.cov_regularization);
    CHECK(sigma_far == doctest::Approx(sigma_near / 2.0).epsilon(1e-9));
  }

  SUBCASE("rotating an isotropic gaussian leaves its projection unchanged") {
    Gaussian rotated = g;
    double s = std::sqrt(0.5);
    rotated.rot = {s, 0.3, 0.5, std::sqrt(1 - 0.5 - 0.09 - 0.25)};
    ProjectedGaussian pr = project_gaussian(rotated, BodyPose{}, cam, options);
    for (int i = 0; i < 3; ++i)
      CHECK(pr.cov_px[i] == doctest::Approx(p.cov_px[i]).epsilon(1e-9));
  }

  SUBCASE("behind the near plane signals a cull") {
    Gaussian behind = g;
    behind.mu = {-1.0, 0.0, 0.0};
    CHECK_FALSE(project_gaussian(behind, BodyPose{}, cam, options).visible);
  }
}

TEST_CASE("minimum obstacle distance respects the field of view") {
  Scene scene = minimal_scene();
  Camera cam = centered_camera();
  SUBCASE("single obstacle one meter ahead") {
    scene.obstacle_points = {{1.0, 0.0, 0.0}};
    CHECK(min_obstacle_distance(scene, BodyPose{}, cam) == 1.0);
  }
  SUBCASE("obstacle directly behind is invisible") {
    scene.obstacle_points = {{-1.0, 0.0, 0.0}};
    CHECK(std::isinf(min_obstacle_distance(scene, BodyPose{}, cam)));
  }
  SUBCASE("closest of two visible obstacles wins") {
    scene.obstacle_points = {{0.9, 0.0, 0.0}, {0.4, 0.0, 0.0}};
    CHECK(min_obstacle_distance(scene, BodyPose{}, cam) == 0.4);
  }
  SUBCASE("no obstacle points means infinite clearance") {
    CHECK(std::isinf(min_obstacle_distance(scene, BodyPose{}, cam)));
  }
}

TEST_CASE("compositing is a convex combination per pixel") {
  Rng rng(2024);
  Camera cam = Camera::make_default(24, 18);
  for (int trial = 0; trial < 50; ++trial) {
    Scene scene = minimal_scene();
    int count = static_cast<int>(rng.uniform_int(1, 24));
    for (int i = 0; i < count; ++i) {
      Gaussian g;
      g.mu = {rng.uniform(0.5, 6.0), rng.uniform(-2, 2), rng.uniform(-2, 2)};
      double s = rng.uniform(0.05, 0.7);
      g.scale = {s, rng.uniform(0.05, 0.7), rng.uniform(0.05, 0.7)};
      double n = 0;
      for (auto& v : g.rot) {
        v = rng.normal();
        n += v * v;
      }
      for (auto& v : g.rot) v /= std::sqrt(n);
      g.color = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
      g.alpha = rng.uniform(0, 1);
      scene.gaussians.push_back(g);
    }
    RenderResult result = render(scene, BodyPose{}, cam);
    for (size_t i = 0; i < result.weight_sum.size(); ++i) {
      CHECK(result.weight_sum[i] >= 0.0);
      CHECK(result.weight_sum[i] <= 1.0 + 1e-12);
      CHECK(std::abs(result.weight_sum[i] + result.transmittance[i] - 1.0) <
            1e-9);
    }
  }
}

TEST_CASE("rendering is invariant to gaussian input order") {
  Rng rng(7);
  Scene scene = minimal_scene();
  for (int i = 0; i < 12; ++i) {
    Gaussian g;
    g.mu = {rng.uniform(1.0, 5.0), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    g.scale = {0.2, 0.25, 0.3};
    g.color = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    g.alpha = rng.uniform(0.2, 0.9);
    scene.gaussians.push_back(g);
  }
  Camera cam = Camera::make_default(32, 32);
  Image a = render_rgb(scene, BodyPose{}, cam);
  Scene shuffled = scene;
  std::reverse(shuffled.gaussians.begin(), shuffled.gaussians.end());
  Image b = render_rgb(shuffled, BodyPose{}, cam);
  REQUIRE(a.rgb.size() == b.rgb.size());
  for (size_t i = 0; i < a.rgb.size(); ++i) CHECK(a.rgb[i] == b.rgb[i]);

  // Same pose twice is bit-identical.
  Image c = render_rgb(scene, BodyPose{}, cam);
  for (size_t i = 0; i < a.rgb.size(); ++i) CHECK(a.rgb[i] == c.rgb[i]);
}

TEST_CASE("transmittance never increases along the splat order") {
  Scene scene = minimal_scene();
  for (double d : {1.5, 2.0, 2.5, 3.0})
    scene.gaussians.push_back(axis_gaussian(d, {1, 1, 1}, 0.4));
  Camera cam = centered_camera();
  RenderResult result = render(scene, BodyPose{}, cam);
  for (double t : result.transmittance) {
    CHECK(t <= 1.0);
    CHECK(t >= 0.0);
  }
}

TEST_CASE("scene files round-trip exactly") {
  Scene scene = make_gate_scene(0.5, 42);
  auto path = temp_file("gradnav_scene_roundtrip.json");
  save_scene(scene, path.string());
  Scene loaded = load_scene(path.string());
  REQUIRE(loaded.gaussians.size() == scene.gaussians.size());
  for (size_t i = 0; i < scene.gaussians.size(); ++i) {
    CHECK(loaded.gaussians[i].mu == scene.gaussians[i].mu);
    CHECK(loaded.gaussians[i].scale == scene.gaussians[i].scale);
    CHECK(loaded.gaussians[i].rot == scene.gaussians[i].rot);
    CHECK(loaded.gaussians[i].color == scene.gaussians[i].color);
    CHECK(loaded.gaussians[i].alpha == scene.gaussians[i].alpha);
    CHECK(loaded.gaussians[i].obstacle == scene.gaussians[i].obstacle);
  }
  CHECK(loaded.waypoints == scene.waypoints);
  CHECK(loaded.reference_trajectory == scene.reference_trajectory);
  CHECK(loaded.obstacle_points == scene.obstacle_points);
  CHECK(loaded.background == scene.background);
  CHECK(loaded.gate_x == scene.gate_x);
  std::filesystem::remove(path);
}

TEST_CASE("scene loader reports precise diagnostics") {
  SUBCASE("missing alpha names the gaussian index") {
    auto path = temp_file("gradnav_scene_noalpha.json");
    std::ofstream out(path);
    out << R"({"background":[0,0,0],
               "bounds":{"lo":[-1,-1,0],"hi":[1,1,3]},
               "waypoints":[],
               "reference_trajectory":[[0,0,1],[1,0,1]],
               "gaussians":[
                 {"mu":[0,0,0],"scale":[1,1,1],"rot":[1,0,0,0],"color":[1,1,1],"alpha":0.5},
                 {"mu":[0,0,0],"scale":[1,1,1],"rot":[1,0,0,0],"color":[1,1,1]}
               ]})";
    out.close();
    bool named = false;
    try {
      load_scene(path.string());
    } catch (const std::runtime_error& e) {
      std::string msg = e.what();
      named = msg.find("gaussians[1]") != std::string::npos &&
              msg.find("alpha") != std::string::npos;
    }
    CHECK(named);
    std::filesystem::remove(path);
  }
  SUBCASE("unsorted waypoints are rejected") {
    Scene scene = minimal_scene();
    scene.waypoints = {{2, 0, 1}, {1, 0, 1}};
    auto path = temp_file("gradnav_scene_unsorted.json");
    CHECK_THROWS_AS(save_scene(scene, path.string()), std::runtime_error);
  }
  SUBCASE("malformed json reports a line number") {
    auto path = temp_file("gradnav_scene_malformed.json");
    std::ofstream out(path);
    out << "{\n  \"background\": [0,0,0,\n";
    out.close();
    bool has_line = false;
    try {
      load_scene(path.string());
    } catch (const std::runtime_error& e) {
      has_line = std::string(e.what()).find("line") != std::string::npos;
    }
    CHECK(has_line);
    std::filesystem::remove(path);
  }
}

TEST_CASE("gate scenes support the curriculum") {
  Scene middle = make_gate_scene(0.0, 7);
  CHECK(middle.gaussians.size() >= 200);
  bool has_gate_waypoint = false;
  for (const Vec3& wp : middle.waypoints)
    if (wp[0] == 4.5 && wp[1] == 0.0 && wp[2] == 1.3) has_gate_waypoint = true;
  CHECK(has_gate_waypoint);
  for (size_t i = 1; i < middle.waypoints.size(); ++i)
    CHECK(middle.waypoints[i][0] > middle.waypoints[i - 1][0]);

  SUBCASE("same seed reproduces the scene") {
    Scene again = make_gate_scene(0.0, 7);
    REQUIRE(again.gaussians.size() == middle.gaussians.size());
    for (size_t i = 0; i < middle.gaussians.size(); ++i)
      CHECK(again.gaussians[i].mu == middle.gaussians[i].mu);
  }

  SUBCASE("curriculum triple has non-overlapping openings") {
    Scene left = make_gate_scene(-1.5, 7);
    Scene right = make_gate_scene(1.5, 7);
    GateSceneParams params;
    double half = params.opening_width / 2.0;
    CHECK(-1.5 + half < 0.0 - half);
    CHECK(0.0 + half < 1.5 - half);
    CHECK(left.gate_x == right.gate_x);
    // The gate waypoint follows the lateral offset.
    CHECK(left.waypoints[3][1] == -1.5);
    CHECK(right.waypoints[3][1] == 1.5);
  }
}

TEST_CASE("ppm and pfm files round-trip") {
  Rng rng(3);
  Image img{5, 4, std::vector<double>(5 * 4 * 3)};
  for (auto& v : img.rgb) v = rng.uniform(0, 1);
  auto ppm_path = temp_file("gradnav_test.ppm");
  write_ppm(img, ppm_path.string());
  Image back = read_ppm(ppm_path.string());
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 4);
  for (size_t i = 0; i < img.rgb.size(); ++i)
    CHECK(std::abs(back.rgb[i] - img.rgb[i]) <= 0.5 / 255.0 + 1e-12);

  DepthImage depth{5, 4, std::vector<double>(20)};
  for (auto& v : depth.depth) v = rng.uniform(0.1, 9.0);
  auto pfm_path = temp_file("gradnav_test.pfm");
  write_pfm(depth, pfm_path.string());
  DepthImage dback = read_pfm(pfm_path.string());
  REQUIRE(dback.width == 5);
  for (size_t i = 0; i < depth.depth.size(); ++i)
    CHECK(dback.depth[i] ==
          doctest::Approx(depth.depth[i]).epsilon(1e-6));  // float32 precision
  std::filesystem::remove(ppm_path);
  std::filesystem::remove(pfm_path);
}
