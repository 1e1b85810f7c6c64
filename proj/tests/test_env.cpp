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

#include <cmath>
#include <cstring>
#include <limits>

#include "gradnav/env.hpp"

using namespace gradnav;

namespace {

Scene empty_scene() {
  Scene scene;
  scene.bounds_lo = {-2, -3, 0};
  scene.bounds_hi = {10, 3, 3};
  scene.reference_trajectory = {{0, 0, 1.3}, {9, 0, 1.3}};
  return scene;
}

EnvConfig small_config(int64_t n) {
  EnvConfig cfg;
  cfg.n_envs = n;
  cfg.render_width = 16;
  cfg.render_height = 16;
  return cfg;
}

EnvConfig nominal_config(int64_t n) {
  EnvConfig cfg = small_config(n);
  cfg.init_box_side = 0.0;
  cfg.init_attitude_range = 0.0;
  cfg.randomization.mass = {1.25, 1.25};
  cfg.randomization.max_thrust = {26.0, 26.0};
  cfg.randomization.inertia_xy = {0.1, 0.1};
  cfg.randomization.inertia_z = {0.2, 0.2};
  cfg.randomization.motor_delay = {1.0, 1.0};
  cfg.randomization.rate_delay = {1.0, 1.0};
  cfg.randomization.drag = {0.0, 0.0};
  return cfg;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) return false;
  return std::memcmp(a.values().data(), b.values().data(),
                     a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("observation and privileged dimensions are pinned") {
  Env env(small_config(3), empty_scene());
  Rng rng(1);
  StepOutput out = env.reset_all(rng);
  CHECK(out.obs.shape() == Shape{3, 16});
  CHECK(out.priv.shape() == Shape{3, 43});
  CHECK(out.images.shape() == Shape{3, 3, 16, 16});
  for (int step = 0; step < 5; ++step) {
    out = env.step(Tensor::zeros({3, 4}), rng);
    CHECK(out.obs.shape() == Shape{3, 16});
    CHECK(out.priv.shape() == Shape{3, 43});
  }
  CHECK(env.observation_history().shape() == Shape{3, 80});
}

TEST_CASE("observations carry no x-y position") {
  // Same seed, same heights, but shifted laterally: the observable vector
  // must be identical.
  EnvConfig a_cfg = nominal_config(2);
  EnvConfig b_cfg = nominal_config(2);
  b_cfg.init_box_center = {3.0, -1.5, 1.3};
  Env a(a_cfg, empty_scene());
  Env b(b_cfg, empty_scene());
  Rng rng_a(5), rng_b(5);
  StepOutput oa = a.reset_all(rng_a);
  StepOutput ob = b.reset_all(rng_b);
  CHECK(tensors_equal(oa.obs, ob.obs));
  // The privileged vector does carry position.
  CHECK_FALSE(tensors_equal(oa.priv, ob.priv));
}

TEST_CASE("reset placement follows the init protocol") {
  SUBCASE("zero-size box pins the start point") {
    Env env(nominal_config(4), empty_scene());
    Rng rng(2);
    env.reset_all(rng);
    auto p = env.state().p.values();
    for (int64_t i = 0; i < 4; ++i) {
      CHECK(p[i * 3 + 0] == 0.0);
      CHECK(p[i * 3 + 1] == 0.0);
      CHECK(p[i * 3 + 2] == 1.3);
    }
    auto q = env.state().q.values();
    for (int64_t i = 0; i < 4; ++i) CHECK(q[i * 4] == 1.0);
  }
  SUBCASE("heights stay inside the unit cube around 1.3 m") {
    EnvConfig cfg = small_config(500);
    Env env(cfg, empty_scene());
    Rng rng(3);
    for (int round = 0; round < 20; ++round) {  // 10^4 lane resets
      env.reset_all(rng);
      auto p = env.state().p.values();
      for (int64_t i = 0; i < 500; ++i) {
        CHECK(p[i * 3 + 2] >= 0.8);
        CHECK(p[i * 3 + 2] <= 1.8);
        CHECK(std::abs(p[i * 3 + 0]) <= 0.5);
        CHECK(std::abs(p[i * 3 + 1]) <= 0.5);
      }
    }
  }
  SUBCASE("same seed gives identical reset batches") {
    Env a(small_config(6), empty_scene());
    Env b(small_config(6), empty_scene());
    Rng ra(9), rb(9);
    StepOutput oa = a.reset_all(ra);
    StepOutput ob = b.reset_all(rb);
    CHECK(tensors_equal(oa.obs, ob.obs));
    CHECK(tensors_equal(oa.images, ob.images));
    CHECK(tensors_equal(a.params().mass, b.params().mass));
  }
}

TEST_CASE("depth prior pooling") {
  SUBCASE("constant image pools to 24 copies") {
    DepthImage img{12, 8, std::vector<double>(96, 2.0)};
    Tensor prior = depth_prior(img);
    REQUIRE(prior.shape() == Shape{24});
    for (double v : prior.values()) CHECK(v == 2.0);
  }
  SUBCASE("left and right halves pool to their own values") {
    DepthImage img{12, 8, std::vector<double>(96)};
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 12; ++x) img.at(y, x) = x < 6 ? 1.0 : 3.0;
    Tensor prior = depth_prior(img);
    for (int r = 0; r < 4; ++r) {
      CHECK(prior.at(r * 6 + 0) == 1.0);
      CHECK(prior.at(r * 6 + 5) == 3.0);
    }
  }
  SUBCASE("pooled mean equals image mean for divisible sizes") {
    Rng rng(4);
    DepthImage img{12, 8, std::vector<double>(96)};
    double mean = 0;
    for (auto& v : img.depth) {
      v = rng.uniform(0, 5);
      mean += v;
    }
    mean /= 96.0;
    Tensor prior = depth_prior(img);
    double pooled = 0;
    for (double v : prior.values()) pooled += v;
    pooled /= 24.0;
    CHECK(pooled == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("curriculum schedule walks the scene cycle") {
  CurriculumSchedule schedule;
  CHECK(schedule.total_epochs() == 1500);
  CurriculumStep s0 = curriculum_next(schedule, 0);
  CHECK(s0.scene_index == 0);
  CHECK(s0.lr_reset);
  CurriculumStep s100 = curriculum_next(schedule, 100);
  CHECK(s100.scene_index == 1);
  CHECK(s100.lr_reset);
  CurriculumStep s300 = curriculum_next(schedule, 300);
  CHECK(s300.scene_index == 0);  // second pass
  CHECK(s300.lr_reset);
  CHECK_FALSE(curriculum_next(schedule, 150).lr_reset);
  CHECK(curriculum_next(schedule, 150).scene_index == 1);
  CHECK_THROWS_AS(curriculum_next(schedule, 1500), std::invalid_argument);
  CHECK_THROWS_AS(curriculum_next(schedule, -1), std::invalid_argument);
}

TEST_CASE("hover action earns the survival-only reward") {
  Env env(nominal_config(2), empty_scene());
  Rng rng(7);
  env.reset_all(rng);
  StepOutput out = env.step(Tensor::zeros({2, 4}), rng);
  for (int64_t i = 0; i < 2; ++i) {
    CHECK(out.reward.total.at(i) == 8.0);
    CHECK_FALSE(out.done[i]);
  }
}

TEST_CASE("termination behaviors") {
  SUBCASE("full throttle breaches the ceiling") {
    Env env(nominal_config(1), empty_scene());
    Rng rng(8);
    env.reset_all(rng);
    std::vector<double> up = {0, 0, 0, 8.0};  // thrust head saturated high
    bool done = false;
    TerminationFlags term;
    for (int step = 0; step < 100 && !done; ++step) {
      StepOutput out = env.step(Tensor::from({1, 4}, up), rng);
      done = out.done[0];
      term = out.term[0];
    }
    CHECK(done);
    CHECK(term.ceiling_exceeded);
    // Done implies exactly one of: early flag, or full episode.
    CHECK(env.steps_in_episode(0) < 600);
  }
  SUBCASE("600 healthy steps end the episode by length") {
    EnvConfig cfg = nominal_config(1);
    cfg.episode_length = 40;  // shortened for the test
    Env env(cfg, empty_scene());
    Rng rng(9);
    env.reset_all(rng);
    Tensor hover = Tensor::zeros({1, 4});
    StepOutput out;
    for (int step = 0; step < 40; ++step) {
      out = env.step(hover, rng);
      if (step < 39) CHECK_FALSE(out.done[0]);
    }
    CHECK(out.done[0]);
    CHECK_FALSE(out.term[0].any);
    // Auto-reset happens on the next call.
    out = env.step(hover, rng);
    CHECK(env.steps_in_episode(0) == 1);
    CHECK_FALSE(out.done[0]);
  }
  SUBCASE("non-finite actions fault the env") {
    Env env(nominal_config(2), empty_scene());
    Rng rng(10);
    env.reset_all(rng);
    std::vector<double> bad = {0, 0, 0, 0,
                               std::numeric_limits<double>::quiet_NaN(), 0, 0, 0};
    StepOutput out = env.step(Tensor::from({2, 4}, bad), rng);
    CHECK_FALSE(out.done[0]);
    CHECK(out.done[1]);
    CHECK(all_finite(out.obs));
  }
}

TEST_CASE("episodes are bit-reproducible under a fixed seed") {
  auto run = [](uint64_t seed) {
    EnvConfig cfg = small_config(3);
    Env env(cfg, make_gate_scene(0.0, 11));
    Rng rng(seed);
    env.reset_all(rng);
    Rng action_rng(seed + 1);
    std::vector<double> trace;
    for (int step = 0; step < 30; ++step) {
      std::vector<double> u(12);
      for (auto& v : u) v = action_rng.uniform(-0.3, 0.3);
      StepOutput out = env.step(Tensor::from({3, 4}, u), rng);
      auto obs = out.obs.values();
      trace.insert(trace.end(), obs.begin(), obs.end());
      auto img = out.images.values();
      trace.insert(trace.end(), img.begin(), img.begin() + 32);
      trace.push_back(out.reward.total.at(0));
    }
    return trace;
  };
  auto a = run(42);
  auto b = run(42);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("window detach preserves values and cuts the graph") {
  Env env(small_config(2), empty_scene());
  Rng rng(13);
  env.reset_all(rng);
  Tensor u = Tensor::zeros({2, 4});
  u.set_requires_grad(true);
  StepOutput out = env.step(u, rng);
  CHECK(out.obs.requires_grad());
  std::vector<double> before(env.state().p.values().begin(),
                             env.state().p.values().end());
  env.detach_state();
  CHECK_FALSE(env.state().p.requires_grad());
  std::vector<double> after(env.state().p.values().begin(),
                            env.state().p.values().end());
  CHECK(before == after);
}
