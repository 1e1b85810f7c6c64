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

#ifndef GRADNAV_ENV_HPP_
#define GRADNAV_ENV_HPP_

#include <cstdint>
#include <vector>

#include "gradnav/dynamics.hpp"
#include "gradnav/gsplat.hpp"
#include "gradnav/nets.hpp"
#include "gradnav/reward.hpp"
#include "gradnav/rng.hpp"
#include "gradnav/tensor.hpp"

namespace gradnav {

struct EnvConfig {
  int64_t n_envs = 128;
  double dt = kDefaultDt;
  int64_t episode_length = 600;
  int render_width = 64;
  int render_height = 64;
  Vec3 init_box_center{0.0, 0.0, 1.3};
  double init_box_side = 1.0;          // m
  double init_attitude_range = 0.25;   // rad on each of roll / pitch / yaw
  Camera camera;                       // image size synced on construction
  RenderOptions render_options;
  RandomizationRanges randomization;
  RewardWeights reward;
  double rate_max = 3.0;    // rad/s, body-rate command bound
  double thrust_bias = 0.0; // 0 -> default hover bias
};

struct CurriculumSchedule {
  int64_t scenes = 3;
  int64_t passes_per_scene = 5;
  int64_t epochs_per_pass = 100;
  bool lr_reset = true;

  int64_t total_epochs() const {
    return scenes * passes_per_scene * epochs_per_pass;
  }
};

struct CurriculumStep {
  int64_t scene_index = 0;
  bool lr_reset = false;
};

// Rolling cyclic order over the scene list; the learning rate resets at
// every transition epoch (including epoch 0).
CurriculumStep curriculum_next(const CurriculumSchedule& schedule,
                               int64_t epoch);

// 6x4 average pooling (row-major flatten), replicating edge pixels when the
// image does not divide evenly.
Tensor depth_prior(const DepthImage& depth);

struct StepOutput {
  Tensor obs;     // [n,16] = [h q v a_t a_{t-1}], graph-connected
  Tensor priv;    // [n,43] = [o p d]; depth prior detached
  Tensor images;  // [n,3,H,W] rendered RGB, constants
  RewardBreakdown reward;              // defined after step(), not reset()
  std::vector<uint8_t> done;           // per env
  std::vector<TerminationFlags> term;  // per env (fault folds into done)
};

// Accumulated wall time of the three per-step simulator phases.
struct EnvTimers {
  double dynamics_ms = 0;
  double render_ms = 0;
  double collision_ms = 0;
};

// Batched hybrid environment: differentiable dynamics, splat rendering at
// the new pose, Table-II rewards, early termination, per-env auto-reset.
class Env {
 public:
  Env(EnvConfig config, Scene scene);

  // Swaps the scene (curriculum transition) and resets every environment.
  StepOutput set_scene(Scene scene, Rng& rng);

  // Re-initializes the listed environments (positions in the init cube,
  // attitude in the +-range, fresh randomized parameters, history filled
  // with the initial observation) and returns the current batch bundle.
  StepOutput reset(const std::vector<int64_t>& indices, Rng& rng);
  StepOutput reset_all(Rng& rng);

  // Applies raw policy actions [n,4]; the body-rate/thrust squash happens
  // here, while rewards and observations see the raw vectors. Pending done
  // environments reset first; non-finite action rows fault their
  // environment (early termination).
  StepOutput step(const Tensor& actions, Rng& rng);

  // Cuts the autodiff graph at a window boundary; rollouts continue from
  // the same states.
  void detach_state();

  const EnvConfig& config() const { return config_; }
  const Scene& scene() const { return scene_; }
  const DroneState& state() const { return state_; }
  const DroneParams& params() const { return params_; }
  Tensor observation_history() const;  // [n, 5*16], oldest first
  Tensor initial_quat() const { return q0_; }
  int64_t steps_in_episode(int64_t env) const { return step_count_[env]; }
  int64_t n_envs() const { return config_.n_envs; }
  const EnvTimers& timers() const { return timers_; }
  void reset_timers() { timers_ = EnvTimers{}; }

 private:
  StepOutput bundle(Tensor actions_applied) const;
  void apply_resets(const std::vector<int64_t>& indices, Rng& rng);
  void render_current();

  EnvConfig config_;
  Scene scene_;
  DroneState state_;
  DelayState delay_;
  DroneParams params_;
  Tensor q0_;           // [n,4] initial quaternion per env
  Tensor prev_action_;  // [n,4]
  Tensor prev_prev_action_;
  std::vector<Tensor> history_;  // kHistorySteps entries of [n,16]
  std::vector<int64_t> step_count_;
  std::vector<uint8_t> pending_reset_;
  std::vector<uint8_t> last_done_;
  std::vector<TerminationFlags> last_term_;
  RewardBreakdown last_reward_;
  Tensor images_;       // [n,3,H,W]
  Tensor depth_prior_;  // [n,24]
  EnvTimers timers_;
  bool initialized_ = false;
};

}  // namespace gradnav

#endif  // GRADNAV_ENV_HPP_
