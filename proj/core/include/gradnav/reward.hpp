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

#ifndef GRADNAV_REWARD_HPP_
#define GRADNAV_REWARD_HPP_

#include <array>
#include <vector>

#include "gradnav/dynamics.hpp"
#include "gradnav/gsplat.hpp"
#include "gradnav/tensor.hpp"

namespace gradnav {

// Stepwise reward terms and weights plus the thresholds shared with early
// termination.
struct RewardWeights {
  double survival = 8.0;
  double linear_velocity = -0.5;
  double pose = -0.5;
  double height = -2.0;
  double action = -1.0;
  double action_rate = -1.0;
  double smoothness = -1.0;
  double yaw_alignment = 0.25;
  double waypoint = 2.0;
  double obstacle = 1.0;
  double out_of_map = -2.0;
  double ref_tracking = -2.0;

  double d_threshold = 0.5;  // m, obstacle proximity band
  double h_target = 1.3;     // m, also the initial hover height
  double ceiling = 3.0;      // m
  double v_limit = 20.0;     // m/s
  double oob_limit = 3.0;    // m beyond the map boundary
};

// Unweighted component values per environment ([n,1] each) plus the
// weighted total.
struct RewardBreakdown {
  Tensor survival;
  Tensor linear_velocity;
  Tensor pose;
  Tensor height;
  Tensor action;
  Tensor action_rate;
  Tensor smoothness;
  Tensor yaw_alignment;
  Tensor waypoint;
  Tensor obstacle;
  Tensor out_of_map;
  Tensor ref_tracking;
  Tensor total;  // [n,1] sum of w_i * r_i

  static constexpr std::array<const char*, 12> kNames = {
      "survival",      "linear_velocity", "pose",       "height",
      "action",        "action_rate",     "smoothness", "yaw_alignment",
      "waypoint",      "obstacle",        "out_of_map", "ref_tracking"};
  std::array<const Tensor*, 12> components() const {
    return {&survival,   &linear_velocity, &pose,       &height,
            &action,     &action_rate,     &smoothness, &yaw_alignment,
            &waypoint,   &obstacle,        &out_of_map, &ref_tracking};
  }
};

struct TerminationFlags {
  bool ceiling_exceeded = false;
  bool speed_exceeded = false;
  bool out_of_bounds = false;
  bool any = false;
};

// (i) height above the ceiling, (ii) speed above the limit, (iii) more than
// oob_limit outside the map in x or y.
std::vector<TerminationFlags> check_termination(const DroneState& state,
                                                const Scene& scene,
                                                const RewardWeights& weights);

// Unit tangent of the polyline segment whose closest point to p is nearest
// overall; ties go to the lower segment index.
Vec3 nearest_reference_direction(const Vec3& p,
                                 const std::vector<Vec3>& polyline);

// Full Table-II breakdown on a batched post-step state. Actions are the raw
// squashed 4-vectors emitted by the policy; q0 is the per-env initial
// quaternion. Differentiable where the formulas are (selection masks and
// survival are locally constant).
RewardBreakdown compute_reward(const DroneState& state, const Tensor& action,
                               const Tensor& prev_action,
                               const Tensor& prev_prev_action,
                               const Tensor& q0, const Scene& scene,
                               const Camera& cam,
                               const RewardWeights& weights);

}  // namespace gradnav

#endif  // GRADNAV_REWARD_HPP_
