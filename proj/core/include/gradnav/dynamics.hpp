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

#ifndef GRADNAV_DYNAMICS_HPP_
#define GRADNAV_DYNAMICS_HPP_

#include <cstdint>
#include <utility>

#include "gradnav/rng.hpp"
#include "gradnav/tensor.hpp"

namespace gradnav {

// Batched differentiable quadrotor rigid-body simulator with a PD body-rate
// attitude loop, first-order motor / body-rate delay filters, and linear
// world-frame drag. All quantities are row-per-environment tensors.

inline constexpr double kGravityZ = -9.81;  // m/s^2, world z
inline constexpr double kDefaultDt = 0.05;  // s (20 Hz)

// (p, q, v, w, a): position, scalar-first unit quaternion, world linear
// velocity, body rates, world linear acceleration. 16 numbers per drone;
// acceleration is a derived output carried along with the integrated state.
struct DroneState {
  Tensor p;  // [n,3] m
  Tensor q;  // [n,4]
  Tensor v;  // [n,3] m/s
  Tensor w;  // [n,3] rad/s
  Tensor a;  // [n,3] m/s^2

  int64_t batch() const { return p.defined() ? p.dim(0) : 0; }
  static DroneState zeros(int64_t n);  // identity attitude, everything else 0
  DroneState detach() const;
};

struct ControlInput {
  Tensor w_d;  // [n,3] desired body rates, rad/s
  Tensor c;    // [n,1] normalized thrust; clamped to [0,1] before use
};

struct DroneParams {
  Tensor mass;     // [n,1] kg
  Tensor inertia;  // [n,3] diagonal (Ix, Iy, Iz), kg m^2
  Tensor kp;       // [3] attitude-loop P gains (fixed, not randomized)
  Tensor kd;       // [3] attitude-loop D gains
  Tensor t_max;    // [n,1] maximum total thrust, N
  Tensor k_motor;  // [n,1] motor delay factor in (0,1]; 1 = no delay
  Tensor k_rate;   // [n,1] body-rate delay factor in (0,1]
  Tensor k_drag;   // [n,1] drag force coefficient

  int64_t batch() const { return mass.defined() ? mass.dim(0) : 0; }
  void validate() const;

  // Mid-range physical parameters with the default PD gains.
  static DroneParams nominal(int64_t n);
};

// First-order filter registers plus the previous angular acceleration used
// by the PD derivative term.
struct DelayState {
  Tensor w_d_eff;     // [n,3] filtered desired body rates
  Tensor c_eff;       // [n,1] filtered normalized thrust
  Tensor w_dot_prev;  // [n,3] previous angular acceleration

  static DelayState zeros(int64_t n);
  DelayState detach() const;
};

// Closed randomization intervals per physical parameter.
struct RandomizationRanges {
  std::pair<double, double> mass{1.0, 1.5};         // kg
  std::pair<double, double> max_thrust{22.0, 30.0};  // N
  std::pair<double, double> inertia_xy{0.075, 0.125};
  std::pair<double, double> inertia_z{0.15, 0.25};
  std::pair<double, double> motor_delay{0.5, 0.8};
  std::pair<double, double> rate_delay{0.5, 0.8};
  std::pair<double, double> drag{0.4, 0.6};

  void validate() const;  // low <= high everywhere
};

struct StepResult {
  DroneState state;
  DelayState delay;
};

// One 20 Hz step. In order: delay filters, PD torque, angular acceleration,
// semi-implicit Euler on the body rates, quaternion integration, thrust and
// drag acceleration, semi-implicit Euler on velocity then position. The map
// is differentiable with respect to state and control.
StepResult step(const DroneState& state, const ControlInput& u,
                const DroneParams& params, const DelayState& delay, double dt);

// Per-parameter i.i.d. uniform draws within the ranges, deterministic under
// a fixed generator state.
DroneParams sample_params(const RandomizationRanges& ranges, Rng& rng,
                          int64_t n);

// [4] -> [3,3] or [n,4] -> [n,3,3]; requires an approximately unit
// quaternion and rejects a zero one.
Tensor rotation_matrix(const Tensor& q);

// Building blocks shared with the reward and observation code.
Tensor quat_normalize(const Tensor& q);        // [n,4]
Tensor quat_axis_x(const Tensor& q);           // body +x in world, [n,3]
Tensor quat_axis_z(const Tensor& q);           // body +z in world, [n,3]
Tensor cross3(const Tensor& a, const Tensor& b);  // [n,3] x [n,3]

}  // namespace gradnav

#endif  // GRADNAV_DYNAMICS_HPP_
