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

#include "gradnav/dynamics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gradnav {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("dynamics: " + msg);
}

void require_finite(const Tensor& t, const char* name) {
  if (!all_finite(t)) fail(std::string("non-finite values in ") + name);
}

Tensor col(const Tensor& t, int64_t index) { return slice(t, 1, index, 1); }

}  // namespace

DroneState DroneState::zeros(int64_t n) {
  DroneState s;
  s.p = Tensor::zeros({n, 3});
  std::vector<double> q(n * 4, 0.0);
  for (int64_t i = 0; i < n; ++i) q[i * 4] = 1.0;
  s.q = Tensor::from({n, 4}, std::move(q));
  s.v = Tensor::zeros({n, 3});
  s.w = Tensor::zeros({n, 3});
  s.a = Tensor::zeros({n, 3});
  return s;
}

DroneState DroneState::detach() const {
  return {p.detach(), q.detach(), v.detach(), w.detach(), a.detach()};
}

DelayState DelayState::zeros(int64_t n) {
  return {Tensor::zeros({n, 3}), Tensor::zeros({n, 1}), Tensor::zeros({n, 3})};
}

DelayState DelayState::detach() const {
  return {w_d_eff.detach(), c_eff.detach(), w_dot_prev.detach()};
}

void DroneParams::validate() const {
  auto positive = [](const Tensor& t, const char* name) {
    for (double v : t.values())
      if (!(v > 0.0)) fail(std::string(name) + " must be positive");
  };
  positive(mass, "mass");
  positive(inertia, "inertia");
  positive(t_max, "t_max");
  for (const auto* d : {&k_motor, &k_rate}) {
    for (double v : d->values())
      if (!(v > 0.0 && v <= 1.0)) fail("delay factors must lie in (0,1]");
  }
}

DroneParams DroneParams::nominal(int64_t n) {
  DroneParams p;
  p.mass = Tensor::full({n, 1}, 1.25);
  std::vector<double> inertia(n * 3);
  for (int64_t i = 0; i < n; ++i) {
    inertia[i * 3 + 0] = 0.1;
    inertia[i * 3 + 1] = 0.1;
    inertia[i * 3 + 2] = 0.2;
  }
  p.inertia = Tensor::from({n, 3}, std::move(inertia));
  p.kp = Tensor::from({3}, {1.6, 1.6, 1.0});
  p.kd = Tensor::from({3}, {0.02, 0.02, 0.01});
  p.t_max = Tensor::full({n, 1}, 26.0);
  p.k_motor = Tensor::full({n, 1}, 0.65);
  p.k_rate = Tensor::full({n, 1}, 0.65);
  p.k_drag = Tensor::full({n, 1}, 0.5);
  return p;
}

void RandomizationRanges::validate() const {
  for (const auto* r : {&mass, &max_thrust, &inertia_xy, &inertia_z,
                        &motor_delay, &rate_delay, &drag}) {
    if (r->first > r->second)
      fail("randomization interval has low > high");
  }
}

Tensor quat_normalize(const Tensor& q) {
  Tensor norm = sqrt(sum_axis(square(q), -1, /*keepdim=*/true));
  return div(q, norm);
}

Tensor cross3(const Tensor& a, const Tensor& b) {
  Tensor ax = col(a, 0), ay = col(a, 1), az = col(a, 2);
  Tensor bx = col(b, 0), by = col(b, 1), bz = col(b, 2);
  return concat({sub(mul(ay, bz), mul(az, by)),
                 sub(mul(az, bx), mul(ax, bz)),
                 sub(mul(ax, by), mul(ay, bx))},
                1);
}

Tensor quat_axis_x(const Tensor& q) {
  Tensor w = col(q, 0), x = col(q, 1), y = col(q, 2), z = col(q, 3);
  Tensor one = Tensor::full({1}, 1.0);
  return concat({sub(one, mul_scalar(add(square(y), square(z)), 2.0)),
                 mul_scalar(add(mul(x, y), mul(w, z)), 2.0),
                 mul_scalar(sub(mul(x, z), mul(w, y)), 2.0)},
                1);
}

Tensor quat_axis_z(const Tensor& q) {
  Tensor w = col(q, 0), x = col(q, 1), y = col(q, 2), z = col(q, 3);
  Tensor one = Tensor::full({1}, 1.0);
  return concat({mul_scalar(add(mul(x, z), mul(w, y)), 2.0),
                 mul_scalar(sub(mul(y, z), mul(w, x)), 2.0),
                 sub(one, mul_scalar(add(square(x), square(y)), 2.0))},
                1);
}

Tensor rotation_matrix(const Tensor& q) {
  bool single = q.rank() == 1;
  if ((single && q.dim(0) != 4) || (!single && (q.rank() != 2 || q.dim(1) != 4)))
    fail("rotation_matrix expects [4] or [n,4], got " + shape_str(q.shape()));
  for (int64_t i = 0; i < q.numel() / 4; ++i) {
    double n2 = 0.0;
    for (int j = 0; j < 4; ++j) n2 += q.at(i * 4 + j) * q.at(i * 4 + j);
    if (n2 == 0.0) fail("rotation_matrix rejects the zero quaternion");
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
      fail("rotation_matrix requires a unit quaternion (|q| = " +
           std::to_string(std::sqrt(n2)) + ")");
  }
  Tensor qb = single ? reshape(q, {1, 4}) : q;
  Tensor w = col(qb, 0), x = col(qb, 1), y = col(qb, 2), z = col(qb, 3);
  Tensor one = Tensor::full({1}, 1.0);
  auto two = [](const Tensor& t) { return mul_scalar(t, 2.0); };
  std::vector<Tensor> entries = {
      sub(one, two(add(square(y), square(z)))),
      two(sub(mul(x, y), mul(w, z))),
      two(add(mul(x, z), mul(w, y))),
      two(add(mul(x, y), mul(w, z))),
      sub(one, two(add(square(x), square(z)))),
      two(sub(mul(y, z), mul(w, x))),
      two(sub(mul(x, z), mul(w, y))),
      two(add(mul(y, z), mul(w, x))),
      sub(one, two(add(square(x), square(y)))),
  };
  Tensor flat = concat(entries, 1);  // [n,9]
  int64_t n = qb.dim(0);
  return single ? reshape(flat, {3, 3}) : reshape(flat, {n, 3, 3});
}

StepResult step(const DroneState& state, const ControlInput& u,
                const DroneParams& params, const DelayState& delay,
                double dt) {
  if (!(dt > 0.0)) fail("dt must be positive, got " + std::to_string(dt));
  require_finite(state.p, "state.p");
  require_finite(state.q, "state.q");
  require_finite(state.v, "state.v");
  require_finite(state.w, "state.w");
  require_finite(u.w_d, "control.w_d");
  require_finite(u.c, "control.c");

  int64_t n = state.batch();

  // (1) first-order delay filters on the commands
  Tensor c_cmd = clamp(u.c, 0.0, 1.0);
  Tensor w_d_eff =
      add(delay.w_d_eff, mul(params.k_rate, sub(u.w_d, delay.w_d_eff)));
  Tensor c_eff = add(delay.c_eff, mul(params.k_motor, sub(c_cmd, delay.c_eff)));

  // (2)-(3) PD torque and angular acceleration
  Tensor torque = sub(mul(params.kp, sub(w_d_eff, state.w)),
                      mul(params.kd, delay.w_dot_prev));
  Tensor w_dot = div(sub(torque, cross3(state.w, mul(params.inertia, state.w))),
                     params.inertia);

  // (4) semi-implicit Euler on the body rates
  Tensor w_next = add(state.w, mul_scalar(w_dot, dt));

  // (5) quaternion integration with the updated rate
  Tensor omega_quat = concat({Tensor::zeros({n, 1}), w_next}, 1);
  Tensor q_next = quat_normalize(
      add(state.q, mul_scalar(quat_mul(state.q, omega_quat), 0.5 * dt)));

  // (6) thrust along the new body z plus gravity and linear drag
  Tensor thrust_acc = div(mul(c_eff, params.t_max), params.mass);  // [n,1]
  Tensor gravity = Tensor::from({3}, {0.0, 0.0, kGravityZ});
  Tensor accel = add(sub(mul(quat_axis_z(q_next), thrust_acc),
                         mul(div(params.k_drag, params.mass), state.v)),
                     gravity);

  // (7) semi-implicit Euler on velocity then position
  Tensor v_next = add(state.v, mul_scalar(accel, dt));
  Tensor p_next = add(state.p, mul_scalar(v_next, dt));

  StepResult out;
  out.state = {p_next, q_next, v_next, w_next, accel};
  out.delay = {w_d_eff, c_eff, w_dot};
  return out;
}

DroneParams sample_params(const RandomizationRanges& ranges, Rng& rng,
                          int64_t n) {
  if (n < 1) fail("sample_params requires n >= 1");
  ranges.validate();
  std::vector<double> mass(n), t_max(n), k_motor(n), k_rate(n), k_drag(n);
  std::vector<double> inertia(n * 3);
  for (int64_t i = 0; i < n; ++i) {
    mass[i] = rng.uniform(ranges.mass.first, ranges.mass.second);
    t_max[i] = rng.uniform(ranges.max_thrust.first, ranges.max_thrust.second);
    inertia[i * 3 + 0] =
        rng.uniform(ranges.inertia_xy.first, ranges.inertia_xy.second);
    inertia[i * 3 + 1] =
        rng.uniform(ranges.inertia_xy.first, ranges.inertia_xy.second);
    inertia[i * 3 + 2] =
        rng.uniform(ranges.inertia_z.first, ranges.inertia_z.second);
    k_motor[i] = rng.uniform(ranges.motor_delay.first, ranges.motor_delay.second);
    k_rate[i] = rng.uniform(ranges.rate_delay.first, ranges.rate_delay.second);
    k_drag[i] = rng.uniform(ranges.drag.first, ranges.drag.second);
  }
  DroneParams p;
  p.mass = Tensor::from({n, 1}, std::move(mass));
  p.inertia = Tensor::from({n, 3}, std::move(inertia));
  p.kp = Tensor::from({3}, {1.6, 1.6, 1.0});
  p.kd = Tensor::from({3}, {0.02, 0.02, 0.01});
  p.t_max = Tensor::from({n, 1}, std::move(t_max));
  p.k_motor = Tensor::from({n, 1}, std::move(k_motor));
  p.k_rate = Tensor::from({n, 1}, std::move(k_rate));
  p.k_drag = Tensor::from({n, 1}, std::move(k_drag));
  return p;
}

}  // namespace gradnav
