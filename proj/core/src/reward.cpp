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

#include "gradnav/reward.hpp"

#include <cmath>
#include <limits>

namespace gradnav {

namespace {

constexpr double kSpeedEps = 1e-6;

double overshoot(double v, double lo, double hi) {
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0.0;
}

Tensor col(const Tensor& t, int64_t index) { return slice(t, 1, index, 1); }

Tensor squared_norm_rows(const Tensor& t) {
  return sum_axis(square(t), 1, /*keepdim=*/true);
}

// sqrt(sum of squares) with a floor that keeps downstream divisions free of
// 0/0 adjoints; callers mask the affected rows to zero.
Tensor safe_norm_rows(const Tensor& t, double floor_value) {
  return maximum(sqrt(squared_norm_rows(t)),
                 Tensor::full({1}, floor_value));
}

}  // namespace

std::vector<TerminationFlags> check_termination(const DroneState& state,
                                                const Scene& scene,
                                                const RewardWeights& weights) {
  int64_t n = state.batch();
  std::vector<TerminationFlags> flags(n);
  auto p = state.p.values();
  auto v = state.v.values();
  for (int64_t i = 0; i < n; ++i) {
    TerminationFlags& f = flags[i];
    f.ceiling_exceeded = p[i * 3 + 2] > weights.ceiling;
    double speed = std::sqrt(v[i * 3] * v[i * 3] + v[i * 3 + 1] * v[i * 3 + 1] +
                             v[i * 3 + 2] * v[i * 3 + 2]);
    f.speed_exceeded = speed > weights.v_limit;
    double x_ob = overshoot(p[i * 3], scene.bounds_lo[0], scene.bounds_hi[0]);
    double y_ob =
        overshoot(p[i * 3 + 1], scene.bounds_lo[1], scene.bounds_hi[1]);
    f.out_of_bounds = x_ob >= weights.oob_limit || y_ob >= weights.oob_limit;
    f.any = f.ceiling_exceeded || f.speed_exceeded || f.out_of_bounds;
  }
  return flags;
}

Vec3 nearest_reference_direction(const Vec3& p,
                                 const std::vector<Vec3>& polyline) {
  if (polyline.size() < 2)
    throw std::invalid_argument(
        "nearest_reference_direction: polyline needs at least 2 points");
  double best = std::numeric_limits<double>::infinity();
  Vec3 tangent{1, 0, 0};
  for (size_t s = 0; s + 1 < polyline.size(); ++s) {
    const Vec3& a = polyline[s];
    const Vec3& b = polyline[s + 1];
    double seg[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    double len_sq = seg[0] * seg[0] + seg[1] * seg[1] + seg[2] * seg[2];
    if (len_sq == 0.0) continue;
    double t = ((p[0] - a[0]) * seg[0] + (p[1] - a[1]) * seg[1] +
                (p[2] - a[2]) * seg[2]) /
               len_sq;
    t = std::clamp(t, 0.0, 1.0);
    double dist_sq = 0.0;
    for (int k = 0; k < 3; ++k) {
      double d = p[k] - (a[k] + t * seg[k]);
      dist_sq += d * d;
    }
    if (dist_sq < best) {
      best = dist_sq;
      double len = std::sqrt(len_sq);
      tangent = {seg[0] / len, seg[1] / len, seg[2] / len};
    }
  }
  return tangent;
}

RewardBreakdown compute_reward(const DroneState& state, const Tensor& action,
                               const Tensor& prev_action,
                               const Tensor& prev_prev_action,
                               const Tensor& q0, const Scene& scene,
                               const Camera& cam,
                               const RewardWeights& weights) {
  int64_t n = state.batch();
  RewardBreakdown out;

  // Survival: 1 unless one of the early-termination conditions fired.
  std::vector<TerminationFlags> flags = check_termination(state, scene, weights);
  {
    std::vector<double> alive(n);
    for (int64_t i = 0; i < n; ++i) alive[i] = flags[i].any ? 0.0 : 1.0;
    out.survival = Tensor::from({n, 1}, std::move(alive));
  }

  out.linear_velocity = squared_norm_rows(state.v);

  // Pose: ||q - q0|| with the double cover removed by sign alignment.
  {
    Tensor dot = sum_axis(mul(state.q, q0), 1, true);
    std::vector<double> sign(n);
    for (int64_t i = 0; i < n; ++i) sign[i] = dot.at(i) < 0.0 ? -1.0 : 1.0;
    Tensor aligned = mul(state.q, Tensor::from({n, 1}, std::move(sign)));
    out.pose = sqrt(squared_norm_rows(sub(aligned, q0)));
  }

  out.height = square(add_scalar(col(state.p, 2), -weights.h_target));
  out.action = squared_norm_rows(action);
  out.action_rate = squared_norm_rows(sub(action, prev_action));
  out.smoothness = squared_norm_rows(
      add(sub(action, mul_scalar(prev_action, 2.0)), prev_prev_action));

  // Yaw alignment: unit horizontal velocity against the unit horizontal
  // heading; zero when either is degenerate.
  {
    Tensor v_xy = slice(state.v, 1, 0, 2);
    Tensor heading_xy = slice(quat_axis_x(state.q), 1, 0, 2);
    Tensor v_norm = safe_norm_rows(v_xy, kSpeedEps);
    Tensor h_norm = safe_norm_rows(heading_xy, kSpeedEps);
    Tensor aligned = sum_axis(
        mul(div(v_xy, v_norm), div(heading_xy, h_norm)), 1, true);
    std::vector<double> ok(n);
    auto vv = state.v.values();
    for (int64_t i = 0; i < n; ++i) {
      double norm_xy = std::hypot(vv[i * 3], vv[i * 3 + 1]);
      ok[i] = norm_xy < kSpeedEps ? 0.0 : 1.0;
    }
    out.yaw_alignment = where(Tensor::from({n, 1}, std::move(ok)), aligned,
                              Tensor::zeros({1}));
  }

  // Waypoint: exp(-||p - w_next||^2) against the nearest waypoint not yet
  // passed in x; zero once the drone is past the last one.
  {
    std::vector<double> target(n * 3, 0.0), valid(n, 0.0);
    auto pv = state.p.values();
    for (int64_t i = 0; i < n; ++i) {
      double px = pv[i * 3];
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& wp : scene.waypoints) {
        if (!(wp[0] >= px)) continue;
        double d2 = 0;
        for (int k = 0; k < 3; ++k) {
          double d = wp[k] - pv[i * 3 + k];
          d2 += d * d;
        }
        if (d2 < best) {
          best = d2;
          valid[i] = 1.0;
          for (int k = 0; k < 3; ++k) target[i * 3 + k] = wp[k];
        }
      }
    }
    Tensor towards = sub(state.p, Tensor::from({n, 3}, std::move(target)));
    Tensor attraction = exp(neg(squared_norm_rows(towards)));
    out.waypoint = where(Tensor::from({n, 1}, std::move(valid)), attraction,
                         Tensor::zeros({1}));
  }

  // Obstacle: the raw in-FOV clearance when closer than the threshold,
  // differentiable through the minimizing point.
  {
    std::vector<double> target(n * 3, 0.0), active(n, 0.0);
    auto pv = state.p.values();
    auto qv = state.q.values();
    for (int64_t i = 0; i < n; ++i) {
      BodyPose pose;
      pose.p = {pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]};
      pose.q = {qv[i * 4], qv[i * 4 + 1], qv[i * 4 + 2], qv[i * 4 + 3]};
      double distance = std::numeric_limits<double>::infinity();
      int64_t index = nearest_visible_obstacle(scene, pose, cam, &distance);
      if (index >= 0 && distance < weights.d_threshold) {
        active[i] = 1.0;
        for (int k = 0; k < 3; ++k)
          target[i * 3 + k] = scene.obstacle_points[index][k];
      }
    }
    Tensor towards = sub(state.p, Tensor::from({n, 3}, std::move(target)));
    Tensor clearance = safe_norm_rows(towards, 1e-9);
    out.obstacle = where(Tensor::from({n, 1}, std::move(active)), clearance,
                         Tensor::zeros({1}));
  }

  // Out-of-map: squared per-axis overshoot beyond the x / y bounds.
  {
    Tensor px = col(state.p, 0);
    Tensor py = col(state.p, 1);
    Tensor zero = Tensor::zeros({1});
    auto axis_overshoot = [&](const Tensor& c, double lo, double hi) {
      return add(maximum(add_scalar(c, -hi), zero),
                 maximum(add_scalar(neg(c), lo), zero));
    };
    Tensor x_ob = axis_overshoot(px, scene.bounds_lo[0], scene.bounds_hi[0]);
    Tensor y_ob = axis_overshoot(py, scene.bounds_lo[1], scene.bounds_hi[1]);
    out.out_of_map = add(square(x_ob), square(y_ob));
  }

  // Reference tracking: distance between the unit velocity and the unit
  // tangent of the nearest reference segment; zero at rest.
  {
    std::vector<double> desired(n * 3, 0.0), moving(n, 0.0);
    auto pv = state.p.values();
    auto vv = state.v.values();
    for (int64_t i = 0; i < n; ++i) {
      Vec3 p{pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]};
      Vec3 dir = nearest_reference_direction(p, scene.reference_trajectory);
      for (int k = 0; k < 3; ++k) desired[i * 3 + k] = dir[k];
      double speed = std::sqrt(vv[i * 3] * vv[i * 3] +
                               vv[i * 3 + 1] * vv[i * 3 + 1] +
                               vv[i * 3 + 2] * vv[i * 3 + 2]);
      moving[i] = speed < kSpeedEps ? 0.0 : 1.0;
    }
    Tensor v_norm = safe_norm_rows(state.v, kSpeedEps);
    Tensor unit_v = div(state.v, v_norm);
    Tensor mismatch = sqrt(squared_norm_rows(
        sub(unit_v, Tensor::from({n, 3}, std::move(desired)))));
    out.ref_tracking = where(Tensor::from({n, 1}, std::move(moving)), mismatch,
                             Tensor::zeros({1}));
  }

  const double w[12] = {weights.survival,   weights.linear_velocity,
                        weights.pose,       weights.height,
                        weights.action,     weights.action_rate,
                        weights.smoothness, weights.yaw_alignment,
                        weights.waypoint,   weights.obstacle,
                        weights.out_of_map, weights.ref_tracking};
  auto parts = out.components();
  Tensor total = mul_scalar(*parts[0], w[0]);
  for (int i = 1; i < 12; ++i) total = add(total, mul_scalar(*parts[i], w[i]));
  out.total = total;
  return out;
}

}  // namespace gradnav
