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

#include "gradnav/env.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace gradnav {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("env: " + msg);
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Quat quat_from_euler(double roll, double pitch, double yaw) {
  double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
  double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
  double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
  // Intrinsic z-y-x (yaw, then pitch, then roll).
  return {cy * cp * cr + sy * sp * sr, cy * cp * sr - sy * sp * cr,
          cy * sp * cr + sy * cp * sr, sy * cp * cr - cy * sp * sr};
}

}  // namespace

CurriculumStep curriculum_next(const CurriculumSchedule& schedule,
                               int64_t epoch) {
  if (epoch < 0 || epoch >= schedule.total_epochs())
    fail("curriculum epoch " + std::to_string(epoch) +
         " outside [0," + std::to_string(schedule.total_epochs()) + ")");
  CurriculumStep out;
  out.scene_index = (epoch / schedule.epochs_per_pass) % schedule.scenes;
  out.lr_reset = schedule.lr_reset && (epoch % schedule.epochs_per_pass == 0);
  return out;
}

Tensor depth_prior(const DepthImage& depth) {
  constexpr int kCols = 6, kRows = 4;
  if (depth.width < 1 || depth.height < 1) fail("depth image is empty");
  int cell_w = (depth.width + kCols - 1) / kCols;
  int cell_h = (depth.height + kRows - 1) / kRows;
  std::vector<double> pooled(kRows * kCols, 0.0);
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kCols; ++c) {
      double acc = 0.0;
      for (int y = r * cell_h; y < (r + 1) * cell_h; ++y) {
        int yy = std::min(y, depth.height - 1);  // pad by replication
        for (int x = c * cell_w; x < (c + 1) * cell_w; ++x) {
          int xx = std::min(x, depth.width - 1);
          acc += depth.at(yy, xx);
        }
      }
      pooled[r * kCols + c] = acc / (cell_w * cell_h);
    }
  }
  return Tensor::from({kRows * kCols}, std::move(pooled));
}

// ---------------------------------------------------------------------------

Env::Env(EnvConfig config, Scene scene)
    : config_(std::move(config)), scene_(std::move(scene)) {
  if (config_.n_envs < 1) fail("n_envs must be >= 1");
  if (config_.episode_length < 1) fail("episode_length must be >= 1");
  scene_.validate();
  if (config_.camera.width != config_.render_width ||
      config_.camera.height != config_.render_height)
    config_.camera =
        Camera::make_default(config_.render_width, config_.render_height);
  if (config_.thrust_bias == 0.0) config_.thrust_bias = default_thrust_bias();
  int64_t n = config_.n_envs;
  state_ = DroneState::zeros(n);
  delay_ = DelayState::zeros(n);
  params_ = DroneParams::nominal(n);
  q0_ = Tensor::zeros({n, 4});
  prev_action_ = Tensor::zeros({n, 4});
  prev_prev_action_ = Tensor::zeros({n, 4});
  step_count_.assign(n, 0);
  pending_reset_.assign(n, 0);
  last_done_.assign(n, 0);
  last_term_.assign(n, TerminationFlags{});
}

StepOutput Env::set_scene(Scene scene, Rng& rng) {
  scene.validate();
  scene_ = std::move(scene);
  return reset_all(rng);
}

StepOutput Env::reset_all(Rng& rng) {
  std::vector<int64_t> all(config_.n_envs);
  for (int64_t i = 0; i < config_.n_envs; ++i) all[i] = i;
  initialized_ = true;
  return reset(all, rng);
}

void Env::apply_resets(const std::vector<int64_t>& indices, Rng& rng) {
  int64_t n = config_.n_envs;
  std::vector<double> mask_values(n, 0.0);
  std::vector<double> fresh_p(n * 3, 0.0), fresh_q(n * 4, 0.0);
  for (int64_t i = 0; i < n; ++i) fresh_q[i * 4] = 1.0;

  DroneParams fresh_params =
      sample_params(config_.randomization, rng, (int64_t)indices.size());

  for (size_t k = 0; k < indices.size(); ++k) {
    int64_t i = indices[k];
    if (i < 0 || i >= n) fail("reset index out of range");
    mask_values[i] = 1.0;
    double half = config_.init_box_side / 2.0;
    for (int axis = 0; axis < 3; ++axis)
      fresh_p[i * 3 + axis] =
          config_.init_box_center[axis] + rng.uniform(-half, half);
    double range = config_.init_attitude_range;
    Quat q = quat_from_euler(rng.uniform(-range, range),
                             rng.uniform(-range, range),
                             rng.uniform(-range, range));
    for (int j = 0; j < 4; ++j) fresh_q[i * 4 + j] = q[j];
    step_count_[i] = 0;
    pending_reset_[i] = 0;
  }

  Tensor mask = Tensor::from({n, 1}, std::move(mask_values));
  Tensor fresh_p_t = Tensor::from({n, 3}, std::move(fresh_p));
  Tensor fresh_q_t = Tensor::from({n, 4}, std::move(fresh_q));
  Tensor zeros3 = Tensor::zeros({1});
  state_.p = where(mask, fresh_p_t, state_.p);
  state_.q = where(mask, fresh_q_t, state_.q);
  state_.v = where(mask, zeros3, state_.v);
  state_.w = where(mask, zeros3, state_.w);
  state_.a = where(mask, zeros3, state_.a);
  delay_.w_d_eff = where(mask, zeros3, delay_.w_d_eff);
  delay_.c_eff = where(mask, zeros3, delay_.c_eff);
  delay_.w_dot_prev = where(mask, zeros3, delay_.w_dot_prev);
  prev_action_ = where(mask, zeros3, prev_action_);
  prev_prev_action_ = where(mask, zeros3, prev_prev_action_);
  q0_ = where(mask, fresh_q_t, q0_).detach();

  // Splice the constant per-env physical parameters.
  auto splice = [&](Tensor& dst, const Tensor& src, int64_t width) {
    std::vector<double> values(dst.values().begin(), dst.values().end());
    for (size_t k = 0; k < indices.size(); ++k)
      for (int64_t j = 0; j < width; ++j)
        values[indices[k] * width + j] = src.at((int64_t)k * width + j);
    dst = Tensor::from(dst.shape(), std::move(values));
  };
  splice(params_.mass, fresh_params.mass, 1);
  splice(params_.inertia, fresh_params.inertia, 3);
  splice(params_.t_max, fresh_params.t_max, 1);
  splice(params_.k_motor, fresh_params.k_motor, 1);
  splice(params_.k_rate, fresh_params.k_rate, 1);
  splice(params_.k_drag, fresh_params.k_drag, 1);

  // Render the reset lanes and rebuild the image / depth-prior constants.
  {
    NoGradGuard no_grad;
    int w = config_.camera.width, h = config_.camera.height;
    int64_t img_stride = 3LL * w * h;
    std::vector<double> image_values(n * img_stride, 0.0);
    std::vector<double> prior_values(n * kDepthPriorDim, 0.0);
    if (images_.defined()) {
      auto iv = images_.values();
      image_values.assign(iv.begin(), iv.end());
      auto dv = depth_prior_.values();
      prior_values.assign(dv.begin(), dv.end());
    }
    auto pv = state_.p.values();
    auto qv = state_.q.values();
    for (int64_t i : indices) {
      BodyPose pose{{pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]},
                    {qv[i * 4], qv[i * 4 + 1], qv[i * 4 + 2], qv[i * 4 + 3]}};
      RenderResult r = render(scene_, pose, config_.camera,
                              config_.render_options);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            image_values[i * img_stride + (c * h + y) * w + x] =
                r.rgb.at(y, x, c);
      Tensor prior = depth_prior(r.depth);
      for (int64_t j = 0; j < kDepthPriorDim; ++j)
        prior_values[i * kDepthPriorDim + j] = prior.at(j);
    }
    images_ = Tensor::from({n, 3, h, w}, std::move(image_values));
    depth_prior_ = Tensor::from({n, kDepthPriorDim}, std::move(prior_values));
  }

  // Fill the history with the initial observation (actions zeroed).
  Tensor h_col = slice(state_.p, 1, 2, 1);
  Tensor zero_act = Tensor::zeros({n, 4});
  Tensor fresh_obs =
      concat({h_col, state_.q, state_.v, zero_act, zero_act}, 1);
  if (history_.empty()) {
    history_.assign(kHistorySteps, fresh_obs);
  } else {
    for (Tensor& slot : history_) slot = where(mask, fresh_obs, slot);
  }
}

StepOutput Env::reset(const std::vector<int64_t>& indices, Rng& rng) {
  if (!initialized_) fail("reset_all() must run before partial resets");
  apply_resets(indices, rng);
  StepOutput out;
  out.obs = history_.back();
  out.priv = concat({out.obs, state_.p, depth_prior_}, 1);
  out.images = images_;
  out.done.assign(config_.n_envs, 0);
  out.term.assign(config_.n_envs, TerminationFlags{});
  return out;
}

void Env::render_current() {
  NoGradGuard no_grad;
  int w = config_.camera.width, h = config_.camera.height;
  int64_t n = config_.n_envs;
  int64_t img_stride = 3LL * w * h;
  std::vector<double> image_values(n * img_stride);
  std::vector<double> prior_values(n * kDepthPriorDim);
  auto pv = state_.p.values();
  auto qv = state_.q.values();
  for (int64_t i = 0; i < n; ++i) {
    BodyPose pose{{pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]},
                  {qv[i * 4], qv[i * 4 + 1], qv[i * 4 + 2], qv[i * 4 + 3]}};
    RenderResult r =
        render(scene_, pose, config_.camera, config_.render_options);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          image_values[i * img_stride + (c * h + y) * w + x] = r.rgb.at(y, x, c);
    Tensor prior = depth_prior(r.depth);
    for (int64_t j = 0; j < kDepthPriorDim; ++j)
      prior_values[i * kDepthPriorDim + j] = prior.at(j);
  }
  images_ = Tensor::from({n, 3, h, w}, std::move(image_values));
  depth_prior_ = Tensor::from({n, kDepthPriorDim}, std::move(prior_values));
}

StepOutput Env::step(const Tensor& actions, Rng& rng) {
  if (!initialized_) fail("reset_all() must run before step()");
  int64_t n = config_.n_envs;
  if (actions.rank() != 2 || actions.dim(0) != n || actions.dim(1) != kActDim)
    fail("step expects actions [n,4], got " + shape_str(actions.shape()));

  // Auto-reset environments that finished on the previous call.
  std::vector<int64_t> pending;
  for (int64_t i = 0; i < n; ++i)
    if (pending_reset_[i]) pending.push_back(i);
  if (!pending.empty()) apply_resets(pending, rng);

  // Fault detection: non-finite action rows terminate their environment.
  std::vector<uint8_t> fault(n, 0);
  bool any_fault = false;
  {
    auto av = actions.values();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < kActDim; ++j)
        if (!std::isfinite(av[i * kActDim + j])) {
          fault[i] = 1;
          any_fault = true;
          break;
        }
  }
  Tensor applied = actions;
  if (any_fault) {
    std::vector<double> mask(n, 0.0);
    for (int64_t i = 0; i < n; ++i) mask[i] = fault[i] ? 1.0 : 0.0;
    applied = where(Tensor::from({n, 1}, std::move(mask)), Tensor::zeros({1}),
                    actions);
  }

  double t0 = now_ms();
  Tensor control =
      squash_action(applied, config_.rate_max, config_.thrust_bias);
  ControlInput u{slice(control, 1, 0, 3), slice(control, 1, 3, 1)};
  StepResult result = gradnav::step(state_, u, params_, delay_, config_.dt);
  state_ = result.state;
  delay_ = result.delay;
  double t1 = now_ms();
  timers_.dynamics_ms += t1 - t0;

  render_current();
  double t2 = now_ms();
  timers_.render_ms += t2 - t1;

  // Explicit clearance pass, the Table-I "collision check" share.
  {
    auto pv = state_.p.values();
    auto qv = state_.q.values();
    for (int64_t i = 0; i < n; ++i) {
      BodyPose pose{{pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]},
                    {qv[i * 4], qv[i * 4 + 1], qv[i * 4 + 2], qv[i * 4 + 3]}};
      double distance;
      nearest_visible_obstacle(scene_, pose, config_.camera, &distance);
    }
  }
  timers_.collision_ms += now_ms() - t2;

  last_reward_ = compute_reward(state_, applied, prev_action_,
                                prev_prev_action_, q0_, scene_, config_.camera,
                                config_.reward);
  last_term_ = check_termination(state_, scene_, config_.reward);

  StepOutput out;
  Tensor h_col = slice(state_.p, 1, 2, 1);
  out.obs = concat({h_col, state_.q, state_.v, applied, prev_action_}, 1);
  out.priv = concat({out.obs, state_.p, depth_prior_}, 1);
  out.images = images_;
  out.reward = last_reward_;
  out.term = last_term_;
  out.done.assign(n, 0);
  for (int64_t i = 0; i < n; ++i) {
    ++step_count_[i];
    bool early = last_term_[i].any || fault[i];
    bool length_done = !early && step_count_[i] >= config_.episode_length;
    out.done[i] = early || length_done;
    pending_reset_[i] = out.done[i];
  }
  last_done_ = out.done;

  history_.erase(history_.begin());
  history_.push_back(out.obs);
  prev_prev_action_ = prev_action_;
  prev_action_ = applied;
  return out;
}

void Env::detach_state() {
  state_ = state_.detach();
  delay_ = delay_.detach();
  prev_action_ = prev_action_.detach();
  prev_prev_action_ = prev_prev_action_.detach();
  for (Tensor& slot : history_) slot = slot.detach();
}

Tensor Env::observation_history() const {
  return concat(history_, 1);  // oldest first
}

}  // namespace gradnav
