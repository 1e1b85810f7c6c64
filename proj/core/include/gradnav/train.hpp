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

#ifndef GRADNAV_TRAIN_HPP_
#define GRADNAV_TRAIN_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gradnav/env.hpp"
#include "gradnav/nets.hpp"

namespace gradnav {

struct TrainConfig {
  std::string algo = "gradnav";  // gradnav | bptt | ppo
  int64_t n_envs = 128;          // 32 for bptt
  int64_t episode_length = 600;
  double gamma = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double cenet_lr = 5e-4;
  double td_lambda = 0.95;       // TD-lambda / GAE lambda
  int64_t horizon = 32;          // bptt: equals episode_length
  int64_t critic_updates = 16;   // minibatch passes per window
  double ppo_clip = 0.1;
  double ppo_entropy_coeff = 1e-3;
  int64_t epochs = 600;
  uint64_t seed = 0;
  double beta = 0.1;             // CENet KL weight
  double grad_clip = 1.0;
  int64_t critic_minibatches = 4;
  int64_t ppo_update_epochs = 4;
  int64_t ppo_minibatches = 4;
  int64_t eval_interval = 0;     // epochs between deterministic evals; 0 = off
  int64_t eval_rollouts = 10;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  Adam(std::vector<NamedParam> params, double lr);

  void step();       // applies accumulated gradients
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::vector<NamedParam>& params() { return params_; }

  // Moments and step counter in checkpoint form.
  std::vector<NamedParam> state(const std::string& prefix) const;
  void load_state(const std::vector<NamedParam>& state);

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> m_, v_;
  Tensor step_count_;  // [1], stored with the state
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

// ---------------------------------------------------------------------------
// Loss building blocks

// Eq.-2 style accumulation with per-env discount registers that reset where
// an episode terminates inside the window.
class PolicyLossAccumulator {
 public:
  PolicyLossAccumulator(int64_t n_envs, double gamma);
  void add_step(const Tensor& reward_total,  // [n,1], graph-connected
                const std::vector<uint8_t>& done);
  // loss = -(sum + gamma_acc * V(s_end) [alive lanes]) / (n * h).
  // Pass an undefined tensor for the critic-free (BPTT) form.
  Tensor finish(const Tensor& bootstrap_values, int64_t horizon) const;

 private:
  Tensor acc_;  // [1]
  std::vector<double> gamma_acc_;
  std::vector<uint8_t> last_done_;
  double gamma_;
  int64_t n_;
};

// Exponentially weighted n-step returns, bootstrapped with next_values and
// zeroed across terminations. Shapes: [h][n].
std::vector<std::vector<double>> td_lambda_targets(
    const std::vector<std::vector<double>>& rewards,
    const std::vector<std::vector<uint8_t>>& done,
    const std::vector<std::vector<double>>& next_values, double gamma,
    double lambda);

// Mean squared error against detached targets.
Tensor value_loss(const Tensor& predicted, const Tensor& targets);

// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv).
double ppo_clipped_objective(double ratio, double advantage, double clip);

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  int64_t epoch = 0;
  int64_t env_steps_total = 0;
  double reward_mean = 0;       // per-step mean over the window
  double reward_std = 0;
  double episode_reward_mean = 0;  // running mean of completed episodes
  double actor_loss = 0;
  double critic_loss = 0;
  double cenet_loss = 0;
  double actor_lr = 0;
  int64_t scene_index = 0;
  int64_t graph_doubles = 0;    // retained window footprint
  double wall_ms = 0;           // sidecar only (non-deterministic)
  double dynamics_ms = 0;
  double render_ms = 0;
  double collision_ms = 0;
  bool lr_was_reset = false;
  double eval_reward = 0;
  int eval_success = -1;        // -1 = no eval this epoch
};

struct TrainHooks {
  // Return false to stop training after this epoch.
  std::function<bool(const EpochStats&)> on_epoch;
};

struct TrainResult {
  int64_t epochs_run = 0;
  int64_t total_env_steps = 0;
  double best_metric = 0;
  std::string best_checkpoint;
  std::string last_checkpoint;
};

// out_dir: metrics.csv, walltime.csv, best/last checkpoints and optimizer
// state. Scenes beyond the first are visited per the curriculum schedule
// (when given).
TrainResult train_grad_nav(const TrainConfig& config, Env& env, Agent& agent,
                           const std::vector<Scene>& scenes,
                           const CurriculumSchedule* curriculum,
                           const std::string& out_dir,
                           const TrainHooks& hooks = {});
TrainResult train_bptt(const TrainConfig& config, Env& env, Agent& agent,
                       const std::vector<Scene>& scenes,
                       const CurriculumSchedule* curriculum,
                       const std::string& out_dir,
                       const TrainHooks& hooks = {});
TrainResult train_ppo(const TrainConfig& config, Env& env, Agent& agent,
                      const std::vector<Scene>& scenes,
                      const CurriculumSchedule* curriculum,
                      const std::string& out_dir,
                      const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Evaluation

struct ControlDecision {
  Tensor action;  // [n,4] raw pre-squash commands
  Tensor z;       // [n,16] latent, optional (written to traces when defined)
};
using Controller =
    std::function<ControlDecision(const StepOutput& bundle, Env& env)>;

// Deterministic mean-action controller over the trained agent.
Controller policy_controller(const Agent& agent);

struct EvalResult {
  int successes = 0;
  int rollouts = 0;
  double reward_mean = 0;
  double reward_std = 0;
  std::vector<uint8_t> success_per_env;
  std::vector<double> episode_rewards;
};

// 10 randomized rollouts by default: success requires no early termination,
// every waypoint approached in order (min ||p-w||^2 <= waypoint_threshold),
// and clearance >= safe_distance from every obstacle point throughout.
struct EvalOptions {
  int64_t rollouts = 10;
  double waypoint_threshold_sq = 0.3;
  double safe_distance = 0.2;
  std::string traces_dir;  // when set, per-env trajectory CSVs are written
};
EvalResult evaluate(const EnvConfig& env_config, const Scene& scene,
                    const Controller& controller, uint64_t seed,
                    const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Benchmark and timing harnesses

struct BenchmarkPoint {
  std::string algo;
  uint64_t seed = 0;
  int64_t epoch = 0;
  int64_t samples = 0;
  double wall_ms = 0;
  double train_reward = 0;  // deterministic windowed mean
  double eval_reward = 0;   // deterministic 3-rollout eval
};

struct BenchmarkConfig {
  int64_t budget_steps = 300000;  // matched per algorithm
  std::vector<uint64_t> seeds{0, 1};
  int64_t gradnav_envs = 16;
  int64_t bptt_envs = 4;
  int64_t ppo_envs = 16;
  int render_width = 32;
  int render_height = 32;
  int64_t eval_every_epochs = 25;  // gradnav/ppo cadence; bptt evals each epoch
};

std::vector<BenchmarkPoint> run_benchmark(const BenchmarkConfig& config,
                                          const Scene& scene,
                                          const std::string& out_dir);
void write_benchmark_csv(const std::vector<BenchmarkPoint>& points,
                         const std::string& path);

struct TimingReport {
  double dynamics_pct = 0;
  double render_pct = 0;
  double collision_pct = 0;
  double step_ms = 0;  // mean wall per env batch step
  int64_t n_envs = 0;
  int64_t steps = 0;
};

TimingReport measure_timing(const Scene& scene, int64_t n_envs, int64_t steps,
                            int render_width, int render_height,
                            uint64_t seed);

}  // namespace gradnav

#endif  // GRADNAV_TRAIN_HPP_
