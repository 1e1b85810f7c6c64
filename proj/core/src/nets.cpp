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

#include "gradnav/nets.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gradnav {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("nets: " + msg);
}

void check_input(const Tensor& t, int64_t want_cols, const char* name) {
  if (!t.defined() || t.rank() != 2 || t.dim(1) != want_cols)
    fail(std::string(name) + ": expected [n," + std::to_string(want_cols) +
         "], got " + (t.defined() ? shape_str(t.shape()) : "undefined"));
  if (!all_finite(t)) fail(std::string(name) + ": non-finite input");
}

Tensor xavier_init(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from(std::move(shape), std::move(v), /*requires_grad=*/true);
}

}  // namespace

double default_thrust_bias() {
  // Nominal hover command for the mid-range drone (m = 1.25 kg, 26 N).
  double hover = 1.25 * 9.81 / 26.0;
  return std::atanh(2.0 * hover - 1.0);
}

Tensor squash_action(const Tensor& u, double rate_max, double thrust_bias) {
  if (u.rank() != 2 || u.dim(1) != kActDim)
    fail("squash_action expects [n,4], got " + shape_str(u.shape()));
  Tensor rates = mul_scalar(tanh(slice(u, 1, 0, 3)), rate_max);
  Tensor thrust = mul_scalar(
      add_scalar(tanh(add_scalar(slice(u, 1, 3, 1), thrust_bias)), 1.0), 0.5);
  return concat({rates, thrust}, 1);
}

std::array<double, 4> unsquash_action(const std::array<double, 4>& control,
                                      double rate_max, double thrust_bias) {
  auto safe_atanh = [](double x) {
    return std::atanh(std::clamp(x, -0.999999, 0.999999));
  };
  std::array<double, 4> u;
  for (int i = 0; i < 3; ++i) u[i] = safe_atanh(control[i] / rate_max);
  u[3] = safe_atanh(2.0 * control[3] - 1.0) - thrust_bias;
  return u;
}

Linear Linear::xavier(int64_t in, int64_t out, Rng& rng) {
  Linear l;
  l.w = xavier_init({in, out}, in, out, rng);
  l.b = Tensor::zeros({out}, /*requires_grad=*/true);
  return l;
}

Linear Linear::zeros(int64_t in, int64_t out) {
  Linear l;
  l.w = Tensor::zeros({in, out}, /*requires_grad=*/true);
  l.b = Tensor::zeros({out}, /*requires_grad=*/true);
  return l;
}

Mlp::Mlp(int64_t input, const std::vector<int64_t>& hidden, Rng& rng) {
  if (hidden.empty()) fail("Mlp requires at least one hidden layer");
  int64_t in = input;
  for (int64_t width : hidden) {
    layers.push_back(Linear::xavier(in, width, rng));
    in = width;
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (const Linear& layer : layers) h = tanh(layer.apply(h));
  return h;
}

void Mlp::collect(const std::string& prefix,
                  std::vector<NamedParam>& out) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    out.push_back({prefix + ".l" + std::to_string(i) + ".w", layers[i].w});
    out.push_back({prefix + ".l" + std::to_string(i) + ".b", layers[i].b});
  }
}

// ---------------------------------------------------------------------------
// PolicyNet

PolicyNet::PolicyNet(const MlpSpec& spec, Rng& rng, double rate_max,
                     double thrust_bias, double init_log_std)
    : backbone_(kObsDim + kLatentDim + kEmbedDim, spec.hidden, rng),
      head_(Linear::zeros(spec.hidden.back(), kActDim)),
      log_std_(Tensor::full({kActDim}, init_log_std, /*requires_grad=*/true)),
      rate_max_(rate_max),
      thrust_bias_(thrust_bias) {}

PolicyOutput PolicyNet::forward(const Tensor& o, const Tensor& z,
                                const Tensor& e) const {
  check_input(o, kObsDim, "policy o");
  check_input(z, kLatentDim, "policy z");
  check_input(e, kEmbedDim, "policy e");
  Tensor x = concat({o, z, e}, 1);
  Tensor mean = head_.apply(backbone_.forward(x));
  return {mean, log_std_};
}

Tensor PolicyNet::squash(const Tensor& u) const {
  return squash_action(u, rate_max_, thrust_bias_);
}

void PolicyNet::collect(const std::string& prefix,
                        std::vector<NamedParam>& out) const {
  backbone_.collect(prefix + ".backbone", out);
  out.push_back({prefix + ".head.w", head_.w});
  out.push_back({prefix + ".head.b", head_.b});
  out.push_back({prefix + ".log_std", log_std_});
}

// ---------------------------------------------------------------------------
// ValueNet

ValueNet::ValueNet(const MlpSpec& spec, Rng& rng)
    : backbone_(kPrivDim + kLatentDim, spec.hidden, rng),
      head_(Linear::zeros(spec.hidden.back(), 1)) {}

Tensor ValueNet::forward(const Tensor& priv, const Tensor& z) const {
  check_input(priv, kPrivDim, "value s");
  check_input(z, kLatentDim, "value z");
  return head_.apply(backbone_.forward(concat({priv, z}, 1)));
}

void ValueNet::collect(const std::string& prefix,
                       std::vector<NamedParam>& out) const {
  backbone_.collect(prefix + ".backbone", out);
  out.push_back({prefix + ".head.w", head_.w});
  out.push_back({prefix + ".head.b", head_.b});
}

// ---------------------------------------------------------------------------
// CENet

CENet::CENet(const MlpSpec& spec, const std::vector<int64_t>& decoder_hidden,
             Rng& rng)
    : encoder_(kHistorySteps * kObsDim + kEmbedDim, spec.hidden, rng),
      mu_head_(Linear::zeros(spec.hidden.back(), kLatentDim)),
      log_sigma_head_(Linear::zeros(spec.hidden.back(), kLatentDim)),
      decoder_(kLatentDim, decoder_hidden, rng),
      decoder_head_(Linear::xavier(decoder_hidden.back(), kObsDim, rng)) {}

CENet::Encoded CENet::encode(const Tensor& o_history, const Tensor& e,
                             const Tensor& noise) const {
  check_input(o_history, kHistorySteps * kObsDim, "cenet history");
  check_input(e, kEmbedDim, "cenet e");
  Tensor h = encoder_.forward(concat({o_history, e}, 1));
  Encoded out;
  out.mu = mu_head_.apply(h);
  out.log_sigma = log_sigma_head_.apply(h);
  if (noise.defined()) {
    check_input(noise, kLatentDim, "cenet noise");
    out.z = add(out.mu, mul(exp(out.log_sigma), noise));
  } else {
    out.z = out.mu;
  }
  return out;
}

Tensor CENet::decode(const Tensor& z) const {
  check_input(z, kLatentDim, "cenet z");
  return decoder_head_.apply(decoder_.forward(z));
}

Tensor CENet::kl_divergence(const Tensor& mu, const Tensor& log_sigma) {
  // 1/2 sum_i (mu^2 + sigma^2 - 1 - log sigma^2), averaged over the batch.
  Tensor sigma_sq = exp(mul_scalar(log_sigma, 2.0));
  Tensor per_dim = sub(add(square(mu), sigma_sq),
                       add_scalar(mul_scalar(log_sigma, 2.0), 1.0));
  return mul_scalar(mean(sum_axis(per_dim, 1)), 0.5);
}

Tensor CENet::loss(const Tensor& o_history, const Tensor& e,
                   const Tensor& o_next, double beta,
                   const Tensor& noise) const {
  if (beta < 0.0) fail("cenet beta must be >= 0");
  check_input(o_next, kObsDim, "cenet o_next");
  Encoded enc = encode(o_history, e, noise);
  Tensor recon = decode(enc.z);
  Tensor mse = mean(square(sub(recon, o_next)));
  return add(mse, mul_scalar(kl_divergence(enc.mu, enc.log_sigma), beta));
}

void CENet::collect(const std::string& prefix,
                    std::vector<NamedParam>& out) const {
  encoder_.collect(prefix + ".encoder", out);
  out.push_back({prefix + ".mu.w", mu_head_.w});
  out.push_back({prefix + ".mu.b", mu_head_.b});
  out.push_back({prefix + ".log_sigma.w", log_sigma_head_.w});
  out.push_back({prefix + ".log_sigma.b", log_sigma_head_.b});
  decoder_.collect(prefix + ".decoder", out);
  out.push_back({prefix + ".recon.w", decoder_head_.w});
  out.push_back({prefix + ".recon.b", decoder_head_.b});
}

// ---------------------------------------------------------------------------
// VisualEncoder

VisualEncoder::VisualEncoder(int width, int height, Rng& rng)
    : width_(width), height_(height) {
  if (width < 16 || height < 16)
    fail("visual encoder needs at least 16x16 images");
  const int64_t channels[5] = {3, 8, 16, 32, 64};
  for (int layer = 0; layer < 4; ++layer) {
    int64_t cin = channels[layer], cout = channels[layer + 1];
    conv_w_.push_back(
        xavier_init({cout, cin, 3, 3}, cin * 9, cout * 9, rng));
    conv_b_.push_back(Tensor::zeros({cout}, /*requires_grad=*/true));
  }
  fc1_ = Linear::xavier(64, 512, rng);
  fc1_.b = Tensor::zeros({512}, true);
  fc2_ = Linear::xavier(512, kEmbedDim, rng);
  fc2_.b = Tensor::zeros({kEmbedDim}, true);
}

Tensor VisualEncoder::encode(const Tensor& images) const {
  if (!images.defined() || images.rank() != 4 || images.dim(1) != 3 ||
      images.dim(2) != height_ || images.dim(3) != width_)
    fail("visual encoder expects [n,3," + std::to_string(height_) + "," +
         std::to_string(width_) + "], got " +
         (images.defined() ? shape_str(images.shape()) : "undefined"));
  Tensor h = images;
  for (int layer = 0; layer < 4; ++layer)
    h = relu(conv2d(h, conv_w_[layer], conv_b_[layer], /*stride=*/2, /*pad=*/1));
  h = global_avg_pool(h);
  h = relu(fc1_.apply(h));
  return fc2_.apply(h);
}

void VisualEncoder::collect(const std::string& prefix,
                            std::vector<NamedParam>& out) const {
  for (size_t i = 0; i < conv_w_.size(); ++i) {
    out.push_back({prefix + ".conv" + std::to_string(i) + ".w", conv_w_[i]});
    out.push_back({prefix + ".conv" + std::to_string(i) + ".b", conv_b_[i]});
  }
  out.push_back({prefix + ".fc1.w", fc1_.w});
  out.push_back({prefix + ".fc1.b", fc1_.b});
  out.push_back({prefix + ".fc2.w", fc2_.w});
  out.push_back({prefix + ".fc2.b", fc2_.b});
}

// ---------------------------------------------------------------------------
// Agent

namespace {
AgentConfig resolve(AgentConfig cfg) {
  if (cfg.thrust_bias == 0.0) cfg.thrust_bias = default_thrust_bias();
  return cfg;
}
}  // namespace

Agent::Agent(const AgentConfig& cfg, Rng& rng)
    : config(resolve(cfg)),
      policy(config.backbone, rng, config.rate_max, config.thrust_bias,
             config.init_log_std),
      value(config.backbone, rng),
      cenet(config.backbone, config.cenet_decoder_hidden, rng),
      visual(config.image_width, config.image_height, rng) {}

std::vector<NamedParam> Agent::actor_params() const {
  std::vector<NamedParam> out;
  policy.collect("policy", out);
  return out;
}

std::vector<NamedParam> Agent::critic_params() const {
  std::vector<NamedParam> out;
  value.collect("value", out);
  return out;
}

std::vector<NamedParam> Agent::cenet_params() const {
  std::vector<NamedParam> out;
  cenet.collect("cenet", out);
  visual.collect("visual", out);
  return out;
}

std::vector<NamedParam> Agent::all_params() const {
  std::vector<NamedParam> out = actor_params();
  for (auto& p : critic_params()) out.push_back(p);
  for (auto& p : cenet_params()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_weights(const std::vector<NamedParam>& params,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open " + path + " for writing");
  out << "gradnav-weights 1\n";
  for (const NamedParam& p : params) {
    out << "param " << p.name << " " << p.tensor.rank();
    for (int64_t d : p.tensor.shape()) out << " " << d;
    out << "\n";
  }
  out << "data\n";
  for (const NamedParam& p : params) {
    auto v = p.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              v.size() * sizeof(double));
  }
  if (!out) fail("short write to " + path);
}

void load_weights(std::vector<NamedParam> params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "gradnav-weights 1")
    fail(path + ": bad header");
  size_t index = 0;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream parts(line);
    std::string tag, name;
    int rank = 0;
    parts >> tag >> name >> rank;
    if (tag != "param") fail(path + ": malformed header line '" + line + "'");
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) parts >> shape[i];
    if (index >= params.size())
      fail(path + ": extra parameter '" + name + "' not present in the model");
    if (params[index].name != name)
      fail(path + ": expected parameter '" + params[index].name + "', found '" +
           name + "'");
    if (params[index].tensor.shape() != shape)
      fail(path + ": shape mismatch for '" + name + "': file has " +
           shape_str(shape) + ", model has " +
           shape_str(params[index].tensor.shape()));
    ++index;
  }
  if (index != params.size())
    fail(path + ": missing parameter '" + params[index].name + "'");
  for (NamedParam& p : params) {
    auto v = p.tensor.values_mut();
    in.read(reinterpret_cast<char*>(v.data()), v.size() * sizeof(double));
    if (!in) fail(path + ": truncated data for parameter '" + p.name + "'");
  }
}

}  // namespace gradnav
