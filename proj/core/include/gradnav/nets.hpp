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

#ifndef GRADNAV_NETS_HPP_
#define GRADNAV_NETS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "gradnav/rng.hpp"
#include "gradnav/tensor.hpp"

namespace gradnav {

inline constexpr int64_t kObsDim = 16;      // [h q v a_t a_{t-1}]
inline constexpr int64_t kActDim = 4;       // desired body rates + thrust
inline constexpr int64_t kLatentDim = 16;   // z_t
inline constexpr int64_t kEmbedDim = 24;    // visual embedding e_t
inline constexpr int64_t kDepthPriorDim = 24;
inline constexpr int64_t kPrivDim = 43;     // [o p d]
inline constexpr int64_t kHistorySteps = 5;

// Pre-squash thrust offset that maps a zero policy head to the nominal
// hover command.
double default_thrust_bias();

// Raw policy output -> bounded control: body rates rate_max * tanh(u),
// thrust (tanh(u + bias) + 1) / 2. The raw vector is what rewards and
// observations see; the squashed one is what the rotors see.
Tensor squash_action(const Tensor& u, double rate_max, double thrust_bias);
// Inverse map for scripted controllers (inputs clamped into the open range).
std::array<double, 4> unsquash_action(const std::array<double, 4>& control,
                                      double rate_max, double thrust_bias);

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct MlpSpec {
  std::vector<int64_t> hidden{512, 256, 128};
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Tensor apply(const Tensor& x) const { return add(matmul(x, w), b); }
  static Linear xavier(int64_t in, int64_t out, Rng& rng);
  static Linear zeros(int64_t in, int64_t out);
};

// Hidden stack with tanh activations.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(int64_t input, const std::vector<int64_t>& hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;
  int64_t output_dim() const { return layers.back().w.dim(1); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct PolicyOutput {
  Tensor mean;     // [n,4] pre-squash action mean
  Tensor log_std;  // [4] state-independent
};

// pi_theta(a | o, z, e): 3-layer tanh MLP with a zero-initialized mean head
// and a learnable log-std. The executed action is squash(mean + sigma*eps).
class PolicyNet {
 public:
  PolicyNet(const MlpSpec& spec, Rng& rng, double rate_max,
            double thrust_bias, double init_log_std);

  PolicyOutput forward(const Tensor& o, const Tensor& z,
                       const Tensor& e) const;
  // Body rates -> rate_max * tanh(u), thrust -> (tanh(u + bias) + 1) / 2.
  Tensor squash(const Tensor& u) const;

  double rate_max() const { return rate_max_; }
  double thrust_bias() const { return thrust_bias_; }
  Tensor log_std() const { return log_std_; }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;

 private:
  Mlp backbone_;
  Linear head_;
  Tensor log_std_;
  double rate_max_;
  double thrust_bias_;
};

// V_phi(s, z) on the privileged observation.
class ValueNet {
 public:
  ValueNet(const MlpSpec& spec, Rng& rng);
  Tensor forward(const Tensor& priv, const Tensor& z) const;  // [n,1]
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;

 private:
  Mlp backbone_;
  Linear head_;
};

// beta-VAE context estimator: encodes the 5-step observation history plus
// the current visual embedding into a 16-dim latent and reconstructs the
// next observation.
class CENet {
 public:
  CENet(const MlpSpec& spec, const std::vector<int64_t>& decoder_hidden,
        Rng& rng);

  struct Encoded {
    Tensor mu;         // [n,16]
    Tensor log_sigma;  // [n,16]
    Tensor z;          // sampled when noise is defined, mu otherwise
  };
  // noise: [n,16] standard normal draws, or an undefined tensor for the
  // evaluation-mode z = mu.
  Encoded encode(const Tensor& o_history, const Tensor& e,
                 const Tensor& noise) const;
  Tensor decode(const Tensor& z) const;  // [n,16] reconstruction of o_{t+1}

  // MSE(o_hat, o_next) + beta * KL(q(z|.) || N(0, I)).
  Tensor loss(const Tensor& o_history, const Tensor& e, const Tensor& o_next,
              double beta, const Tensor& noise) const;
  // Mean over the batch of the closed-form diagonal-Gaussian KL.
  static Tensor kl_divergence(const Tensor& mu, const Tensor& log_sigma);

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;

 private:
  Mlp encoder_;
  Linear mu_head_;
  Linear log_sigma_head_;
  Mlp decoder_;
  Linear decoder_head_;
};

// Small trainable convolutional encoder: four stride-2 3x3 convolutions
// (8, 16, 32, 64 channels) with ReLU, global average pooling, then
// 64 -> 512 -> 24.
class VisualEncoder {
 public:
  VisualEncoder(int width, int height, Rng& rng);
  Tensor encode(const Tensor& images) const;  // [n,3,H,W] -> [n,24]
  int width() const { return width_; }
  int height() const { return height_; }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;

 private:
  int width_, height_;
  std::vector<Tensor> conv_w_;  // [Cout,Cin,3,3]
  std::vector<Tensor> conv_b_;  // [Cout]
  Linear fc1_;                  // 64 -> 512
  Linear fc2_;                  // 512 -> 24
};

struct AgentConfig {
  MlpSpec backbone{};  // shared by policy / value / CENet encoder
  std::vector<int64_t> cenet_decoder_hidden{64, 128};
  int image_width = 64;
  int image_height = 64;
  double rate_max = 3.0;     // rad/s
  double init_log_std = -1.0;
  double thrust_bias = 0.0;  // 0 -> use default_thrust_bias()
};

// The full model set with its three optimizer parameter groups.
struct Agent {
  AgentConfig config;
  PolicyNet policy;
  ValueNet value;
  CENet cenet;
  VisualEncoder visual;

  Agent(const AgentConfig& cfg, Rng& rng);

  std::vector<NamedParam> actor_params() const;
  std::vector<NamedParam> critic_params() const;
  std::vector<NamedParam> cenet_params() const;  // CENet + visual encoder
  std::vector<NamedParam> all_params() const;
};

// Flat little-endian f64 buffers behind a text header naming each parameter
// and shape; round-trips bit-exactly.
void save_weights(const std::vector<NamedParam>& params,
                  const std::string& path);
void load_weights(std::vector<NamedParam> params, const std::string& path);

}  // namespace gradnav

#endif  // GRADNAV_NETS_HPP_
