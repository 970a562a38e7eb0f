#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "motctl/motion_data.hpp"
#include "motctl/nn.hpp"
#include "motctl/tape.hpp"

#include "json.hpp"

namespace motctl {

inline constexpr double kLogStdMin = -8.0;
inline constexpr double kLogStdMax = 4.0;

// Diagonal Gaussian over a latent batch; log_std rows are clamped to
// [kLogStdMin, kLogStdMax] wherever they are produced.
struct GaussianLatent {
  Mat mean;     // [B x d_z]
  Mat log_std;  // [B x d_z]
};

struct GaussianNodes {
  ad::Val mean;
  ad::Val log_std;
};

enum class ControlMode { partial_body_control, end_pose_control };
enum class BottomInput { part1, part2, aux };

std::string control_mode_name(ControlMode m);
ControlMode control_mode_from_name(const std::string& s);
std::string bottom_input_name(BottomInput b);
BottomInput bottom_input_from_name(const std::string& s);

struct ModelConfig {
  int H = 16;
  int T = 32;
  BodySplit split = walker_lower_split();
  ControlMode mode = ControlMode::partial_body_control;
  BottomInput bottom_input = BottomInput::part1;
  int d_z = 128;
  int hidden = 128;
  double lambda_kl_top = 0.1;
  double lambda_kl_bottom = 0.1;

  int joint_count() const {
    return static_cast<int>(split.part1.size() + split.part2.size());
  }
  int full_dim() const { return 3 * joint_count(); }
  // frame width of the bottom path (selected part, or full body in aux mode)
  int bottom_dim() const;
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// One conditional VAE: posterior encoder, learnable prior encoder, condition
// encoder and autoregressive decoder, all GRU-based. The top path decodes the
// full body from (z_t, z_b); the bottom path decodes its input from z_b only,
// so n_latents is 2 or 1.
class CvaePath {
 public:
  CvaePath() = default;
  CvaePath(std::string prefix, int frame_dim, int latent_dim, int hidden_dim,
           int n_latents);

  void init(nn::ParameterStore& store, Rng& rng) const;

  ad::Val encode_condition(ad::Tape& tape, nn::ParameterStore& store,
                           const std::vector<ad::Val>& cond, bool trainable) const;
  // GRU over condition frames followed by target frames, then the two heads
  GaussianNodes posterior(ad::Tape& tape, nn::ParameterStore& store,
                          const std::vector<ad::Val>& cond,
                          const std::vector<ad::Val>& target, bool trainable) const;
  GaussianNodes prior(ad::Tape& tape, nn::ParameterStore& store,
                      const std::vector<ad::Val>& cond, bool trainable) const;
  // latents are concatenated with the context into the initial hidden state;
  // first decoder input is the last condition frame
  std::vector<ad::Val> decode(ad::Tape& tape, nn::ParameterStore& store,
                              ad::Val context, ad::Val first_input,
                              const std::vector<ad::Val>& latents, int steps,
                              bool trainable) const;

  int frame_dim() const { return frame_dim_; }
  int latent_dim() const { return latent_dim_; }
  int hidden_dim() const { return hidden_dim_; }

 private:
  std::string prefix_;
  int frame_dim_ = 0;
  int latent_dim_ = 0;
  int hidden_dim_ = 0;
  int n_latents_ = 0;
  nn::GruCell enc_gru_, prior_gru_, cond_gru_, dec_gru_;
  nn::FcLayer enc_mean_, enc_log_std_, prior_mean_, prior_log_std_, dec_init_, dec_out_;
};

// How a latent is chosen during controlled generation.
struct LatentSource {
  bool fixed = false;
  Eigen::VectorXd z;  // used when fixed

  static LatentSource Fixed(Eigen::VectorXd value) {
    LatentSource s;
    s.fixed = true;
    s.z = std::move(value);
    return s;
  }
  static LatentSource PriorSample() { return LatentSource{}; }
};

class DualPathModel {
 public:
  DualPathModel() = default;
  static DualPathModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  const CvaePath& top() const { return top_; }
  const CvaePath& bottom() const { return bottom_; }
  int epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(int e) { epochs_trained_ = e; }

  // bottom-path views of a condition / target block
  Mat bottom_condition(const Mat& past) const;
  Mat bottom_target(const Mat& future) const;

  // plain (inference) forms, one condition at a time
  GaussianLatent prior_top(const Mat& past) const;
  GaussianLatent prior_bottom(const Mat& past) const;
  GaussianLatent posterior_top(const Mat& past, const Mat& future) const;
  GaussianLatent posterior_bottom(const Mat& past, const Mat& future) const;

  // batched decode: z rows are independent samples, output one [T x d] per row
  std::vector<Mat> decode_full(const Mat& past, const Mat& z_t, const Mat& z_b) const;
  std::vector<Mat> decode_partial(const Mat& past, const Mat& z_b) const;

  // K futures with each latent either held fixed or drawn from its learnable
  // prior; deterministic given seed (z_t draws consumed first, then z_b)
  std::vector<Mat> generate_controlled(const Mat& past, const LatentSource& z_t_source,
                                       const LatentSource& z_b_source, int K,
                                       std::uint64_t seed) const;

  void save(const std::filesystem::path& dir) const;
  static DualPathModel load(const std::filesystem::path& dir);

  // training-side helpers
  struct Batch {
    std::vector<Mat> top_cond, top_target, bottom_cond, bottom_target;  // time-major
    int size = 0;
  };
  Batch make_batch(const Dataset& dataset, const std::vector<int>& indices) const;

  struct GraphParts {
    GaussianNodes q_top, p_top, q_bottom, p_bottom;
    std::vector<ad::Val> recon_top, recon_bottom;
  };
  // full forward graph used by the training objective; eps_* are the
  // reparameterization draws, [B x d_z]
  GraphParts build_graph(ad::Tape& tape, const Batch& batch, const Mat& eps_top,
                         const Mat& eps_bottom, bool trainable);

 private:
  ModelConfig config_;
  CvaePath top_, bottom_;
  nn::ParameterStore params_;
  int epochs_trained_ = 0;

  std::vector<Mat> decode_rows(const CvaePath& path, const Mat& cond,
                               const std::vector<Mat>& latents) const;
};

// z = mean + exp(log_std) * eps, elementwise over matching rows
Eigen::VectorXd reparameterize(const GaussianLatent& g, const Eigen::VectorXd& eps);
ad::Val reparameterize_graph(const GaussianNodes& g, ad::Val eps);

std::vector<ad::Val> frames_to_vals(ad::Tape& tape, const std::vector<Mat>& frames);
std::vector<Mat> rows_to_sequences(const std::vector<Mat>& frames);

}  // namespace motctl
