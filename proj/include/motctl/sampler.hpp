#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "motctl/cvae.hpp"
#include "motctl/nn.hpp"
#include "motctl/pose_prior.hpp"
#include "motctl/tape.hpp"

namespace motctl {

// floor applied to |A| before it is used as a standard deviation
inline constexpr double kHeadStdFloor = 1e-4;

struct SamplerLossWeights {
  double lambda_kl = 1.0;
  double lambda_div = 0.7;
  double lambda_vli = 0.7;
  double clip_lo = 0.0;
  double clip_hi = 160.0;

  void validate() const;
};

// K elementwise affine maps z^k = A^k .* eps + b^k, rows indexed by head
struct HeadParams {
  Mat a;  // [K x d_z]
  Mat b;  // [K x d_z]
};

struct SamplerConfig {
  int K = 10;
  int frame_dim = 36;
  int d_z = 128;
  int hidden = 128;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& j);
};

// Condition encoder (GRU over the past) and an FC head emitting all K
// (A^k, b^k) pairs at once; the FC bias starts at A = 1, b = 0 so heads
// begin near the identity map on the noise draw.
class DiversitySampler {
 public:
  DiversitySampler() = default;
  static DiversitySampler create(const SamplerConfig& config, std::uint64_t seed);

  const SamplerConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  int epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(int e) { epochs_trained_ = e; }

  HeadParams heads(const Mat& past) const;
  // (A rows, b rows), each [K x d_z]
  std::pair<ad::Val, ad::Val> heads_graph(ad::Tape& tape,
                                          const std::vector<ad::Val>& cond,
                                          bool trainable) const;
  // z^k rows for one shared draw, [K x d_z]
  Mat map_noise(const Mat& past, const Eigen::RowVectorXd& eps) const;

  void save(const std::filesystem::path& dir) const;
  static DiversitySampler load(const std::filesystem::path& dir);

 private:
  SamplerConfig config_;
  nn::ParameterStore params_;
  int epochs_trained_ = 0;
  nn::GruCell gru_;
  nn::FcLayer head_;

  void wire();
};

// sum over heads of KL(N(b^k, diag(max(|A^k|, floor)^2)) || prior)
double sampler_kl(const HeadParams& heads, const GaussianLatent& prior);

// min over i != j of squared L2 between flattened sequences, optionally
// restricted to the given frame columns
double min_pairwise_diversity(const std::vector<Mat>& sequences,
                              const std::vector<int>* columns = nullptr);

// frame columns the diversity term is measured on: the part the bottom path
// does not encode, or everything in end-pose mode
std::optional<std::vector<int>> diversity_columns_for(const ModelConfig& config);

struct SamplerLossBreakdown {
  double kl = 0;
  double div_raw = 0;
  double div_clipped = 0;
  double vli = 0;
  double total = 0;
};

struct SamplerLossNodes {
  ad::Val kl, div_raw, div_clipped, vli, total;
};

// loss graph for one condition: decodes K futures through the frozen model
// from one shared eps, with z_b held at the given frozen draw. The validity
// term is skipped (constant zero) when its weight is zero.
SamplerLossNodes sampler_loss_graph(ad::Tape& tape, const DiversitySampler& sampler,
                                    const DualPathModel& model, const PoseFlow& flow,
                                    const Skeleton& skeleton, const Mat& past,
                                    const Eigen::RowVectorXd& eps,
                                    const Eigen::RowVectorXd& z_b,
                                    const SamplerLossWeights& weights, bool trainable);

SamplerLossBreakdown sampler_loss(const DiversitySampler& sampler,
                                  const DualPathModel& model, const PoseFlow& flow,
                                  const Skeleton& skeleton, const Mat& past,
                                  const Eigen::RowVectorXd& eps,
                                  const Eigen::RowVectorXd& z_b,
                                  const SamplerLossWeights& weights);

}  // namespace motctl
