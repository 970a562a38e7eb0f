#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "motctl/motion_data.hpp"
#include "motctl/nn.hpp"
#include "motctl/tape.hpp"

namespace motctl {

// Unit limb-direction encoding of a pose: one 3-block per joint in joint
// order; the root block is zero by convention. `degenerate` marks poses with
// a bone shorter than 1e-8 (the block falls back to (0,0,1)).
struct LimbDirectionPose {
  Eigen::VectorXd dirs;
  bool degenerate = false;
};

LimbDirectionPose limb_directions(const Eigen::VectorXd& pose, const Skeleton& skeleton);
// batched form over rows of poses; rows with any degenerate bone are flagged
Mat limb_direction_rows(const Mat& poses, const Skeleton& skeleton,
                        std::vector<int>* degenerate_rows = nullptr);
// differentiable form used during sampler training
ad::Val limb_directions_graph(ad::Val poses, const Skeleton& skeleton);

struct FlowConfig {
  int dim = 36;    // 3N limb-direction coordinates
  int layers = 3;
};

// Normalizing flow of invertible fully-connected layers o = PReLU(QRx + b):
// Q is a product of `dim` Householder reflections (exactly orthogonal for any
// parameter values), R is upper-triangular with exp-parameterized diagonal,
// the PReLU slope is a per-layer learnable exp(log_slope). Base density is a
// standard normal.
class PoseFlow {
 public:
  PoseFlow() = default;
  static PoseFlow create(const FlowConfig& config, std::uint64_t seed);

  const FlowConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  int epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(int e) { epochs_trained_ = e; }

  // rows of x are independent samples; returns (output rows, per-row log|det|)
  std::pair<ad::Val, ad::Val> forward_graph(ad::Tape& tape, ad::Val x,
                                            bool trainable) const;
  // per-row negative log-likelihood [B x 1]
  ad::Val nll_graph(ad::Tape& tape, ad::Val x, bool trainable) const;

  std::pair<Mat, Eigen::VectorXd> forward(const Mat& x) const;
  Mat inverse(const Mat& o) const;
  Eigen::VectorXd nll_rows(const Mat& x) const;

  // explicit reconstructions for property tests
  Mat reconstruct_q(int layer) const;
  Mat reconstruct_r(int layer) const;

  void save(const std::filesystem::path& dir) const;
  static PoseFlow load(const std::filesystem::path& dir);

 private:
  FlowConfig config_;
  nn::ParameterStore params_;
  int epochs_trained_ = 0;

  std::string pname(int layer, const char* field) const;
};

// mean flow NLL over the limb directions of every frame of every sequence
double validity_objective(const PoseFlow& flow, const std::vector<Mat>& sequences,
                          const Skeleton& skeleton);

}  // namespace motctl
