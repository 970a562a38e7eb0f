#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "motctl/cvae.hpp"
#include "motctl/motion_data.hpp"
#include "motctl/pose_prior.hpp"
#include "motctl/sampler.hpp"

namespace motctl {

// raised when a loss turns non-finite; the checkpoint on disk is the last
// finite epoch (commands map this to exit code 3)
struct NumericalAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelTrainOptions {
  double lr = 1e-4;
  int batch_size = 64;
  int epochs = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct FlowTrainOptions {
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 300;
  // stddev of the Gaussian jitter added to limb directions during training;
  // keeps the target density full-rank (raw directions live on a manifold)
  double jitter_std = 0.02;
};

struct SamplerTrainOptions {
  double lr = 1e-4;
  int epochs = 100;
  SamplerLossWeights weights;
};

// All trainers write a checkpoint after every epoch (and once up front, so a
// last-good checkpoint always exists), append one CSV line per epoch, and
// resume from the artifact's epochs_trained — re-running with the same seed
// reproduces the uninterrupted run exactly.
void train_model(DualPathModel& model, const Dataset& dataset,
                 const ModelTrainOptions& opt, std::uint64_t seed,
                 const std::filesystem::path& ckpt_dir,
                 const std::filesystem::path& log_path);

void train_pose_prior(PoseFlow& flow, const Dataset& dataset,
                      const FlowTrainOptions& opt, std::uint64_t seed,
                      const std::filesystem::path& ckpt_dir,
                      const std::filesystem::path& log_path);

void train_sampler(DiversitySampler& sampler, const DualPathModel& model,
                   const PoseFlow& flow, const Dataset& dataset,
                   const SamplerTrainOptions& opt, std::uint64_t seed,
                   const std::filesystem::path& ckpt_dir,
                   const std::filesystem::path& log_path);

// training frames of every train pair (past and future), one pose per row
Mat pose_pool(const Dataset& dataset);

}  // namespace motctl
