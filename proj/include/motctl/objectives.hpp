#pragma once

#include <vector>

#include "motctl/cvae.hpp"
#include "motctl/tape.hpp"

namespace motctl {

struct LossBreakdown {
  double rec_top = 0;
  double rec_bottom = 0;
  double kl_top = 0;
  double kl_bottom = 0;
  double total = 0;
};

struct LossNodes {
  ad::Val rec_top, rec_bottom, kl_top, kl_bottom, total;
};

// squared L2 norm of (x - x_hat) summed over all entries
double mse_recon(const Mat& x, const Mat& x_hat);

// KL(q || p) for diagonal Gaussians, closed form
//   sum_i [ log(sp_i/sq_i) + (sq_i^2 + (mq_i - mp_i)^2) / (2 sp_i^2) - 1/2 ]
// computed per row and averaged over the batch rows.
double kl_diag_gauss(const GaussianLatent& q, const GaussianLatent& p);

// graph forms (same conventions: recon summed over time and entries, both
// recon and KL averaged over the batch)
ad::Val mse_recon_graph(const std::vector<ad::Val>& pred, const std::vector<Mat>& target);
ad::Val kl_diag_gauss_graph(const GaussianNodes& q, const GaussianNodes& p);

// Eq-15-style combined objective (Eq-16 shape in end-pose mode, where the
// bottom targets are aux sequences — the distinction lives in Batch assembly)
LossNodes total_loss_graph(ad::Tape& tape, DualPathModel& model,
                           const DualPathModel::Batch& batch, const Mat& eps_top,
                           const Mat& eps_bottom, bool trainable = true);

// value-only evaluation over a set of dataset indices (one reparameterization
// draw per datum, consumed from rng in index order: top then bottom per batch)
LossBreakdown total_loss(DualPathModel& model, const Dataset& dataset,
                         const std::vector<int>& indices, Rng& rng);

Mat gaussian_matrix(Rng& rng, int rows, int cols);

}  // namespace motctl
