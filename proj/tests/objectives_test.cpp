#include <cmath>

#include "doctest.h"
#include "motctl/objectives.hpp"

using namespace motctl;
using Mat = Eigen::MatrixXd;

namespace {

GaussianLatent gauss1(double mean, double std) {
  GaussianLatent g;
  g.mean = Mat::Constant(1, 1, mean);
  g.log_std = Mat::Constant(1, 1, std::log(std));
  return g;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.H = 3;
  c.T = 4;
  c.d_z = 2;
  c.hidden = 6;
  c.lambda_kl_top = 1.0;
  c.lambda_kl_bottom = 1.0;
  return c;
}

}  // namespace

TEST_CASE("mse_recon: zero, hand example, loop oracle") {
  Mat x(2, 2), y(2, 2);
  x << 1, 2, 3, 4;
  CHECK(mse_recon(x, x) == 0.0);
  y << 1, 2, 3, 6;  // one entry off by 2
  CHECK(mse_recon(x, y) == 4.0);

  Rng rng(4);
  Mat a = gaussian_matrix(rng, 3, 5);
  Mat b = gaussian_matrix(rng, 3, 5);
  double acc = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) acc += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  CHECK(mse_recon(a, b) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("kl_diag_gauss closed-form oracles") {
  CHECK(kl_diag_gauss(gauss1(0, 1), gauss1(0, 1)) == 0.0);
  CHECK(kl_diag_gauss(gauss1(3, 2), gauss1(3, 2)) == 0.0);

  // unit variances, means one apart: KL = 1/2
  CHECK(kl_diag_gauss(gauss1(1, 1), gauss1(0, 1)) == doctest::Approx(0.5).epsilon(1e-12));

  // N(0, 2^2) || N(0, 1): log(1/2) + 4/2 - 1/2 = 1.5 - ln 2
  double expect = 1.5 - std::log(2.0);
  CHECK(kl_diag_gauss(gauss1(0, 2), gauss1(0, 1)) ==
        doctest::Approx(expect).epsilon(1e-12));

  // dimensions add up
  GaussianLatent q, p;
  q.mean = Mat::Zero(1, 2);
  q.log_std = Mat::Zero(1, 2);
  q.mean(0, 0) = 1.0;                 // dim 0: KL = 0.5
  q.log_std(0, 1) = std::log(2.0);    // dim 1: KL = 1.5 - ln 2
  p.mean = Mat::Zero(1, 2);
  p.log_std = Mat::Zero(1, 2);
  CHECK(kl_diag_gauss(q, p) == doctest::Approx(0.5 + expect).epsilon(1e-12));

  // rows are averaged
  GaussianLatent q2;
  q2.mean = Mat::Zero(2, 1);
  q2.log_std = Mat::Zero(2, 1);
  q2.mean(0, 0) = 1.0;  // row 0: 0.5, row 1: 0
  GaussianLatent p2;
  p2.mean = Mat::Zero(2, 1);
  p2.log_std = Mat::Zero(2, 1);
  CHECK(kl_diag_gauss(q2, p2) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("kl_diag_gauss agrees with a Monte Carlo estimate") {
  // KL(N(0,4) || N(0,1)) via E_q[log q - log p]
  double closed = kl_diag_gauss(gauss1(0, 2), gauss1(0, 1));
  Rng rng(314);
  const int n = 1000000;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    double z = 2.0 * rng.normal();
    double log_q = -z * z / 8.0 - std::log(2.0) - 0.5 * std::log(kTwoPi);
    double log_p = -z * z / 2.0 - 0.5 * std::log(kTwoPi);
    acc += log_q - log_p;
  }
  double mc = acc / n;
  CHECK(std::abs(closed - mc) < 0.01 * closed);
}

TEST_CASE("graph kl and recon match their plain forms") {
  Rng rng(6);
  GaussianLatent q, p;
  q.mean = gaussian_matrix(rng, 3, 4);
  q.log_std = 0.3 * gaussian_matrix(rng, 3, 4);
  p.mean = gaussian_matrix(rng, 3, 4);
  p.log_std = 0.3 * gaussian_matrix(rng, 3, 4);

  ad::Tape tape;
  GaussianNodes qn{tape.constant(q.mean), tape.constant(q.log_std)};
  GaussianNodes pn{tape.constant(p.mean), tape.constant(p.log_std)};
  CHECK(tape.scalar(kl_diag_gauss_graph(qn, pn)) ==
        doctest::Approx(kl_diag_gauss(q, p)).epsilon(1e-12));

  std::vector<Mat> target = {gaussian_matrix(rng, 2, 5), gaussian_matrix(rng, 2, 5)};
  std::vector<ad::Val> pred = {tape.constant(gaussian_matrix(rng, 2, 5)),
                               tape.constant(gaussian_matrix(rng, 2, 5))};
  double plain = 0;  // summed over time and entries, averaged over the batch
  for (int t = 0; t < 2; ++t)
    plain += (tape.val(pred[t]) - target[t]).squaredNorm();
  plain /= 2.0;
  CHECK(tape.scalar(mse_recon_graph(pred, target)) ==
        doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("total loss decomposes and reproduces the plain paths on a batch of one") {
  ModelConfig c = tiny_config();
  DualPathModel m = DualPathModel::create(c, 30);
  Dataset ds = generate_synthetic_dataset(4, 3, 4, GaitRanges{}, 8);
  auto batch = m.make_batch(ds, {1});

  Rng rng(9);
  Mat eps_top = gaussian_matrix(rng, 1, 2);
  Mat eps_bottom = gaussian_matrix(rng, 1, 2);

  ad::Tape tape;
  LossNodes nodes = total_loss_graph(tape, m, batch, eps_top, eps_bottom);
  double rec_top = tape.scalar(nodes.rec_top);
  double kl_top = tape.scalar(nodes.kl_top);
  double kl_bottom = tape.scalar(nodes.kl_bottom);
  double rec_bottom = tape.scalar(nodes.rec_bottom);
  double total = tape.scalar(nodes.total);

  CHECK(total == doctest::Approx(rec_top + rec_bottom +
                                 c.lambda_kl_top * kl_top +
                                 c.lambda_kl_bottom * kl_bottom).epsilon(1e-12));

  // plain-path replay of the same single datum
  const Mat& past = ds.pairs[1].past;
  const Mat& future = ds.pairs[1].future;
  GaussianLatent q_top = m.posterior_top(past, future);
  GaussianLatent p_top = m.prior_top(past);
  GaussianLatent q_bot = m.posterior_bottom(past, future);
  GaussianLatent p_bot = m.prior_bottom(past);
  CHECK(kl_top == doctest::Approx(kl_diag_gauss(q_top, p_top)).epsilon(1e-10));
  CHECK(kl_bottom == doctest::Approx(kl_diag_gauss(q_bot, p_bot)).epsilon(1e-10));

  Eigen::VectorXd z_t = reparameterize(q_top, eps_top.row(0).transpose());
  Eigen::VectorXd z_b = reparameterize(q_bot, eps_bottom.row(0).transpose());
  Mat x_hat = m.decode_full(past, z_t.transpose(), z_b.transpose())[0];
  CHECK(rec_top == doctest::Approx(mse_recon(future, x_hat)).epsilon(1e-10));

  Mat part1_hat = m.decode_partial(past, z_b.transpose())[0];
  Mat part1_target = split_part(future, c.split, 1);
  CHECK(rec_bottom == doctest::Approx(mse_recon(part1_target, part1_hat)).epsilon(1e-10));
}

TEST_CASE("total loss with unit weights is the negative ELBO up to the likelihood constant") {
  // Reconstruction enters as a plain squared error, which is the Gaussian
  // negative log-likelihood with variance 1/2 minus its normalizer
  // (D/2) log(2 pi sigma^2) = (D/2) log pi.
  ModelConfig c = tiny_config();
  DualPathModel m = DualPathModel::create(c, 31);
  Dataset ds = generate_synthetic_dataset(3, 3, 4, GaitRanges{}, 12);
  auto batch = m.make_batch(ds, {0});
  Rng rng(13);
  Mat eps_top = gaussian_matrix(rng, 1, 2);
  Mat eps_bottom = gaussian_matrix(rng, 1, 2);

  ad::Tape tape;
  LossNodes nodes = total_loss_graph(tape, m, batch, eps_top, eps_bottom);
  double total = tape.scalar(nodes.total);

  const Mat& past = ds.pairs[0].past;
  const Mat& future = ds.pairs[0].future;
  Eigen::VectorXd z_t =
      reparameterize(m.posterior_top(past, future), eps_top.row(0).transpose());
  Eigen::VectorXd z_b =
      reparameterize(m.posterior_bottom(past, future), eps_bottom.row(0).transpose());

  const double sigma_sq = 0.5;
  auto neg_log_lik = [&](const Mat& x, const Mat& x_hat) {
    double d = static_cast<double>(x.size());
    return (x - x_hat).squaredNorm() / (2.0 * sigma_sq) +
           0.5 * d * std::log(kTwoPi * sigma_sq);
  };
  double nll_top = neg_log_lik(future, m.decode_full(past, z_t.transpose(),
                                                     z_b.transpose())[0]);
  double nll_bottom = neg_log_lik(split_part(future, c.split, 1),
                                  m.decode_partial(past, z_b.transpose())[0]);
  double neg_elbo = nll_top + nll_bottom +
                    kl_diag_gauss(m.posterior_top(past, future), m.prior_top(past)) +
                    kl_diag_gauss(m.posterior_bottom(past, future), m.prior_bottom(past));

  double normalizer = 0.5 * (future.size() + split_part(future, c.split, 1).size()) *
                      std::log(kTwoPi * sigma_sq);
  CHECK(total == doctest::Approx(neg_elbo - normalizer).epsilon(1e-9));
}

TEST_CASE("kl weights scale their terms linearly") {
  ModelConfig c1 = tiny_config();
  ModelConfig c2 = tiny_config();
  c2.lambda_kl_top = 0.7;
  c2.lambda_kl_bottom = 0.2;
  // weights do not affect initialization draws
  DualPathModel m1 = DualPathModel::create(c1, 77);
  DualPathModel m2 = DualPathModel::create(c2, 77);
  CHECK(m1.params().value_checksum() == m2.params().value_checksum());

  Dataset ds = generate_synthetic_dataset(3, 3, 4, GaitRanges{}, 5);
  auto b1 = m1.make_batch(ds, {0, 2});
  auto b2 = m2.make_batch(ds, {0, 2});
  Rng rng(2);
  Mat eps_top = gaussian_matrix(rng, 2, 2);
  Mat eps_bottom = gaussian_matrix(rng, 2, 2);

  ad::Tape t1, t2;
  LossNodes n1 = total_loss_graph(t1, m1, b1, eps_top, eps_bottom);
  LossNodes n2 = total_loss_graph(t2, m2, b2, eps_top, eps_bottom);
  CHECK(t1.scalar(n1.kl_top) == doctest::Approx(t2.scalar(n2.kl_top)).epsilon(1e-12));
  double diff = t2.scalar(n2.total) - t1.scalar(n1.total);
  double expect = (0.7 - 1.0) * t1.scalar(n1.kl_top) +
                  (0.2 - 1.0) * t1.scalar(n1.kl_bottom);
  CHECK(diff == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("total_loss over dataset indices reports a consistent breakdown") {
  ModelConfig c = tiny_config();
  c.lambda_kl_top = 0.1;
  c.lambda_kl_bottom = 0.1;
  DualPathModel m = DualPathModel::create(c, 2);
  Dataset ds = generate_synthetic_dataset(5, 3, 4, GaitRanges{}, 3);
  Rng rng(1);
  LossBreakdown lb = total_loss(m, ds, {0, 1, 2}, rng);
  CHECK(std::isfinite(lb.total));
  CHECK(lb.rec_top > 0);
  CHECK(lb.rec_bottom > 0);
  CHECK(lb.kl_top >= 0);
  CHECK(lb.kl_bottom >= 0);
  CHECK(lb.total == doctest::Approx(lb.rec_top + lb.rec_bottom + 0.1 * lb.kl_top +
                                    0.1 * lb.kl_bottom).epsilon(1e-9));

  Rng rng2(1);
  LossBreakdown lb2 = total_loss(m, ds, {0, 1, 2}, rng2);
  CHECK(lb2.total == lb.total);  // same rng seed, same value
}

TEST_CASE("gaussian_matrix is seeded and roughly standard") {
  Rng a(100), b(100), c(101);
  Mat m1 = gaussian_matrix(a, 40, 25);
  Mat m2 = gaussian_matrix(b, 40, 25);
  Mat m3 = gaussian_matrix(c, 40, 25);
  CHECK(m1 == m2);
  CHECK(m1 != m3);
  CHECK(std::abs(m1.mean()) < 0.1);
  double var = (m1.array() - m1.mean()).square().mean();
  CHECK(var == doctest::Approx(1.0).epsilon(0.1));
}
