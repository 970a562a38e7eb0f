#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "motctl/objectives.hpp"
#include "motctl/pose_prior.hpp"
#include "test_util.hpp"

using namespace motctl;
using Mat = Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "motctl_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void zero_all(PoseFlow& flow) {
  std::vector<std::string> names;
  for (const auto& [name, e] : flow.params().entries()) names.push_back(name);
  for (const auto& n : names) flow.params().value_mut(n).setZero();
}

void randomize_all(PoseFlow& flow, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& [name, e] : flow.params().entries()) {
    Mat& v = flow.params().value_mut(name);
    double s = name.find("log_slope") != std::string::npos ? 0.3 : 0.5;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = s * rng.normal();
  }
}

Mat walker_poses(int n, std::uint64_t seed) {
  SyntheticGaitConfig cfg;
  cfg.seed = seed;
  cfg.noise_std = 0.01;
  return synthesize_walk(walker_skeleton(), 2, n, cfg).frames.bottomRows(n);
}

}  // namespace

TEST_CASE("limb directions: unit blocks, zero root, degenerate fallback") {
  Skeleton sk = walker_skeleton();
  Mat poses = walker_poses(3, 17);
  LimbDirectionPose ld = limb_directions(poses.row(0).transpose(), sk);
  REQUIRE(ld.dirs.size() == 36);
  CHECK_FALSE(ld.degenerate);
  CHECK(ld.dirs.segment(0, 3).norm() == 0.0);  // root block
  for (int j = 1; j < 12; ++j)
    CHECK(ld.dirs.segment(3 * j, 3).norm() == doctest::Approx(1.0).epsilon(1e-12));

  // direction of a known bone: spine relative to the root
  Eigen::Vector3d spine_dir = ld.dirs.segment(3, 3);
  Eigen::Vector3d expect = (poses.row(0).segment(3, 3) - poses.row(0).segment(0, 3))
                               .transpose()
                               .normalized();
  CHECK((spine_dir - expect).norm() < 1e-12);

  // collapse one bone onto its parent: fallback block + flag
  Eigen::VectorXd bad = poses.row(1).transpose();
  bad.segment(3 * 4, 3) = bad.segment(3 * 3, 3);  // l_wrist onto l_elbow
  LimbDirectionPose degen = limb_directions(bad, sk);
  CHECK(degen.degenerate);
  CHECK(degen.dirs(3 * 4 + 0) == 0.0);
  CHECK(degen.dirs(3 * 4 + 1) == 0.0);
  CHECK(degen.dirs(3 * 4 + 2) == 1.0);

  // batched form matches the per-pose form and flags the bad row
  Mat batch(2, 36);
  batch.row(0) = poses.row(0);
  batch.row(1) = bad.transpose();
  std::vector<int> degenerate_rows;
  Mat rows = limb_direction_rows(batch, sk, &degenerate_rows);
  CHECK(rows.row(0).transpose() == ld.dirs);
  CHECK(rows.row(1).transpose() == degen.dirs);
  REQUIRE(degenerate_rows.size() == 1);
  CHECK(degenerate_rows[0] == 1);

  // graph form agrees with the plain form
  ad::Tape tape;
  Mat graph_rows = tape.val(limb_directions_graph(tape.constant(poses), sk));
  Mat plain_rows = limb_direction_rows(poses, sk);
  CHECK(graph_rows.isApprox(plain_rows, 1e-14));
}

TEST_CASE("all-zero parameters give the identity flow with exact base NLL") {
  for (int dim : {1, 2, 5}) {
    FlowConfig fc;
    fc.dim = dim;
    fc.layers = 3;
    PoseFlow flow = PoseFlow::create(fc, 5);
    zero_all(flow);

    Rng rng(7);
    Mat x = gaussian_matrix(rng, 4, dim);
    auto [o, logdet] = flow.forward(x);
    CHECK(o == x);
    CHECK(logdet == Eigen::VectorXd::Zero(4));

    // NLL at the origin is the Gaussian normalizer (d/2) log(2 pi)
    Eigen::VectorXd nll0 = flow.nll_rows(Mat::Zero(1, dim));
    CHECK(nll0(0) == doctest::Approx(0.5 * dim * std::log(kTwoPi)).epsilon(1e-12));

    // and a general point adds ||x||^2 / 2
    Eigen::VectorXd nll = flow.nll_rows(x);
    for (int i = 0; i < 4; ++i)
      CHECK(nll(i) == doctest::Approx(0.5 * dim * std::log(kTwoPi) +
                                      0.5 * x.row(i).squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("diagonal layer: known log-determinant") {
  FlowConfig fc;
  fc.dim = 2;
  fc.layers = 1;
  PoseFlow flow = PoseFlow::create(fc, 1);
  zero_all(flow);
  flow.params().value_mut("flow.l0.r_logdiag").setConstant(std::log(2.0));
  flow.params().value_mut("flow.l0.bias").setConstant(1.0);  // keeps preacts positive

  Mat x(1, 2);
  x << 0.25, 0.125;  // small and positive
  auto [o, logdet] = flow.forward(x);
  CHECK(o(0, 0) == doctest::Approx(1.5).epsilon(1e-14));   // 2 x + 1
  CHECK(o(0, 1) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(logdet(0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("negative branch: PReLU scaling, its log-det and exact inverse") {
  FlowConfig fc;
  fc.dim = 1;
  fc.layers = 1;
  PoseFlow flow = PoseFlow::create(fc, 2);
  zero_all(flow);
  flow.params().value_mut("flow.l0.log_slope").setConstant(std::log(0.5));

  Mat x(2, 1);
  x << -4.0, 4.0;
  auto [o, logdet] = flow.forward(x);
  CHECK(o(0, 0) == -2.0);  // slope 1/2 on the negative side
  CHECK(o(1, 0) == 4.0);
  CHECK(logdet(0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(logdet(1) == 0.0);

  Mat back = flow.inverse(o);
  CHECK(back(0, 0) == doctest::Approx(-4.0).epsilon(1e-14));
  CHECK(back(1, 0) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("random flows invert exactly and match the numerical Jacobian") {
  int case_id = 0;
  for (int dim = 2; dim <= 9; ++dim) {
    for (int rep = 0; rep < 3; ++rep) {
      FlowConfig fc;
      fc.dim = dim;
      fc.layers = 3;
      PoseFlow flow = PoseFlow::create(fc, 100 + case_id);
      randomize_all(flow, 900 + case_id);
      Rng rng(40 + case_id);
      Mat x = gaussian_matrix(rng, 5, dim);

      auto [o, logdet] = flow.forward(x);
      Mat back = flow.inverse(o);
      CHECK((back - x).cwiseAbs().maxCoeff() < 1e-9);

      // row 0: numerical Jacobian determinant vs the analytic log-det
      const double h = 1e-6;
      Mat jac(dim, dim);
      for (int j = 0; j < dim; ++j) {
        Mat xp = x.row(0), xm = x.row(0);
        xp(0, j) += h;
        xm(0, j) -= h;
        jac.col(j) = (flow.forward(xp).first - flow.forward(xm).first).transpose() /
                     (2.0 * h);
      }
      double num_logdet = std::log(std::abs(jac.determinant()));
      CHECK(std::abs(num_logdet - logdet(0)) < 1e-4);
      ++case_id;
    }
  }
}

TEST_CASE("householder products are orthogonal, including skipped tiny rows") {
  FlowConfig fc;
  fc.dim = 6;
  fc.layers = 2;
  PoseFlow flow = PoseFlow::create(fc, 8);
  randomize_all(flow, 9);
  flow.params().value_mut("flow.l1.hh").row(2).setConstant(1e-12);  // skip branch

  for (int layer = 0; layer < 2; ++layer) {
    Mat q = flow.reconstruct_q(layer);
    CHECK((q.transpose() * q - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
    Mat r = flow.reconstruct_r(layer);
    for (int i = 0; i < 6; ++i) {
      CHECK(r(i, i) > 0.0);  // exp-parameterized diagonal
      for (int j = 0; j < i; ++j) CHECK(r(i, j) == 0.0);
    }
  }

  // QR reconstruction actually matches the linear part: with bias large the
  // positive branch is affine, so o = Q R x + b exactly
  FlowConfig fc1;
  fc1.dim = 6;
  fc1.layers = 1;
  PoseFlow lin = PoseFlow::create(fc1, 11);
  randomize_all(lin, 12);
  lin.params().value_mut("flow.l0.bias").setConstant(50.0);
  Rng rng(13);
  Mat x = gaussian_matrix(rng, 3, 6);
  auto [o, logdet] = lin.forward(x);
  Mat expect = (lin.reconstruct_q(0) * lin.reconstruct_r(0) * x.transpose()).transpose();
  expect.array() += 50.0;
  CHECK(o.isApprox(expect, 1e-10));
}

TEST_CASE("nll graph form matches the plain form and passes finite differences") {
  FlowConfig fc;
  fc.dim = 3;
  fc.layers = 2;
  PoseFlow flow = PoseFlow::create(fc, 55);
  randomize_all(flow, 56);
  Rng rng(57);
  Mat x = gaussian_matrix(rng, 4, 3);

  ad::Tape tape;
  Mat g = tape.val(flow.nll_graph(tape, tape.constant(x), false));
  Eigen::VectorXd p = flow.nll_rows(x);
  REQUIRE(g.rows() == 4);
  for (int i = 0; i < 4; ++i) CHECK(g(i, 0) == doctest::Approx(p(i)).epsilon(1e-12));

  auto res = testutil::check_gradients(flow.params(), [&](ad::Tape& t) {
    return ad::mean_all(flow.nll_graph(t, t.constant(x), true));
  });
  CAPTURE(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("flow checkpoints round trip; validity objective averages frame NLLs") {
  FlowConfig fc;
  fc.dim = 36;
  fc.layers = 2;
  PoseFlow flow = PoseFlow::create(fc, 77);
  randomize_all(flow, 78);
  flow.params().quantize_f32();
  flow.set_epochs_trained(4);

  fs::path dir = temp_dir("flow_ckpt");
  flow.save(dir);
  PoseFlow back = PoseFlow::load(dir);
  CHECK(back.params().value_checksum() == flow.params().value_checksum());
  CHECK(back.epochs_trained() == 4);
  CHECK(back.config().dim == 36);
  CHECK(back.config().layers == 2);

  Skeleton sk = walker_skeleton();
  std::vector<Mat> seqs = {walker_poses(4, 1), walker_poses(3, 2)};
  double v = validity_objective(flow, seqs, sk);
  CHECK(std::isfinite(v));
  // oracle: mean over all 7 frames of the per-frame NLL
  double acc = 0;
  int n = 0;
  for (const auto& s : seqs) {
    Eigen::VectorXd nll = flow.nll_rows(limb_direction_rows(s, sk));
    acc += nll.sum();
    n += static_cast<int>(nll.size());
  }
  CHECK(v == doctest::Approx(acc / n).epsilon(1e-12));

  CHECK_THROWS(validity_objective(flow, {}, sk));
}

TEST_CASE("artifact kinds are enforced on load") {
  FlowConfig fc;
  fc.dim = 4;
  fc.layers = 1;
  PoseFlow flow = PoseFlow::create(fc, 3);
  fs::path dir = temp_dir("flow_kind");
  flow.save(dir);
  CHECK_THROWS(DualPathModel::load(dir));
}
