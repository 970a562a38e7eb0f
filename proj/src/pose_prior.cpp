#include "motctl/pose_prior.hpp"

#include <cmath>
#include <stdexcept>

namespace motctl {

namespace {
constexpr double kBoneEps = 1e-8;
constexpr double kReflectionSkip = 1e-18;  // ||v||^2 below this acts as identity
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}  // namespace

LimbDirectionPose limb_directions(const Eigen::VectorXd& pose, const Skeleton& skeleton) {
  skeleton.validate();
  int n = skeleton.joint_count();
  if (pose.size() != 3 * n)
    throw std::invalid_argument("limb_directions: pose dimension != 3N");
  LimbDirectionPose out;
  out.dirs = Eigen::VectorXd::Zero(3 * n);
  for (int j = 0; j < n; ++j) {
    int p = skeleton.parents[j];
    if (p < 0) continue;  // root block stays zero
    Eigen::Vector3d d = pose.segment<3>(3 * j) - pose.segment<3>(3 * p);
    double len = d.norm();
    if (len < kBoneEps) {
      out.dirs.segment<3>(3 * j) = Eigen::Vector3d(0, 0, 1);
      out.degenerate = true;
    } else {
      out.dirs.segment<3>(3 * j) = d / len;
    }
  }
  return out;
}

Mat limb_direction_rows(const Mat& poses, const Skeleton& skeleton,
                        std::vector<int>* degenerate_rows) {
  Mat out(poses.rows(), poses.cols());
  for (Eigen::Index r = 0; r < poses.rows(); ++r) {
    LimbDirectionPose row = limb_directions(poses.row(r).transpose(), skeleton);
    out.row(r) = row.dirs.transpose();
    if (row.degenerate && degenerate_rows)
      degenerate_rows->push_back(static_cast<int>(r));
  }
  return out;
}

ad::Val limb_directions_graph(ad::Val poses, const Skeleton& skeleton) {
  skeleton.validate();
  ad::Tape* tape = poses.tape;
  int n = skeleton.joint_count();
  const Mat& v = tape->val(poses);
  if (v.cols() != 3 * n)
    throw std::invalid_argument("limb_directions_graph: pose dimension != 3N");
  int rows = static_cast<int>(v.rows());
  std::vector<ad::Val> blocks;
  blocks.reserve(n);
  for (int j = 0; j < n; ++j) {
    int p = skeleton.parents[j];
    if (p < 0) {
      blocks.push_back(tape->zeros(rows, 3));
      continue;
    }
    std::vector<int> cj = {3 * j, 3 * j + 1, 3 * j + 2};
    std::vector<int> cp = {3 * p, 3 * p + 1, 3 * p + 2};
    ad::Val d = ad::sub(ad::select_cols(poses, cj), ad::select_cols(poses, cp));
    blocks.push_back(ad::normalize_rows3(d, kBoneEps));
  }
  return ad::concat_cols(blocks);
}

std::string PoseFlow::pname(int layer, const char* field) const {
  return "flow.l" + std::to_string(layer) + "." + field;
}

PoseFlow PoseFlow::create(const FlowConfig& config, std::uint64_t seed) {
  if (config.dim < 1 || config.layers < 1)
    throw std::invalid_argument("flow config: dim and layers must be >= 1");
  PoseFlow f;
  f.config_ = config;
  Rng rng(mix_seed(seed, 0xF10));
  int m = config.dim;
  for (int l = 0; l < config.layers; ++l) {
    Mat& hh = f.params_.create(f.pname(l, "hh"), m, m);
    // reflections start near the coordinate axes but not degenerate
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        hh(r, c) = (r == c ? 1.0 : 0.0) + 0.1 * rng.uniform(-1.0, 1.0);
    f.params_.create(f.pname(l, "r_upper"), 1, m * (m - 1) / 2);
    f.params_.create(f.pname(l, "r_logdiag"), 1, m);
    f.params_.create(f.pname(l, "bias"), 1, m);
    f.params_.create(f.pname(l, "log_slope"), 1, 1);
  }
  return f;
}

std::pair<ad::Val, ad::Val> PoseFlow::forward_graph(ad::Tape& tape, ad::Val x,
                                                    bool trainable) const {
  using namespace ad;
  auto& store = const_cast<nn::ParameterStore&>(params_);
  const Mat& xv = tape.val(x);
  if (xv.cols() != config_.dim)
    throw std::invalid_argument("flow forward: input width != dim");
  int m = config_.dim;
  int rows = static_cast<int>(xv.rows());
  Val y = x;
  Val log_det = tape.zeros(rows, 1);
  for (int l = 0; l < config_.layers; ++l) {
    Val hh = tape.use_param(store, pname(l, "hh"), trainable);
    Val r_upper = tape.use_param(store, pname(l, "r_upper"), trainable);
    Val r_logdiag = tape.use_param(store, pname(l, "r_logdiag"), trainable);
    Val bias = tape.use_param(store, pname(l, "bias"), trainable);
    Val log_slope = tape.use_param(store, pname(l, "log_slope"), trainable);

    Val R = upper_triangular(r_upper, r_logdiag, m);
    // column convention o = QR x + b, applied to row-major batches:
    // y Rᵀ first, then Qᵀ = H_{m-1}···H_0
    y = matmul(y, transpose(R));
    const Mat& hh_val = params_.value(pname(l, "hh"));
    for (int k = m - 1; k >= 0; --k) {
      if (hh_val.row(k).squaredNorm() < kReflectionSkip) continue;  // H_k = I
      Val v = slice_rows(hh, k, 1);
      Val w = matmul(y, transpose(v));               // [B x 1]
      Val outer = matmul(w, v);                      // [B x m]
      y = sub(y, scale(div_by(outer, sum_sq(v)), 2.0));
    }
    Val pre = add_rowvec(y, bias);
    y = prelu(pre, expv(log_slope));
    Val ld = add_rowvec(prelu_logdet(pre, log_slope), sum(r_logdiag));
    log_det = add(log_det, ld);
  }
  return {y, log_det};
}

ad::Val PoseFlow::nll_graph(ad::Tape& tape, ad::Val x, bool trainable) const {
  auto [o, log_det] = forward_graph(tape, x, trainable);
  ad::Val energy = ad::add_const(ad::scale(ad::row_sum_sq(o), 0.5),
                                 0.5 * config_.dim * kLog2Pi);
  return ad::sub(energy, log_det);
}

std::pair<Mat, Eigen::VectorXd> PoseFlow::forward(const Mat& x) const {
  ad::Tape tape;
  auto [o, ld] = forward_graph(tape, tape.constant(x), false);
  return {tape.val(o), tape.val(ld).col(0)};
}

Eigen::VectorXd PoseFlow::nll_rows(const Mat& x) const {
  ad::Tape tape;
  ad::Val nll = nll_graph(tape, tape.constant(x), false);
  return tape.val(nll).col(0);
}

Mat PoseFlow::reconstruct_q(int layer) const {
  int m = config_.dim;
  Mat q = Mat::Identity(m, m);
  const Mat& hh = params_.value(pname(layer, "hh"));
  for (int k = 0; k < m; ++k) {
    double n2 = hh.row(k).squaredNorm();
    if (n2 < kReflectionSkip) continue;
    Mat h = Mat::Identity(m, m) - (2.0 / n2) * hh.row(k).transpose() * hh.row(k);
    q = q * h;
  }
  return q;
}

Mat PoseFlow::reconstruct_r(int layer) const {
  int m = config_.dim;
  const Mat& upper = params_.value(pname(layer, "r_upper"));
  const Mat& logdiag = params_.value(pname(layer, "r_logdiag"));
  Mat r = Mat::Zero(m, m);
  int k = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) r(i, j) = upper(0, k++);
  for (int i = 0; i < m; ++i) r(i, i) = std::exp(logdiag(0, i));
  return r;
}

Mat PoseFlow::inverse(const Mat& o) const {
  if (o.cols() != config_.dim)
    throw std::invalid_argument("flow inverse: input width != dim");
  int m = config_.dim;
  Mat y = o;
  for (int l = config_.layers - 1; l >= 0; --l) {
    double slope = std::exp(params_.value(pname(l, "log_slope"))(0, 0));
    // invert the PReLU elementwise
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      for (Eigen::Index c = 0; c < m; ++c)
        if (y(r, c) < 0) y(r, c) /= slope;
    y.rowwise() -= params_.value(pname(l, "bias")).row(0);
    // undo Qᵀ: right-multiply by Q = H_0···H_{m-1}
    const Mat& hh = params_.value(pname(l, "hh"));
    for (int k = 0; k < m; ++k) {
      double n2 = hh.row(k).squaredNorm();
      if (n2 < kReflectionSkip) continue;
      Eigen::VectorXd v = hh.row(k).transpose();
      y -= (2.0 / n2) * (y * v) * v.transpose();
    }
    // undo Rᵀ: y = x Rᵀ  =>  x = solve(R, yᵀ)ᵀ
    Mat r = reconstruct_r(l);
    y = r.triangularView<Eigen::Upper>().solve(y.transpose()).transpose();
  }
  return y;
}

void PoseFlow::save(const std::filesystem::path& dir) const {
  nlohmann::ordered_json header;
  header["artifact"] = "pose_prior";
  header["epoch"] = epochs_trained_;
  header["flow_config"] = {{"dim", config_.dim}, {"layers", config_.layers}};
  params_.save_checkpoint(dir, header);
}

PoseFlow PoseFlow::load(const std::filesystem::path& dir) {
  nlohmann::ordered_json header;
  nn::ParameterStore store = nn::ParameterStore::load_checkpoint(dir, &header);
  if (header.value("artifact", "") != "pose_prior")
    throw std::runtime_error("checkpoint at " + dir.string() + " is not a pose prior");
  PoseFlow f;
  f.config_.dim = header.at("flow_config").at("dim").get<int>();
  f.config_.layers = header.at("flow_config").at("layers").get<int>();
  f.params_ = std::move(store);
  f.epochs_trained_ = header.value("epoch", 0);
  return f;
}

double validity_objective(const PoseFlow& flow, const std::vector<Mat>& sequences,
                          const Skeleton& skeleton) {
  if (sequences.empty())
    throw std::invalid_argument("validity_objective: no sequences given");
  Eigen::Index total_rows = 0;
  for (const Mat& s : sequences) total_rows += s.rows();
  if (total_rows == 0)
    throw std::invalid_argument("validity_objective: sequences are empty");
  Mat poses(total_rows, sequences[0].cols());
  Eigen::Index r = 0;
  for (const Mat& s : sequences) {
    poses.middleRows(r, s.rows()) = s;
    r += s.rows();
  }
  Mat dirs = limb_direction_rows(poses, skeleton);
  return flow.nll_rows(dirs).mean();
}

}  // namespace motctl
