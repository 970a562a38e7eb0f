#include "motctl/sampler.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "motctl/objectives.hpp"

namespace motctl {

void SamplerLossWeights::validate() const {
  if (lambda_kl < 0 || lambda_div < 0 || lambda_vli < 0)
    throw std::invalid_argument("sampler weights must be nonnegative");
  if (clip_lo > clip_hi)
    throw std::invalid_argument("diversity clip interval is inverted");
}

void SamplerConfig::validate() const {
  if (K < 2) throw std::invalid_argument("sampler config: K must be >= 2");
  if (frame_dim < 1 || d_z < 1 || hidden < 1)
    throw std::invalid_argument("sampler config: dimensions must be positive");
}

nlohmann::ordered_json SamplerConfig::to_json() const {
  return {{"K", K}, {"frame_dim", frame_dim}, {"d_z", d_z}, {"hidden", hidden}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
  SamplerConfig c;
  c.K = j.at("K").get<int>();
  c.frame_dim = j.at("frame_dim").get<int>();
  c.d_z = j.at("d_z").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.validate();
  return c;
}

void DiversitySampler::wire() {
  gru_ = nn::GruCell{"sampler.gru", config_.frame_dim, config_.hidden};
  head_ = nn::FcLayer{"sampler.head", config_.hidden, 2 * config_.K * config_.d_z,
                      nn::Activation::identity};
}

DiversitySampler DiversitySampler::create(const SamplerConfig& config,
                                          std::uint64_t seed) {
  config.validate();
  DiversitySampler s;
  s.config_ = config;
  s.wire();
  Rng rng(mix_seed(seed, 0x5A3));
  s.gru_.init(s.params_, rng);
  s.head_.init(s.params_, rng);
  // identity start: A = 1, b = 0
  s.params_.value_mut("sampler.head.b").leftCols(config.K * config.d_z).setOnes();
  return s;
}

std::pair<ad::Val, ad::Val> DiversitySampler::heads_graph(
    ad::Tape& tape, const std::vector<ad::Val>& cond, bool trainable) const {
  auto& store = const_cast<nn::ParameterStore&>(params_);
  if (cond.empty() || tape.val(cond[0]).rows() != 1)
    throw std::invalid_argument("sampler heads: expected one condition row");
  ad::Val h = gru_.run(tape, store, cond, trainable);
  ad::Val out = head_.apply(tape, store, h, trainable);  // [1 x 2*K*d_z]
  int d = config_.d_z;
  std::vector<ad::Val> a_rows, b_rows;
  a_rows.reserve(config_.K);
  b_rows.reserve(config_.K);
  for (int k = 0; k < config_.K; ++k) {
    a_rows.push_back(ad::slice_cols(out, k * d, d));
    b_rows.push_back(ad::slice_cols(out, (config_.K + k) * d, d));
  }
  return {ad::concat_rows(a_rows), ad::concat_rows(b_rows)};
}

HeadParams DiversitySampler::heads(const Mat& past) const {
  if (past.cols() != config_.frame_dim)
    throw std::invalid_argument("sampler heads: frame width mismatch");
  ad::Tape tape;
  std::vector<ad::Val> cond;
  cond.reserve(past.rows());
  for (Eigen::Index t = 0; t < past.rows(); ++t)
    cond.push_back(tape.constant(past.row(t)));
  auto [a, b] = heads_graph(tape, cond, false);
  return {tape.val(a), tape.val(b)};
}

Mat DiversitySampler::map_noise(const Mat& past, const Eigen::RowVectorXd& eps) const {
  if (eps.size() != config_.d_z)
    throw std::invalid_argument("map_noise: eps dimension mismatch");
  HeadParams hp = heads(past);
  Mat z(config_.K, config_.d_z);
  for (int k = 0; k < config_.K; ++k)
    z.row(k) = hp.a.row(k).cwiseProduct(eps) + hp.b.row(k);
  return z;
}

void DiversitySampler::save(const std::filesystem::path& dir) const {
  nlohmann::ordered_json header;
  header["artifact"] = "sampler";
  header["epoch"] = epochs_trained_;
  header["sampler_config"] = config_.to_json();
  params_.save_checkpoint(dir, header);
}

DiversitySampler DiversitySampler::load(const std::filesystem::path& dir) {
  nlohmann::ordered_json header;
  nn::ParameterStore store = nn::ParameterStore::load_checkpoint(dir, &header);
  if (header.value("artifact", "") != "sampler")
    throw std::runtime_error("checkpoint at " + dir.string() + " is not a sampler");
  DiversitySampler s;
  s.config_ = SamplerConfig::from_json(header.at("sampler_config"));
  s.wire();
  s.params_ = std::move(store);
  s.epochs_trained_ = header.value("epoch", 0);
  return s;
}

double sampler_kl(const HeadParams& heads, const GaussianLatent& prior) {
  if (heads.a.rows() != heads.b.rows() || heads.a.cols() != heads.b.cols())
    throw std::invalid_argument("sampler_kl: head shape mismatch");
  if (prior.mean.rows() != 1 || prior.mean.cols() != heads.a.cols())
    throw std::invalid_argument("sampler_kl: prior dimension mismatch");
  double total = 0;
  for (Eigen::Index k = 0; k < heads.a.rows(); ++k) {
    GaussianLatent q;
    q.mean = heads.b.row(k);
    q.log_std = heads.a.row(k).array().abs().max(kHeadStdFloor).log().matrix();
    total += kl_diag_gauss(q, prior);
  }
  return total;
}

double min_pairwise_diversity(const std::vector<Mat>& sequences,
                              const std::vector<int>* columns) {
  if (sequences.size() < 2)
    throw std::invalid_argument("min_pairwise_diversity: need at least two sequences");
  std::vector<Eigen::VectorXd> flat;
  flat.reserve(sequences.size());
  for (const Mat& s : sequences) {
    Eigen::Index c = columns ? static_cast<Eigen::Index>(columns->size()) : s.cols();
    Eigen::VectorXd f(s.rows() * c);
    for (Eigen::Index t = 0; t < s.rows(); ++t) {
      if (columns) {
        for (Eigen::Index i = 0; i < c; ++i) f(t * c + i) = s(t, (*columns)[i]);
      } else {
        f.segment(t * c, c) = s.row(t);
      }
    }
    flat.push_back(std::move(f));
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < flat.size(); ++i)
    for (std::size_t j = i + 1; j < flat.size(); ++j)
      best = std::min(best, (flat[i] - flat[j]).squaredNorm());
  return best;
}

std::optional<std::vector<int>> diversity_columns_for(const ModelConfig& config) {
  if (config.mode == ControlMode::end_pose_control) return std::nullopt;
  if (config.bottom_input == BottomInput::part1) return config.split.part2_columns();
  return config.split.part1_columns();
}

SamplerLossNodes sampler_loss_graph(ad::Tape& tape, const DiversitySampler& sampler,
                                    const DualPathModel& model, const PoseFlow& flow,
                                    const Skeleton& skeleton, const Mat& past,
                                    const Eigen::RowVectorXd& eps,
                                    const Eigen::RowVectorXd& z_b,
                                    const SamplerLossWeights& weights, bool trainable) {
  using namespace ad;
  weights.validate();
  const ModelConfig& mc = model.config();
  if (sampler.config().d_z != mc.d_z || sampler.config().frame_dim != mc.full_dim())
    throw std::invalid_argument("sampler does not match the model dimensions");
  if (past.rows() != mc.H || past.cols() != mc.full_dim())
    throw std::invalid_argument("sampler loss: condition shape mismatch");
  if (eps.size() != mc.d_z || z_b.size() != mc.d_z)
    throw std::invalid_argument("sampler loss: latent dimension mismatch");
  int K = sampler.config().K;
  auto& mstore = const_cast<nn::ParameterStore&>(model.params());

  std::vector<Val> cond1, cond_k;
  cond1.reserve(past.rows());
  cond_k.reserve(past.rows());
  for (Eigen::Index t = 0; t < past.rows(); ++t) {
    cond1.push_back(tape.constant(past.row(t)));
    cond_k.push_back(tape.constant(past.row(t).replicate(K, 1)));
  }

  auto [a_rows, b_rows] = sampler.heads_graph(tape, cond1, trainable);
  Val eps_rows = tape.constant(eps.replicate(K, 1));
  Val z_t = add(cmul(a_rows, eps_rows), b_rows);

  GaussianLatent prior = model.prior_top(past);
  GaussianNodes q{b_rows, logv(abs_floor(a_rows, kHeadStdFloor))};
  GaussianNodes p{tape.constant(prior.mean.replicate(K, 1)),
                  tape.constant(prior.log_std.replicate(K, 1))};
  Val kl = scale(kl_diag_gauss_graph(q, p), K);  // sum over heads

  Val ctx = model.top().encode_condition(tape, mstore, cond_k, false);
  Val first = cond_k.back();
  Val z_b_rows = tape.constant(Mat(z_b).replicate(K, 1));
  std::vector<Val> outs =
      model.top().decode(tape, mstore, ctx, first, {z_t, z_b_rows}, mc.T, false);

  auto cols = diversity_columns_for(mc);
  std::vector<Val> selected;
  selected.reserve(outs.size());
  for (Val o : outs) selected.push_back(cols ? select_cols(o, *cols) : o);
  std::vector<Val> flat_rows(K);
  for (int i = 0; i < K; ++i) {
    std::vector<Val> pieces;
    pieces.reserve(selected.size());
    for (Val s : selected) pieces.push_back(slice_rows(s, i, 1));
    flat_rows[i] = concat_cols(pieces);
  }
  std::vector<Val> pair_dists;
  pair_dists.reserve(K * (K - 1) / 2);
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      pair_dists.push_back(sum_sq(sub(flat_rows[i], flat_rows[j])));
  Val div_raw = min_scalar(pair_dists);
  Val div_clipped = clampv(div_raw, weights.clip_lo, weights.clip_hi);

  Val vli = tape.zeros(1, 1);
  if (weights.lambda_vli != 0) {
    std::vector<Val> nll_cols;
    nll_cols.reserve(outs.size());
    for (Val o : outs)
      nll_cols.push_back(flow.nll_graph(tape, limb_directions_graph(o, skeleton), false));
    vli = mean_all(concat_cols(nll_cols));
  }

  Val total = add(sub(scale(kl, weights.lambda_kl), scale(div_clipped, weights.lambda_div)),
                  scale(vli, weights.lambda_vli));
  return {kl, div_raw, div_clipped, vli, total};
}

SamplerLossBreakdown sampler_loss(const DiversitySampler& sampler,
                                  const DualPathModel& model, const PoseFlow& flow,
                                  const Skeleton& skeleton, const Mat& past,
                                  const Eigen::RowVectorXd& eps,
                                  const Eigen::RowVectorXd& z_b,
                                  const SamplerLossWeights& weights) {
  ad::Tape tape;
  SamplerLossNodes nodes = sampler_loss_graph(tape, sampler, model, flow, skeleton, past,
                                              eps, z_b, weights, false);
  SamplerLossBreakdown out;
  out.kl = tape.scalar(nodes.kl);
  out.div_raw = tape.scalar(nodes.div_raw);
  out.div_clipped = tape.scalar(nodes.div_clipped);
  out.vli = tape.scalar(nodes.vli);
  out.total = tape.scalar(nodes.total);
  return out;
}

}  // namespace motctl
