#include "motctl/cvae.hpp"

#include <stdexcept>

namespace motctl {

std::string control_mode_name(ControlMode m) {
  return m == ControlMode::partial_body_control ? "partial_body_control"
                                                : "end_pose_control";
}

ControlMode control_mode_from_name(const std::string& s) {
  if (s == "partial_body_control") return ControlMode::partial_body_control;
  if (s == "end_pose_control") return ControlMode::end_pose_control;
  throw std::invalid_argument("unknown control mode: " + s);
}

std::string bottom_input_name(BottomInput b) {
  switch (b) {
    case BottomInput::part1: return "part1";
    case BottomInput::part2: return "part2";
    case BottomInput::aux: return "aux";
  }
  throw std::logic_error("bad bottom input");
}

BottomInput bottom_input_from_name(const std::string& s) {
  if (s == "part1") return BottomInput::part1;
  if (s == "part2") return BottomInput::part2;
  if (s == "aux") return BottomInput::aux;
  throw std::invalid_argument("unknown bottom input: " + s);
}

int ModelConfig::bottom_dim() const {
  switch (bottom_input) {
    case BottomInput::part1: return 3 * static_cast<int>(split.part1.size());
    case BottomInput::part2: return 3 * static_cast<int>(split.part2.size());
    case BottomInput::aux: return full_dim();
  }
  throw std::logic_error("bad bottom input");
}

void ModelConfig::validate() const {
  if (H < 1 || T < 1) throw std::invalid_argument("model config: H and T must be >= 1");
  if (d_z < 1 || hidden < 1)
    throw std::invalid_argument("model config: d_z and hidden must be >= 1");
  if (lambda_kl_top < 0 || lambda_kl_bottom < 0)
    throw std::invalid_argument("model config: lambdas must be >= 0");
  split.validate(joint_count());
  // the aux construction only makes sense for end-pose control, and vice versa
  if ((mode == ControlMode::end_pose_control) != (bottom_input == BottomInput::aux))
    throw std::invalid_argument(
        "model config: end_pose_control requires bottom_input=aux and only then");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["H"] = H;
  j["T"] = T;
  j["split"] = {{"part1", split.part1}, {"part2", split.part2}};
  j["mode"] = control_mode_name(mode);
  j["bottom_input"] = bottom_input_name(bottom_input);
  j["d_z"] = d_z;
  j["hidden"] = hidden;
  j["lambdas"] = {lambda_kl_top, lambda_kl_bottom};
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.H = j.at("H").get<int>();
  c.T = j.at("T").get<int>();
  c.split.part1 = j.at("split").at("part1").get<std::vector<int>>();
  c.split.part2 = j.at("split").at("part2").get<std::vector<int>>();
  c.mode = control_mode_from_name(j.at("mode").get<std::string>());
  c.bottom_input = bottom_input_from_name(j.at("bottom_input").get<std::string>());
  c.d_z = j.at("d_z").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.lambda_kl_top = j.at("lambdas")[0].get<double>();
  c.lambda_kl_bottom = j.at("lambdas")[1].get<double>();
  c.validate();
  return c;
}

CvaePath::CvaePath(std::string prefix, int frame_dim, int latent_dim, int hidden_dim,
                   int n_latents)
    : prefix_(std::move(prefix)),
      frame_dim_(frame_dim),
      latent_dim_(latent_dim),
      hidden_dim_(hidden_dim),
      n_latents_(n_latents) {
  enc_gru_ = {prefix_ + ".enc.gru", frame_dim_, hidden_dim_};
  enc_mean_ = {prefix_ + ".enc.mean", hidden_dim_, latent_dim_, nn::Activation::identity};
  enc_log_std_ = {prefix_ + ".enc.log_std", hidden_dim_, latent_dim_,
                  nn::Activation::identity};
  prior_gru_ = {prefix_ + ".prior.gru", frame_dim_, hidden_dim_};
  prior_mean_ = {prefix_ + ".prior.mean", hidden_dim_, latent_dim_,
                 nn::Activation::identity};
  prior_log_std_ = {prefix_ + ".prior.log_std", hidden_dim_, latent_dim_,
                    nn::Activation::identity};
  cond_gru_ = {prefix_ + ".dec.cond_gru", frame_dim_, hidden_dim_};
  dec_init_ = {prefix_ + ".dec.init", hidden_dim_ + n_latents_ * latent_dim_,
               hidden_dim_, nn::Activation::tanh_act};
  dec_gru_ = {prefix_ + ".dec.gru", frame_dim_, hidden_dim_};
  dec_out_ = {prefix_ + ".dec.out", hidden_dim_, frame_dim_, nn::Activation::identity};
}

void CvaePath::init(nn::ParameterStore& store, Rng& rng) const {
  enc_gru_.init(store, rng);
  enc_mean_.init(store, rng);
  enc_log_std_.init(store, rng);
  prior_gru_.init(store, rng);
  prior_mean_.init(store, rng);
  prior_log_std_.init(store, rng);
  cond_gru_.init(store, rng);
  dec_init_.init(store, rng);
  dec_gru_.init(store, rng);
  dec_out_.init(store, rng);
}

ad::Val CvaePath::encode_condition(ad::Tape& tape, nn::ParameterStore& store,
                                   const std::vector<ad::Val>& cond,
                                   bool trainable) const {
  return cond_gru_.run(tape, store, cond, trainable);
}

GaussianNodes CvaePath::posterior(ad::Tape& tape, nn::ParameterStore& store,
                                  const std::vector<ad::Val>& cond,
                                  const std::vector<ad::Val>& target,
                                  bool trainable) const {
  std::vector<ad::Val> frames = cond;
  frames.insert(frames.end(), target.begin(), target.end());
  ad::Val h = enc_gru_.run(tape, store, frames, trainable);
  GaussianNodes g;
  g.mean = enc_mean_.apply(tape, store, h, trainable);
  g.log_std = ad::clampv(enc_log_std_.apply(tape, store, h, trainable), kLogStdMin,
                         kLogStdMax);
  return g;
}

GaussianNodes CvaePath::prior(ad::Tape& tape, nn::ParameterStore& store,
                              const std::vector<ad::Val>& cond, bool trainable) const {
  ad::Val h = prior_gru_.run(tape, store, cond, trainable);
  GaussianNodes g;
  g.mean = prior_mean_.apply(tape, store, h, trainable);
  g.log_std = ad::clampv(prior_log_std_.apply(tape, store, h, trainable), kLogStdMin,
                         kLogStdMax);
  return g;
}

std::vector<ad::Val> CvaePath::decode(ad::Tape& tape, nn::ParameterStore& store,
                                      ad::Val context, ad::Val first_input,
                                      const std::vector<ad::Val>& latents, int steps,
                                      bool trainable) const {
  if (static_cast<int>(latents.size()) != n_latents_)
    throw std::invalid_argument(prefix_ + ": decoder expects " +
                                std::to_string(n_latents_) + " latents");
  std::vector<ad::Val> init_parts;
  init_parts.push_back(context);
  for (ad::Val z : latents) init_parts.push_back(z);
  ad::Val h = dec_init_.apply(tape, store, ad::concat_cols(init_parts), trainable);
  ad::Val x = first_input;
  std::vector<ad::Val> out;
  out.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    h = dec_gru_.step(tape, store, x, h, trainable);
    ad::Val y = dec_out_.apply(tape, store, h, trainable);
    out.push_back(y);
    x = y;
  }
  return out;
}

Eigen::VectorXd reparameterize(const GaussianLatent& g, const Eigen::VectorXd& eps) {
  if (g.mean.rows() != 1 || g.log_std.rows() != 1)
    throw std::invalid_argument("reparameterize: expected a single-row latent");
  if (eps.size() != g.mean.cols())
    throw std::invalid_argument("reparameterize: eps dimension mismatch");
  return g.mean.row(0).transpose().array() +
         g.log_std.row(0).transpose().array().exp() * eps.array();
}

ad::Val reparameterize_graph(const GaussianNodes& g, ad::Val eps) {
  return ad::add(g.mean, ad::cmul(ad::expv(g.log_std), eps));
}

std::vector<ad::Val> frames_to_vals(ad::Tape& tape, const std::vector<Mat>& frames) {
  std::vector<ad::Val> out;
  out.reserve(frames.size());
  for (const Mat& f : frames) out.push_back(tape.constant(f));
  return out;
}

std::vector<Mat> rows_to_sequences(const std::vector<Mat>& frames) {
  if (frames.empty()) return {};
  int K = static_cast<int>(frames[0].rows());
  int T = static_cast<int>(frames.size());
  std::vector<Mat> seqs(K, Mat(T, frames[0].cols()));
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) seqs[k].row(t) = frames[t].row(k);
  return seqs;
}

DualPathModel DualPathModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  DualPathModel m;
  m.config_ = config;
  m.top_ = CvaePath("top", config.full_dim(), config.d_z, config.hidden, 2);
  m.bottom_ = CvaePath("bottom", config.bottom_dim(), config.d_z, config.hidden, 1);
  Rng rng(mix_seed(seed, 0x30D31));
  m.top_.init(m.params_, rng);
  m.bottom_.init(m.params_, rng);
  return m;
}

Mat DualPathModel::bottom_condition(const Mat& past) const {
  switch (config_.bottom_input) {
    case BottomInput::part1: return split_part(past, config_.split, 1);
    case BottomInput::part2: return split_part(past, config_.split, 2);
    case BottomInput::aux: return past;
  }
  throw std::logic_error("bad bottom input");
}

Mat DualPathModel::bottom_target(const Mat& future) const {
  switch (config_.bottom_input) {
    case BottomInput::part1: return split_part(future, config_.split, 1);
    case BottomInput::part2: return split_part(future, config_.split, 2);
    case BottomInput::aux: return build_aux_sequence(future);
  }
  throw std::logic_error("bad bottom input");
}

namespace {

std::vector<Mat> time_major(const Mat& block) {
  std::vector<Mat> frames;
  frames.reserve(block.rows());
  for (Eigen::Index t = 0; t < block.rows(); ++t) frames.push_back(block.row(t));
  return frames;
}

GaussianLatent eval_gaussian(ad::Tape& tape, const GaussianNodes& g) {
  return {tape.val(g.mean), tape.val(g.log_std)};
}

}  // namespace

GaussianLatent DualPathModel::prior_top(const Mat& past) const {
  if (past.rows() != config_.H || past.cols() != config_.full_dim())
    throw std::invalid_argument("prior_top: past must be [H x 3N]");
  ad::Tape tape;
  auto& store = const_cast<nn::ParameterStore&>(params_);
  auto g = top_.prior(tape, store, frames_to_vals(tape, time_major(past)), false);
  return eval_gaussian(tape, g);
}

GaussianLatent DualPathModel::prior_bottom(const Mat& past) const {
  Mat cond = bottom_condition(past);
  ad::Tape tape;
  auto& store = const_cast<nn::ParameterStore&>(params_);
  auto g = bottom_.prior(tape, store, frames_to_vals(tape, time_major(cond)), false);
  return eval_gaussian(tape, g);
}

GaussianLatent DualPathModel::posterior_top(const Mat& past, const Mat& future) const {
  ad::Tape tape;
  auto& store = const_cast<nn::ParameterStore&>(params_);
  auto g = top_.posterior(tape, store, frames_to_vals(tape, time_major(past)),
                          frames_to_vals(tape, time_major(future)), false);
  return eval_gaussian(tape, g);
}

GaussianLatent DualPathModel::posterior_bottom(const Mat& past, const Mat& future) const {
  ad::Tape tape;
  auto& store = const_cast<nn::ParameterStore&>(params_);
  auto g = bottom_.posterior(
      tape, store, frames_to_vals(tape, time_major(bottom_condition(past))),
      frames_to_vals(tape, time_major(bottom_target(future))), false);
  return eval_gaussian(tape, g);
}

std::vector<Mat> DualPathModel::decode_rows(const CvaePath& path, const Mat& cond,
                                            const std::vector<Mat>& latents) const {
  int K = static_cast<int>(latents[0].rows());
  ad::Tape tape;
  auto& store = const_cast<nn::ParameterStore&>(params_);
  // replicate the condition across the K samples
  std::vector<ad::Val> cond_frames;
  cond_frames.reserve(cond.rows());
  for (Eigen::Index t = 0; t < cond.rows(); ++t)
    cond_frames.push_back(tape.constant(cond.row(t).replicate(K, 1)));
  ad::Val ctx = path.encode_condition(tape, store, cond_frames, false);
  std::vector<ad::Val> zs;
  for (const Mat& z : latents) zs.push_back(tape.constant(z));
  auto out = path.decode(tape, store, ctx, cond_frames.back(), zs, config_.T, false);
  std::vector<Mat> frames;
  frames.reserve(out.size());
  for (ad::Val v : out) frames.push_back(tape.val(v));
  return rows_to_sequences(frames);
}

std::vector<Mat> DualPathModel::decode_full(const Mat& past, const Mat& z_t,
                                            const Mat& z_b) const {
  if (past.rows() != config_.H || past.cols() != config_.full_dim())
    throw std::invalid_argument("decode_full: past must be [H x 3N]");
  if (z_t.cols() != config_.d_z || z_b.cols() != config_.d_z ||
      z_t.rows() != z_b.rows())
    throw std::invalid_argument("decode_full: latent shape mismatch");
  return decode_rows(top_, past, {z_t, z_b});
}

std::vector<Mat> DualPathModel::decode_partial(const Mat& past, const Mat& z_b) const {
  if (z_b.cols() != config_.d_z)
    throw std::invalid_argument("decode_partial: latent shape mismatch");
  return decode_rows(bottom_, bottom_condition(past), {z_b});
}

std::vector<Mat> DualPathModel::generate_controlled(const Mat& past,
                                                    const LatentSource& z_t_source,
                                                    const LatentSource& z_b_source,
                                                    int K, std::uint64_t seed) const {
  if (K < 1) throw std::invalid_argument("generate_controlled: K must be >= 1");
  Rng rng(mix_seed(seed, 0x93E11));
  auto draw = [&](const LatentSource& src, const GaussianLatent& prior) {
    Mat z(K, config_.d_z);
    if (src.fixed) {
      if (src.z.size() != config_.d_z)
        throw std::invalid_argument("generate_controlled: fixed latent has wrong dim");
      for (int k = 0; k < K; ++k) z.row(k) = src.z.transpose();
    } else {
      for (int k = 0; k < K; ++k) {
        Eigen::VectorXd eps(config_.d_z);
        for (int i = 0; i < config_.d_z; ++i) eps(i) = rng.normal();
        z.row(k) = reparameterize(prior, eps).transpose();
      }
    }
    return z;
  };
  // Both latents fixed: the K sequences are one computation, so decode once
  // and replicate (a K-row batch could differ in the last bit between the
  // packed and tail rows of the product kernels).
  if (z_t_source.fixed && z_b_source.fixed) {
    if (z_t_source.z.size() != config_.d_z || z_b_source.z.size() != config_.d_z)
      throw std::invalid_argument("generate_controlled: fixed latent has wrong dim");
    std::vector<Mat> one =
        decode_full(past, z_t_source.z.transpose(), z_b_source.z.transpose());
    return std::vector<Mat>(static_cast<std::size_t>(K), one[0]);
  }
  // draw order is fixed: z_t first, then z_b
  Mat z_t = draw(z_t_source, z_t_source.fixed ? GaussianLatent{} : prior_top(past));
  Mat z_b = draw(z_b_source, z_b_source.fixed ? GaussianLatent{} : prior_bottom(past));
  return decode_full(past, z_t, z_b);
}

DualPathModel::Batch DualPathModel::make_batch(const Dataset& dataset,
                                               const std::vector<int>& indices) const {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  int B = static_cast<int>(indices.size());
  Batch batch;
  batch.size = B;
  int d = config_.full_dim();
  int db = config_.bottom_dim();
  auto fill = [&](std::vector<Mat>& dst, int steps, int width) {
    dst.assign(steps, Mat(B, width));
  };
  fill(batch.top_cond, config_.H, d);
  fill(batch.top_target, config_.T, d);
  fill(batch.bottom_cond, config_.H, db);
  fill(batch.bottom_target, config_.T, db);
  for (int b = 0; b < B; ++b) {
    const MotionPair& pair = dataset.pairs.at(indices[b]);
    if (pair.past.rows() != config_.H || pair.future.rows() != config_.T ||
        pair.past.cols() != d)
      throw std::invalid_argument("make_batch: dataset shapes disagree with model config");
    Mat bc = bottom_condition(pair.past);
    Mat bt = bottom_target(pair.future);
    for (int t = 0; t < config_.H; ++t) {
      batch.top_cond[t].row(b) = pair.past.row(t);
      batch.bottom_cond[t].row(b) = bc.row(t);
    }
    for (int t = 0; t < config_.T; ++t) {
      batch.top_target[t].row(b) = pair.future.row(t);
      batch.bottom_target[t].row(b) = bt.row(t);
    }
  }
  return batch;
}

DualPathModel::GraphParts DualPathModel::build_graph(ad::Tape& tape, const Batch& batch,
                                                     const Mat& eps_top,
                                                     const Mat& eps_bottom,
                                                     bool trainable) {
  GraphParts g;
  auto tc = frames_to_vals(tape, batch.top_cond);
  auto tx = frames_to_vals(tape, batch.top_target);
  auto bc = frames_to_vals(tape, batch.bottom_cond);
  auto bx = frames_to_vals(tape, batch.bottom_target);

  g.q_top = top_.posterior(tape, params_, tc, tx, trainable);
  g.p_top = top_.prior(tape, params_, tc, trainable);
  g.q_bottom = bottom_.posterior(tape, params_, bc, bx, trainable);
  g.p_bottom = bottom_.prior(tape, params_, bc, trainable);

  ad::Val z_t = reparameterize_graph(g.q_top, tape.constant(eps_top));
  ad::Val z_b = reparameterize_graph(g.q_bottom, tape.constant(eps_bottom));

  ad::Val top_ctx = top_.encode_condition(tape, params_, tc, trainable);
  g.recon_top =
      top_.decode(tape, params_, top_ctx, tc.back(), {z_t, z_b}, config_.T, trainable);
  ad::Val bottom_ctx = bottom_.encode_condition(tape, params_, bc, trainable);
  g.recon_bottom =
      bottom_.decode(tape, params_, bottom_ctx, bc.back(), {z_b}, config_.T, trainable);
  return g;
}

void DualPathModel::save(const std::filesystem::path& dir) const {
  nlohmann::ordered_json header;
  header["artifact"] = "model";
  header["epoch"] = epochs_trained_;
  header["model_config"] = config_.to_json();
  params_.save_checkpoint(dir, header);
}

DualPathModel DualPathModel::load(const std::filesystem::path& dir) {
  nlohmann::ordered_json header;
  nn::ParameterStore store = nn::ParameterStore::load_checkpoint(dir, &header);
  if (header.value("artifact", "") != "model")
    throw std::runtime_error("checkpoint at " + dir.string() + " is not a model");
  DualPathModel m;
  m.config_ = ModelConfig::from_json(header.at("model_config"));
  m.top_ = CvaePath("top", m.config_.full_dim(), m.config_.d_z, m.config_.hidden, 2);
  m.bottom_ =
      CvaePath("bottom", m.config_.bottom_dim(), m.config_.d_z, m.config_.hidden, 1);
  m.params_ = std::move(store);
  m.epochs_trained_ = header.value("epoch", 0);
  return m;
}

}  // namespace motctl
