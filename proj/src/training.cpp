#include "motctl/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "motctl/objectives.hpp"

namespace motctl {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// (re)creates the log with the header and any lines for epochs <= upto, so a
// resumed run appends exactly where the checkpoint left off
void prepare_log(const std::filesystem::path& path, const std::string& header,
                 int upto) {
  std::vector<std::string> keep;
  std::ifstream in(path);
  if (in) {
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;  // header rewritten below
      }
      if (line.empty()) continue;
      int epoch = std::atoi(line.c_str());
      if (epoch <= upto) keep.push_back(line);
    }
  }
  in.close();
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write log: " + path.string());
  out << header << '\n';
  for (const std::string& l : keep) out << l << '\n';
}

void append_log(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write log: " + path.string());
  out << line << '\n';
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw NumericalAbort(std::string(what) + " became non-finite");
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& order, int batch_size) {
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

}  // namespace

void train_model(DualPathModel& model, const Dataset& dataset,
                 const ModelTrainOptions& opt, std::uint64_t seed,
                 const std::filesystem::path& ckpt_dir,
                 const std::filesystem::path& log_path) {
  if (opt.batch_size < 1 || opt.epochs < 0 || opt.lr <= 0)
    throw std::invalid_argument("bad model training options");
  if (dataset.train_indices.empty())
    throw std::invalid_argument("training needs a nonempty train split");
  const ModelConfig& mc = model.config();
  if (dataset.history != mc.H || dataset.horizon != mc.T ||
      dataset.skeleton.joint_count() != mc.joint_count())
    throw std::invalid_argument("dataset does not match the model config");

  prepare_log(log_path, "epoch,rec_top,rec_bottom,kl_top,kl_bottom,total",
              model.epochs_trained());
  model.save(ckpt_dir);

  for (int e = model.epochs_trained(); e < opt.epochs; ++e) {
    Rng rng(mix_seed(mix_seed(seed, 0x7A17), static_cast<std::uint64_t>(e)));
    std::vector<int> order = dataset.train_indices;
    shuffle_indices(order, rng);
    LossBreakdown sums;
    double n = 0;
    for (const std::vector<int>& idx : make_batches(order, opt.batch_size)) {
      DualPathModel::Batch batch = model.make_batch(dataset, idx);
      Mat eps_top = gaussian_matrix(rng, batch.size, mc.d_z);
      Mat eps_bottom = gaussian_matrix(rng, batch.size, mc.d_z);
      ad::Tape tape;
      LossNodes nodes = total_loss_graph(tape, model, batch, eps_top, eps_bottom, true);
      double total = tape.scalar(nodes.total);
      check_finite(total, "model loss");
      double b = batch.size;
      sums.rec_top += b * tape.scalar(nodes.rec_top);
      sums.rec_bottom += b * tape.scalar(nodes.rec_bottom);
      sums.kl_top += b * tape.scalar(nodes.kl_top);
      sums.kl_bottom += b * tape.scalar(nodes.kl_bottom);
      sums.total += b * total;
      n += b;
      model.params().zero_grad();
      tape.backward(nodes.total);
      model.params().adam_update(opt.lr, opt.beta1, opt.beta2);
      model.params().quantize_f32();
    }
    model.set_epochs_trained(e + 1);
    model.save(ckpt_dir);
    append_log(log_path, std::to_string(e + 1) + "," + fmt(sums.rec_top / n) + "," +
                             fmt(sums.rec_bottom / n) + "," + fmt(sums.kl_top / n) +
                             "," + fmt(sums.kl_bottom / n) + "," + fmt(sums.total / n));
  }
}

Mat pose_pool(const Dataset& dataset) {
  if (dataset.train_indices.empty())
    throw std::invalid_argument("pose pool needs a nonempty train split");
  int dim = 3 * dataset.skeleton.joint_count();
  Eigen::Index rows = 0;
  for (int i : dataset.train_indices)
    rows += dataset.pairs[i].past.rows() + dataset.pairs[i].future.rows();
  Mat pool(rows, dim);
  Eigen::Index r = 0;
  for (int i : dataset.train_indices) {
    const MotionPair& p = dataset.pairs[i];
    pool.middleRows(r, p.past.rows()) = p.past;
    r += p.past.rows();
    pool.middleRows(r, p.future.rows()) = p.future;
    r += p.future.rows();
  }
  return pool;
}

void train_pose_prior(PoseFlow& flow, const Dataset& dataset,
                      const FlowTrainOptions& opt, std::uint64_t seed,
                      const std::filesystem::path& ckpt_dir,
                      const std::filesystem::path& log_path) {
  if (opt.batch_size < 1 || opt.epochs < 0 || opt.lr <= 0 || opt.jitter_std < 0)
    throw std::invalid_argument("bad flow training options");
  if (flow.config().dim != 3 * dataset.skeleton.joint_count())
    throw std::invalid_argument("flow dimension does not match the skeleton");

  Mat dirs = limb_direction_rows(pose_pool(dataset), dataset.skeleton);
  prepare_log(log_path, "epoch,nll", flow.epochs_trained());
  flow.save(ckpt_dir);

  std::vector<int> all(dirs.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  for (int e = flow.epochs_trained(); e < opt.epochs; ++e) {
    Rng rng(mix_seed(mix_seed(seed, 0xF107), static_cast<std::uint64_t>(e)));
    std::vector<int> order = all;
    shuffle_indices(order, rng);
    double nll_sum = 0, n = 0;
    for (const std::vector<int>& idx : make_batches(order, opt.batch_size)) {
      Mat x(idx.size(), dirs.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) x.row(i) = dirs.row(idx[i]);
      if (opt.jitter_std > 0)
        x += opt.jitter_std * gaussian_matrix(rng, x.rows(), x.cols());
      ad::Tape tape;
      ad::Val nll = ad::mean_all(flow.nll_graph(tape, tape.constant(x), true));
      double v = tape.scalar(nll);
      check_finite(v, "flow nll");
      nll_sum += v * idx.size();
      n += idx.size();
      flow.params().zero_grad();
      tape.backward(nll);
      flow.params().adam_update(opt.lr);
      flow.params().quantize_f32();
    }
    flow.set_epochs_trained(e + 1);
    flow.save(ckpt_dir);
    append_log(log_path, std::to_string(e + 1) + "," + fmt(nll_sum / n));
  }
}

void train_sampler(DiversitySampler& sampler, const DualPathModel& model,
                   const PoseFlow& flow, const Dataset& dataset,
                   const SamplerTrainOptions& opt, std::uint64_t seed,
                   const std::filesystem::path& ckpt_dir,
                   const std::filesystem::path& log_path) {
  if (opt.epochs < 0 || opt.lr <= 0)
    throw std::invalid_argument("bad sampler training options");
  opt.weights.validate();
  if (dataset.train_indices.empty())
    throw std::invalid_argument("training needs a nonempty train split");
  const ModelConfig& mc = model.config();
  if (sampler.config().d_z != mc.d_z || sampler.config().frame_dim != mc.full_dim())
    throw std::invalid_argument("sampler does not match the model checkpoint");
  if (opt.weights.lambda_vli != 0 && flow.config().dim != mc.full_dim())
    throw std::invalid_argument("flow does not match the model checkpoint");

  // frozen per-condition z_b draws, one per train pair
  std::vector<Eigen::RowVectorXd> z_b(dataset.train_indices.size());
  for (std::size_t i = 0; i < dataset.train_indices.size(); ++i) {
    Rng rng(mix_seed(mix_seed(seed, 0x2BD0), static_cast<std::uint64_t>(i)));
    const Mat& past = dataset.pairs[dataset.train_indices[i]].past;
    z_b[i] = reparameterize(model.prior_bottom(past),
                            gaussian_matrix(rng, 1, mc.d_z).row(0).transpose())
                 .transpose();
  }

  prepare_log(log_path, "epoch,kl,div_raw,div_clipped,vli,total",
              sampler.epochs_trained());
  sampler.save(ckpt_dir);

  std::vector<int> positions(dataset.train_indices.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  for (int e = sampler.epochs_trained(); e < opt.epochs; ++e) {
    Rng rng(mix_seed(mix_seed(seed, 0x5A73), static_cast<std::uint64_t>(e)));
    std::vector<int> order = positions;
    shuffle_indices(order, rng);
    SamplerLossBreakdown sums;
    for (int pos : order) {
      const Mat& past = dataset.pairs[dataset.train_indices[pos]].past;
      Mat eps = gaussian_matrix(rng, 1, mc.d_z);
      ad::Tape tape;
      SamplerLossNodes nodes =
          sampler_loss_graph(tape, sampler, model, flow, dataset.skeleton, past,
                             eps.row(0), z_b[pos], opt.weights, true);
      double total = tape.scalar(nodes.total);
      check_finite(total, "sampler loss");
      sums.kl += tape.scalar(nodes.kl);
      sums.div_raw += tape.scalar(nodes.div_raw);
      sums.div_clipped += tape.scalar(nodes.div_clipped);
      sums.vli += tape.scalar(nodes.vli);
      sums.total += total;
      sampler.params().zero_grad();
      tape.backward(nodes.total);
      sampler.params().adam_update(opt.lr);
      sampler.params().quantize_f32();
    }
    double n = static_cast<double>(order.size());
    sampler.set_epochs_trained(e + 1);
    sampler.save(ckpt_dir);
    append_log(log_path, std::to_string(e + 1) + "," + fmt(sums.kl / n) + "," +
                             fmt(sums.div_raw / n) + "," + fmt(sums.div_clipped / n) +
                             "," + fmt(sums.vli / n) + "," + fmt(sums.total / n));
  }
}

}  // namespace motctl
