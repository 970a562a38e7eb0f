#include "motctl/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "motctl/metrics.hpp"
#include "motctl/objectives.hpp"

namespace motctl {

namespace fs = std::filesystem;

std::filesystem::path model_dir(const RunConfig& cfg) {
  return fs::path(cfg.out_dir) / "model";
}
std::filesystem::path flow_dir(const RunConfig& cfg) {
  return fs::path(cfg.out_dir) / "pose_prior";
}
std::filesystem::path sampler_dir(const RunConfig& cfg) {
  return fs::path(cfg.out_dir) / "sampler";
}

namespace {

bool checkpoint_exists(const fs::path& dir) {
  return fs::exists(dir / "manifest.json");
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset ds = read_dataset(cfg.dataset.dir);
  if (ds.history != cfg.model.H || ds.horizon != cfg.model.T ||
      ds.skeleton.joint_count() != cfg.model.joint_count())
    throw std::invalid_argument("dataset at " + cfg.dataset.dir +
                                " does not match the configured model");
  return ds;
}

void check_model_compat(const RunConfig& cfg, const DualPathModel& model,
                        const std::string& where) {
  if (model.config().to_json() != cfg.model.to_json())
    throw std::invalid_argument("model checkpoint " + where +
                                " disagrees with the configured model block");
}

std::string seq_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "gen_%03d", i);
  return buf;
}

}  // namespace

void cmd_make_data(const RunConfig& cfg) {
  if (cfg.dataset.kind != "synthetic")
    throw std::invalid_argument("make-data needs dataset.kind = synthetic");
  Dataset ds = generate_synthetic_dataset(cfg.dataset.count, cfg.model.H, cfg.model.T,
                                          GaitRanges{}, cfg.seed);
  write_dataset(cfg.dataset.dir, ds, cfg.seed);
  std::cout << "wrote " << ds.pairs.size() << " pairs (" << ds.train_indices.size()
            << " train / " << ds.test_indices.size() << " test) to " << cfg.dataset.dir
            << "\n";
}

void cmd_train(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg);
  fs::path dir = model_dir(cfg);
  fs::create_directories(dir);
  DualPathModel model;
  if (checkpoint_exists(dir)) {
    model = DualPathModel::load(dir);
    check_model_compat(cfg, model, dir.string());
  } else {
    model = DualPathModel::create(cfg.model, cfg.seed);
  }
  train_model(model, ds, cfg.optimizer, cfg.seed, dir, dir / "training_log.csv");
  std::cout << "model at epoch " << model.epochs_trained() << " in " << dir.string()
            << "\n";
}

void cmd_train_pose_prior(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg);
  fs::path dir = flow_dir(cfg);
  fs::create_directories(dir);
  FlowConfig fc;
  fc.dim = 3 * ds.skeleton.joint_count();
  fc.layers = cfg.flow_layers;
  PoseFlow flow;
  if (checkpoint_exists(dir)) {
    flow = PoseFlow::load(dir);
    if (flow.config().dim != fc.dim || flow.config().layers != fc.layers)
      throw std::invalid_argument("flow checkpoint disagrees with the configuration");
  } else {
    flow = PoseFlow::create(fc, cfg.seed);
  }
  train_pose_prior(flow, ds, cfg.flow, cfg.seed, dir, dir / "training_log.csv");
  std::cout << "pose prior at epoch " << flow.epochs_trained() << " in " << dir.string()
            << "\n";
}

void cmd_train_sampler(const RunConfig& cfg, const std::filesystem::path& model_ckpt,
                       const std::filesystem::path& flow_ckpt) {
  Dataset ds = load_dataset(cfg);
  DualPathModel model = DualPathModel::load(model_ckpt);
  check_model_compat(cfg, model, model_ckpt.string());
  PoseFlow flow = PoseFlow::load(flow_ckpt);
  fs::path dir = sampler_dir(cfg);
  fs::create_directories(dir);
  SamplerConfig sc;
  sc.K = cfg.sampler_k;
  sc.frame_dim = model.config().full_dim();
  sc.d_z = model.config().d_z;
  sc.hidden = cfg.sampler_hidden;
  DiversitySampler sampler;
  if (checkpoint_exists(dir)) {
    sampler = DiversitySampler::load(dir);
    if (sampler.config().to_json() != sc.to_json())
      throw std::invalid_argument("sampler checkpoint disagrees with the configuration");
  } else {
    sampler = DiversitySampler::create(sc, cfg.seed);
  }
  train_sampler(sampler, model, flow, ds, cfg.sampler, cfg.seed, dir,
                dir / "training_log.csv");
  std::cout << "sampler at epoch " << sampler.epochs_trained() << " in " << dir.string()
            << "\n";
}

void cmd_generate(const RunConfig& cfg, const std::filesystem::path& model_ckpt,
                  const std::filesystem::path& sampler_ckpt,
                  const std::filesystem::path& past_file, const GenerateFlags& flags) {
  if (flags.fix_zb && flags.end_pose)
    throw std::invalid_argument("--fix-zb conflicts with --end-pose");
  if (flags.diverse && flags.fix_zt)
    throw std::invalid_argument("--diverse conflicts with --fix-zt");
  if (flags.diverse && (sampler_ckpt.empty() || !checkpoint_exists(sampler_ckpt)))
    throw std::invalid_argument("--diverse requires a trained sampler checkpoint");
  if (flags.K < 1) throw std::invalid_argument("generate needs K >= 1");

  DualPathModel model = DualPathModel::load(model_ckpt);
  const ModelConfig& mc = model.config();
  if (flags.end_pose && mc.mode != ControlMode::end_pose_control)
    throw std::invalid_argument("--end-pose needs an end-pose model checkpoint");

  MotionSequence past_seq = read_motion_file(past_file);
  if (past_seq.dim() != mc.full_dim())
    throw std::invalid_argument("past file " + past_file.string() +
                                " does not match the checkpoint skeleton");
  if (past_seq.length() < mc.H)
    throw std::invalid_argument("past file is shorter than H frames");
  Mat past = past_seq.frames.bottomRows(mc.H);

  std::vector<Mat> gen;
  if (flags.diverse) {
    DiversitySampler sampler = DiversitySampler::load(sampler_ckpt);
    if (sampler.config().d_z != mc.d_z || sampler.config().frame_dim != mc.full_dim())
      throw std::invalid_argument("sampler does not match the model checkpoint");
    if (flags.K != sampler.config().K)
      throw std::invalid_argument("sampler was trained for K=" +
                                  std::to_string(sampler.config().K));
    Rng rng(mix_seed(cfg.seed, 0xD1E2));
    Mat eps = gaussian_matrix(rng, 1, mc.d_z);
    Eigen::VectorXd z_b = reparameterize(model.prior_bottom(past),
                                         gaussian_matrix(rng, 1, mc.d_z).row(0).transpose());
    gen = model.decode_full(past, sampler.map_noise(past, eps.row(0)),
                            z_b.transpose().replicate(flags.K, 1));
  } else {
    Rng fix_rng(mix_seed(cfg.seed, 0xF1D0));
    LatentSource zt = LatentSource::PriorSample();
    LatentSource zb = LatentSource::PriorSample();
    if (flags.fix_zt)
      zt = LatentSource::Fixed(reparameterize(
          model.prior_top(past), gaussian_matrix(fix_rng, 1, mc.d_z).row(0).transpose()));
    if (flags.fix_zb || flags.end_pose)
      zb = LatentSource::Fixed(reparameterize(
          model.prior_bottom(past), gaussian_matrix(fix_rng, 1, mc.d_z).row(0).transpose()));
    gen = model.generate_controlled(past, zt, zb, flags.K, cfg.seed);
  }

  fs::create_directories(cfg.out_dir);
  for (std::size_t i = 0; i < gen.size(); ++i) {
    MotionSequence out;
    out.skeleton = past_seq.skeleton;
    out.frames = gen[i];
    out.fps = past_seq.fps;
    fs::path base = fs::path(cfg.out_dir) / seq_name(static_cast<int>(i));
    write_motion_file(base.string() + ".json", out);
    if (flags.plot) export_svg(out, base.string() + ".svg");
  }
  std::cout << "wrote " << gen.size() << " sequences to " << cfg.out_dir << "\n";
}

void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& model_ckpt,
                  const std::filesystem::path& sampler_ckpt,
                  const std::filesystem::path& flow_ckpt) {
  Dataset ds = load_dataset(cfg);
  DualPathModel model = DualPathModel::load(model_ckpt);
  check_model_compat(cfg, model, model_ckpt.string());

  Protocol protocol = protocol_from_name(cfg.eval.protocol);
  Control control = control_from_name(cfg.eval.control);
  int K = protocol == Protocol::random_sampling ? cfg.eval.k_random : cfg.eval.k_diversity;

  DiversitySampler sampler;
  bool have_sampler = protocol == Protocol::diversity_sampling;
  if (have_sampler) sampler = DiversitySampler::load(sampler_ckpt);

  PoseFlow flow;
  bool have_flow = !flow_ckpt.empty() && checkpoint_exists(flow_ckpt);
  if (have_flow) flow = PoseFlow::load(flow_ckpt);

  std::vector<MotionPair> test;
  test.reserve(ds.test_indices.size());
  for (int i : ds.test_indices) test.push_back(ds.pairs[i]);

  EvalReport report = run_control_protocol(model, have_sampler ? &sampler : nullptr,
                                           have_flow ? &flow : nullptr, ds.skeleton,
                                           test, protocol, control, K, cfg.seed);

  fs::create_directories(cfg.out_dir);
  std::string text = report_text(report);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "eval_report.txt");
    if (!out) throw std::runtime_error("cannot write eval report");
    out << text;
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "eval_report.json");
    if (!out) throw std::runtime_error("cannot write eval report");
    out << report_json(report).dump(1) << '\n';
  }
  std::cout << text;
}

void cmd_export(const RunConfig& cfg, const std::filesystem::path& motion_file) {
  MotionSequence seq = read_motion_file(motion_file);
  fs::create_directories(cfg.out_dir);
  fs::path out = fs::path(cfg.out_dir) / (motion_file.stem().string() + ".svg");
  export_svg(seq, out);
  std::cout << "wrote " << out.string() << "\n";
}

void export_svg(const MotionSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  const double cell_w = 120, cell_h = 180, px = 80;
  int n = seq.length();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path.string());
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << n * cell_w
      << "\" height=\"" << cell_h << "\">\n";
  for (int t = 0; t < n; ++t) {
    double ox = t * cell_w + cell_w / 2;
    double oy = cell_h - 30;
    auto px_of = [&](int j) {
      return std::pair<double, double>(ox + seq.frames(t, 3 * j) * px,
                                       oy - seq.frames(t, 3 * j + 2) * px);
    };
    for (int j = 0; j < seq.skeleton.joint_count(); ++j) {
      int p = seq.skeleton.parents[j];
      if (p < 0) continue;
      auto [x1, y1] = px_of(p);
      auto [x2, y2] = px_of(j);
      out << "<line x1=\"" << f(x1) << "\" y1=\"" << f(y1) << "\" x2=\"" << f(x2)
          << "\" y2=\"" << f(y2)
          << "\" stroke=\"#334\" stroke-width=\"2\" stroke-linecap=\"round\"/>\n";
    }
    for (int j = 0; j < seq.skeleton.joint_count(); ++j) {
      auto [x, y] = px_of(j);
      out << "<circle cx=\"" << f(x) << "\" cy=\"" << f(y)
          << "\" r=\"2.5\" fill=\"#b33\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace motctl
