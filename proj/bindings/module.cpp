#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "motctl/commands.hpp"
#include "motctl/metrics.hpp"
#include "motctl/objectives.hpp"
#include "motctl/training.hpp"

namespace py = pybind11;
using namespace motctl;

namespace {

DualPathModel model_from_json(const std::string& config_json, std::uint64_t seed) {
  return DualPathModel::create(ModelConfig::from_json(nlohmann::json::parse(config_json)),
                               seed);
}

std::vector<Mat> model_generate(const DualPathModel& model, const Mat& past, int K,
                                std::uint64_t seed, bool fix_zb, bool fix_zt) {
  const ModelConfig& mc = model.config();
  Rng fix_rng(mix_seed(seed, 0xF1D0));
  LatentSource zt = LatentSource::PriorSample();
  LatentSource zb = LatentSource::PriorSample();
  if (fix_zt)
    zt = LatentSource::Fixed(reparameterize(
        model.prior_top(past), gaussian_matrix(fix_rng, 1, mc.d_z).row(0).transpose()));
  if (fix_zb)
    zb = LatentSource::Fixed(reparameterize(
        model.prior_bottom(past), gaussian_matrix(fix_rng, 1, mc.d_z).row(0).transpose()));
  return model.generate_controlled(past, zt, zb, K, seed);
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["protocol"] = protocol_name(r.protocol);
  d["control"] = control_name(r.control);
  d["K"] = r.K;
  d["apd_full"] = r.apd_full;
  d["apd_part1"] = r.apd_part1;
  d["apd_part2"] = r.apd_part2;
  d["mpd"] = r.mpd;
  d["nll"] = r.nll;
  return d;
}

}  // namespace

PYBIND11_MODULE(_motctl, m) {
  m.doc() = "dual-path controllable motion prediction core";

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("size",
                             [](const Dataset& d) { return d.pairs.size(); })
      .def_property_readonly("history", [](const Dataset& d) { return d.history; })
      .def_property_readonly("horizon", [](const Dataset& d) { return d.horizon; })
      .def_property_readonly("train_indices",
                             [](const Dataset& d) { return d.train_indices; })
      .def_property_readonly("test_indices",
                             [](const Dataset& d) { return d.test_indices; })
      .def("past", [](const Dataset& d, int i) { return d.pairs.at(i).past; })
      .def("future", [](const Dataset& d, int i) { return d.pairs.at(i).future; })
      .def("save", [](const Dataset& d, const std::filesystem::path& dir,
                      std::uint64_t seed) { write_dataset(dir, d, seed); })
      .def_static("load", &read_dataset);

  m.def(
      "make_synthetic_dataset",
      [](int count, int history, int horizon, std::uint64_t seed) {
        return generate_synthetic_dataset(count, history, horizon, GaitRanges{}, seed);
      },
      py::arg("count"), py::arg("history"), py::arg("horizon"), py::arg("seed"));

  py::class_<DualPathModel>(m, "Model")
      .def_static("create", &model_from_json, py::arg("config_json"), py::arg("seed"))
      .def_static("load", &DualPathModel::load)
      .def("save", &DualPathModel::save)
      .def_property_readonly("epochs_trained", &DualPathModel::epochs_trained)
      .def_property_readonly("config_json",
                             [](const DualPathModel& m_) {
                               return m_.config().to_json().dump();
                             })
      .def_property_readonly("checksum",
                             [](const DualPathModel& m_) {
                               return m_.params().value_checksum();
                             })
      .def("generate", &model_generate, py::arg("past"), py::arg("k"), py::arg("seed"),
           py::arg("fix_zb") = false, py::arg("fix_zt") = false)
      .def(
          "train",
          [](DualPathModel& m_, const Dataset& ds, double lr, int batch_size,
             int epochs, std::uint64_t seed, const std::filesystem::path& ckpt_dir,
             const std::filesystem::path& log_path) {
            ModelTrainOptions opt;
            opt.lr = lr;
            opt.batch_size = batch_size;
            opt.epochs = epochs;
            train_model(m_, ds, opt, seed, ckpt_dir, log_path);
          },
          py::arg("dataset"), py::arg("lr"), py::arg("batch_size"), py::arg("epochs"),
          py::arg("seed"), py::arg("ckpt_dir"), py::arg("log_path"));

  py::class_<PoseFlow>(m, "PoseFlow")
      .def_static(
          "create",
          [](int dim, int layers, std::uint64_t seed) {
            FlowConfig c;
            c.dim = dim;
            c.layers = layers;
            return PoseFlow::create(c, seed);
          },
          py::arg("dim"), py::arg("layers"), py::arg("seed"))
      .def_static("load", &PoseFlow::load)
      .def("save", &PoseFlow::save)
      .def_property_readonly("epochs_trained", &PoseFlow::epochs_trained)
      .def("nll_rows", &PoseFlow::nll_rows)
      .def("forward", [](const PoseFlow& f, const Mat& x) { return f.forward(x); })
      .def("inverse", &PoseFlow::inverse)
      .def(
          "train",
          [](PoseFlow& f, const Dataset& ds, double lr, int batch_size, int epochs,
             double jitter_std, std::uint64_t seed,
             const std::filesystem::path& ckpt_dir,
             const std::filesystem::path& log_path) {
            FlowTrainOptions opt;
            opt.lr = lr;
            opt.batch_size = batch_size;
            opt.epochs = epochs;
            opt.jitter_std = jitter_std;
            train_pose_prior(f, ds, opt, seed, ckpt_dir, log_path);
          },
          py::arg("dataset"), py::arg("lr"), py::arg("batch_size"), py::arg("epochs"),
          py::arg("jitter_std"), py::arg("seed"), py::arg("ckpt_dir"),
          py::arg("log_path"));

  py::class_<DiversitySampler>(m, "Sampler")
      .def_static(
          "create",
          [](int k, int frame_dim, int d_z, int hidden, std::uint64_t seed) {
            SamplerConfig c;
            c.K = k;
            c.frame_dim = frame_dim;
            c.d_z = d_z;
            c.hidden = hidden;
            return DiversitySampler::create(c, seed);
          },
          py::arg("k"), py::arg("frame_dim"), py::arg("d_z"), py::arg("hidden"),
          py::arg("seed"))
      .def_static("load", &DiversitySampler::load)
      .def("save", &DiversitySampler::save)
      .def_property_readonly("epochs_trained", &DiversitySampler::epochs_trained)
      .def("map_noise",
           [](const DiversitySampler& s, const Mat& past, const Mat& eps) {
             if (eps.rows() != 1)
               throw std::invalid_argument("eps must be a single row");
             return s.map_noise(past, eps.row(0));
           })
      .def(
          "train",
          [](DiversitySampler& s, const DualPathModel& model, const PoseFlow& flow,
             const Dataset& ds, double lr, int epochs, double lambda_kl,
             double lambda_div, double lambda_vli, std::uint64_t seed,
             const std::filesystem::path& ckpt_dir,
             const std::filesystem::path& log_path) {
            SamplerTrainOptions opt;
            opt.lr = lr;
            opt.epochs = epochs;
            opt.weights.lambda_kl = lambda_kl;
            opt.weights.lambda_div = lambda_div;
            opt.weights.lambda_vli = lambda_vli;
            train_sampler(s, model, flow, ds, opt, seed, ckpt_dir, log_path);
          },
          py::arg("model"), py::arg("flow"), py::arg("dataset"), py::arg("lr"),
          py::arg("epochs"), py::arg("lambda_kl"), py::arg("lambda_div"),
          py::arg("lambda_vli"), py::arg("seed"), py::arg("ckpt_dir"),
          py::arg("log_path"));

  m.def("apd", [](const std::vector<Mat>& seqs) { return apd(seqs); });
  m.def("mpd", [](const std::vector<Mat>& seqs) { return mpd(seqs); });
  m.def("default_config_json", []() { return RunConfig{}.to_json().dump(); });
  m.def(
      "evaluate",
      [](const DualPathModel& model, const Dataset& ds, const DiversitySampler* sampler,
         const PoseFlow* flow, const std::string& protocol, const std::string& control,
         int k, std::uint64_t seed) {
        std::vector<MotionPair> test;
        for (int i : ds.test_indices) test.push_back(ds.pairs[i]);
        EvalReport r = run_control_protocol(model, sampler, flow, ds.skeleton, test,
                                            protocol_from_name(protocol),
                                            control_from_name(control), k, seed);
        return report_to_dict(r);
      },
      py::arg("model"), py::arg("dataset"), py::arg("sampler") = nullptr,
      py::arg("flow") = nullptr, py::arg("protocol") = "random_sampling",
      py::arg("control") = "none", py::arg("k") = 50, py::arg("seed") = 0);
}
