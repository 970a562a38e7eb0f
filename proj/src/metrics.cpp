#include "motctl/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "motctl/objectives.hpp"

namespace motctl {

std::string protocol_name(Protocol p) {
  return p == Protocol::random_sampling ? "random_sampling" : "diversity_sampling";
}

Protocol protocol_from_name(const std::string& s) {
  if (s == "random_sampling") return Protocol::random_sampling;
  if (s == "diversity_sampling") return Protocol::diversity_sampling;
  throw std::invalid_argument("unknown protocol: " + s);
}

std::string control_name(Control c) {
  switch (c) {
    case Control::none: return "none";
    case Control::fix_zb: return "fix_zb";
    case Control::fix_zt: return "fix_zt";
    case Control::end_pose: return "end_pose";
  }
  throw std::logic_error("bad control enum");
}

Control control_from_name(const std::string& s) {
  if (s == "none") return Control::none;
  if (s == "fix_zb") return Control::fix_zb;
  if (s == "fix_zt") return Control::fix_zt;
  if (s == "end_pose") return Control::end_pose;
  throw std::invalid_argument("unknown control: " + s);
}

namespace {

Eigen::VectorXd flatten(const Mat& seq, const std::vector<int>* columns) {
  Eigen::Index c = columns ? static_cast<Eigen::Index>(columns->size()) : seq.cols();
  Eigen::VectorXd f(seq.rows() * c);
  for (Eigen::Index t = 0; t < seq.rows(); ++t) {
    if (columns) {
      for (Eigen::Index i = 0; i < c; ++i) f(t * c + i) = seq(t, (*columns)[i]);
    } else {
      f.segment(t * c, c) = seq.row(t);
    }
  }
  return f;
}

std::vector<Eigen::VectorXd> flatten_all(const std::vector<Mat>& sequences,
                                         const std::vector<int>* columns) {
  if (sequences.size() < 2)
    throw std::invalid_argument("pairwise metrics need at least two sequences");
  std::vector<Eigen::VectorXd> flat;
  flat.reserve(sequences.size());
  for (const Mat& s : sequences) flat.push_back(flatten(s, columns));
  return flat;
}

}  // namespace

double apd(const std::vector<Mat>& sequences, const std::vector<int>* columns) {
  auto flat = flatten_all(sequences, columns);
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < flat.size(); ++i)
    for (std::size_t j = i + 1; j < flat.size(); ++j) {
      sum += (flat[i] - flat[j]).norm();
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

double mpd(const std::vector<Mat>& sequences, const std::vector<int>* columns) {
  auto flat = flatten_all(sequences, columns);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < flat.size(); ++i)
    for (std::size_t j = i + 1; j < flat.size(); ++j)
      best = std::min(best, (flat[i] - flat[j]).norm());
  return best;
}

double nll_score(const PoseFlow& flow, const std::vector<Mat>& sequences,
                 const Skeleton& skeleton) {
  return validity_objective(flow, sequences, skeleton);
}

EvalReport run_control_protocol(const DualPathModel& model,
                                const DiversitySampler* sampler, const PoseFlow* flow,
                                const Skeleton& skeleton,
                                const std::vector<MotionPair>& test_set,
                                Protocol protocol, Control control, int K,
                                std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("protocol needs K >= 2");
  if (test_set.empty()) throw std::invalid_argument("protocol needs a nonempty test set");
  const ModelConfig& mc = model.config();
  if (control == Control::end_pose && mc.mode != ControlMode::end_pose_control)
    throw std::invalid_argument("end_pose control needs an end-pose model");
  if (protocol == Protocol::diversity_sampling) {
    if (!sampler)
      throw std::invalid_argument("diversity protocol requires a sampler checkpoint");
    if (sampler->config().K != K)
      throw std::invalid_argument("sampler was trained for K=" +
                                  std::to_string(sampler->config().K));
    if (control != Control::fix_zb && control != Control::end_pose)
      throw std::invalid_argument(
          "diversity protocol supports fix_zb or end_pose control");
  }

  std::vector<int> p1 = mc.split.part1_columns();
  std::vector<int> p2 = mc.split.part2_columns();
  EvalReport r;
  r.K = K;
  r.protocol = protocol;
  r.control = control;
  r.nll = std::numeric_limits<double>::quiet_NaN();
  double nll_sum = 0;

  std::uint64_t proto_seed = mix_seed(seed, 0xE7A1);
  for (std::size_t idx = 0; idx < test_set.size(); ++idx) {
    std::uint64_t cond_seed = mix_seed(proto_seed, static_cast<std::uint64_t>(idx));
    const Mat& past = test_set[idx].past;
    std::vector<Mat> gen;
    if (protocol == Protocol::random_sampling) {
      // fixed-latent draws come first: z_t, then z_b
      Rng fix_rng(mix_seed(cond_seed, 0xF1D0));
      LatentSource zt = LatentSource::PriorSample();
      LatentSource zb = LatentSource::PriorSample();
      if (control == Control::fix_zt)
        zt = LatentSource::Fixed(reparameterize(
            model.prior_top(past), gaussian_matrix(fix_rng, 1, mc.d_z).row(0).transpose()));
      if (control == Control::fix_zb || control == Control::end_pose)
        zb = LatentSource::Fixed(reparameterize(
            model.prior_bottom(past), gaussian_matrix(fix_rng, 1, mc.d_z).row(0).transpose()));
      gen = model.generate_controlled(past, zt, zb, K, cond_seed);
    } else {
      // shared noise draw first, then the frozen z_b
      Rng rng(mix_seed(cond_seed, 0xD1E2));
      Mat eps = gaussian_matrix(rng, 1, mc.d_z);
      Eigen::VectorXd z_b = reparameterize(model.prior_bottom(past),
                                           gaussian_matrix(rng, 1, mc.d_z).row(0).transpose());
      Mat z_rows = sampler->map_noise(past, eps.row(0));
      gen = model.decode_full(past, z_rows, z_b.transpose().replicate(K, 1));
    }

    r.apd_full += apd(gen);
    r.apd_part1 += apd(gen, &p1);
    r.apd_part2 += apd(gen, &p2);
    r.mpd += mpd(gen);
    if (flow) nll_sum += nll_score(*flow, gen, skeleton);
  }

  double n = static_cast<double>(test_set.size());
  r.apd_full /= n;
  r.apd_part1 /= n;
  r.apd_part2 /= n;
  r.mpd /= n;
  if (flow) r.nll = nll_sum / n;
  if (r.mpd > r.apd_full + 1e-9)
    throw std::logic_error("report invariant violated: mpd exceeds apd");
  return r;
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  auto line = [&os](const char* label, const std::string& value) {
    os << label;
    for (std::size_t i = std::string(label).size(); i < 14; ++i) os << ' ';
    os << value << '\n';
  };
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("n/a");
    std::ostringstream s;
    s.precision(6);
    s << std::fixed << v;
    return s.str();
  };
  line("protocol", protocol_name(r.protocol));
  line("control", control_name(r.control));
  line("K", std::to_string(r.K));
  line("apd_full", num(r.apd_full));
  line("apd_part1", num(r.apd_part1));
  line("apd_part2", num(r.apd_part2));
  line("mpd", num(r.mpd));
  line("nll", num(r.nll));
  return os.str();
}

nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["protocol"] = protocol_name(r.protocol);
  j["control"] = control_name(r.control);
  j["K"] = r.K;
  j["apd_full"] = r.apd_full;
  j["apd_part1"] = r.apd_part1;
  j["apd_part2"] = r.apd_part2;
  j["mpd"] = r.mpd;
  j["nll"] = r.nll;
  return j;
}

}  // namespace motctl
