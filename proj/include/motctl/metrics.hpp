#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motctl/cvae.hpp"
#include "motctl/pose_prior.hpp"
#include "motctl/sampler.hpp"

namespace motctl {

enum class Protocol { random_sampling, diversity_sampling };
enum class Control { none, fix_zb, fix_zt, end_pose };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& s);
std::string control_name(Control c);
Control control_from_name(const std::string& s);

// mean / min pairwise L2 distance (not squared) between flattened sequences,
// optionally restricted to the given frame columns
double apd(const std::vector<Mat>& sequences, const std::vector<int>* columns = nullptr);
double mpd(const std::vector<Mat>& sequences, const std::vector<int>* columns = nullptr);

// mean flow NLL over the limb directions of every frame
double nll_score(const PoseFlow& flow, const std::vector<Mat>& sequences,
                 const Skeleton& skeleton);

struct EvalReport {
  double apd_full = 0;
  double apd_part1 = 0;
  double apd_part2 = 0;
  double mpd = 0;
  double nll = 0;  // NaN when no flow was supplied
  int K = 0;
  Protocol protocol = Protocol::random_sampling;
  Control control = Control::none;
};

// Per test condition, generate K futures under the control setting, compute
// the metrics, and average with equal weight across conditions. Random
// protocol draws unfixed latents from the learnable priors; diversity
// protocol maps one shared noise draw through the sampler (z_b frozen per
// condition) and accepts only fix_zb / end_pose controls.
EvalReport run_control_protocol(const DualPathModel& model,
                                const DiversitySampler* sampler, const PoseFlow* flow,
                                const Skeleton& skeleton,
                                const std::vector<MotionPair>& test_set,
                                Protocol protocol, Control control, int K,
                                std::uint64_t seed);

std::string report_text(const EvalReport& r);
nlohmann::ordered_json report_json(const EvalReport& r);

}  // namespace motctl
