#pragma once

#include <filesystem>

#include "motctl/run_config.hpp"

namespace motctl {

struct GenerateFlags {
  bool fix_zb = false;
  bool fix_zt = false;
  bool end_pose = false;
  bool diverse = false;
  bool plot = false;
  int K = 10;
};

// default artifact locations under the run's output directory
std::filesystem::path model_dir(const RunConfig& cfg);
std::filesystem::path flow_dir(const RunConfig& cfg);
std::filesystem::path sampler_dir(const RunConfig& cfg);

void cmd_make_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_train_pose_prior(const RunConfig& cfg);
void cmd_train_sampler(const RunConfig& cfg, const std::filesystem::path& model_ckpt,
                       const std::filesystem::path& flow_ckpt);
void cmd_generate(const RunConfig& cfg, const std::filesystem::path& model_ckpt,
                  const std::filesystem::path& sampler_ckpt,
                  const std::filesystem::path& past_file, const GenerateFlags& flags);
void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& model_ckpt,
                  const std::filesystem::path& sampler_ckpt,
                  const std::filesystem::path& flow_ckpt);
void cmd_export(const RunConfig& cfg, const std::filesystem::path& motion_file);

// side-view (x up-axis z) bone plot, one cell per frame
void export_svg(const MotionSequence& seq, const std::filesystem::path& path);

}  // namespace motctl
