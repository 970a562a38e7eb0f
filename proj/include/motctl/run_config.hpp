#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "motctl/cvae.hpp"
#include "motctl/sampler.hpp"
#include "motctl/training.hpp"

namespace motctl {

// Configuration document for the CLI. Every field has a default; a config
// file may set any subset of keys, unknown keys are rejected (usage error),
// and emit∘parse is the identity on the canonical form.
struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" or "import"
  int count = 2000;
  std::string dir = "data";
};

struct EvalSpec {
  std::string protocol = "random_sampling";
  std::string control = "none";
  int k_random = 50;
  int k_diversity = 10;
};

struct RunConfig {
  ModelConfig model;
  DatasetSpec dataset;
  ModelTrainOptions optimizer;
  FlowTrainOptions flow;
  int flow_layers = 3;
  SamplerTrainOptions sampler;
  int sampler_k = 10;
  int sampler_hidden = 128;
  EvalSpec eval;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  static RunConfig load_file(const std::filesystem::path& path);
  void save_file(const std::filesystem::path& path) const;
};

}  // namespace motctl
