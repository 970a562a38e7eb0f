#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "motctl/rng.hpp"
#include "motctl/tape.hpp"

#include "json.hpp"

namespace motctl::nn {

using Mat = Eigen::MatrixXd;

// Named dense parameters with their gradient buffers and Adam moments.
// Iteration order is the lexicographic name order (std::map), which makes
// serialization and checksums deterministic.
class ParameterStore {
 public:
  struct Entry {
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
  };

  Mat& create(const std::string& name, int rows, int cols);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const Mat& value(const std::string& name) const;
  Mat& value_mut(const std::string& name);
  Mat& grad(const std::string& name);
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void zero_grad();

  // One Adam step over every entry using its grad buffer. Pure f64; callers
  // that want bit-exact checkpoint resume follow it with quantize_f32().
  void adam_update(double lr, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8);

  // Rounds values and Adam moments to f32 precision so that a save/load
  // cycle is lossless and an interrupted run resumes bit-exactly.
  void quantize_f32();

  long long adam_step() const { return adam_step_; }

  std::size_t total_parameters() const;

  // FNV-1a over the f32 image of all values, in name order.
  std::uint64_t value_checksum() const;

  // Checkpoint = directory with manifest.json + params.bin (little-endian
  // f32, row-major, in manifest order). `header` supplies artifact-specific
  // fields (artifact kind, model config, epoch, ...) that are merged into
  // the manifest and returned on load.
  void save_checkpoint(const std::filesystem::path& dir,
                       const nlohmann::ordered_json& header) const;
  static ParameterStore load_checkpoint(const std::filesystem::path& dir,
                                        nlohmann::ordered_json* header_out = nullptr);

 private:
  std::map<std::string, Entry> entries_;
  long long adam_step_ = 0;
};

enum class Activation { identity, tanh_act };

// Fully connected layer; parameters live in a ParameterStore under
// "<prefix>.w" [in x out] and "<prefix>.b" [1 x out].
struct FcLayer {
  std::string prefix;
  int in = 0;
  int out = 0;
  Activation act = Activation::identity;

  void init(ParameterStore& store, Rng& rng) const;
  ad::Val apply(ad::Tape& tape, ParameterStore& store, ad::Val x,
                bool trainable = true) const;
};

// GRU cell with the PyTorch gate layout (reset, update, candidate stacked in
// the weight columns) and update rule h' = n + z * (h - n).
struct GruCell {
  std::string prefix;
  int in = 0;
  int hidden = 0;

  void init(ParameterStore& store, Rng& rng) const;
  ad::Val step(ad::Tape& tape, ParameterStore& store, ad::Val x, ad::Val h,
               bool trainable = true) const;
  // unrolls over a frame sequence starting from h = 0
  ad::Val run(ad::Tape& tape, ParameterStore& store,
              const std::vector<ad::Val>& frames, bool trainable = true) const;
};

// convenience single-call forms used by tests and bindings
Mat fc_forward(const FcLayer& layer, ParameterStore& store, const Mat& x);
Mat gru_step(const GruCell& cell, ParameterStore& store, const Mat& x, const Mat& h);

// uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)), biases left at zero
void init_linear(ParameterStore& store, const std::string& weight_name, int fan_in,
                 int fan_out, Rng& rng);

}  // namespace motctl::nn
