#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "motctl/rng.hpp"

namespace motctl {

using Mat = Eigen::MatrixXd;

// Kinematic tree. Joint i has parent parents[i]; exactly one joint (the root)
// has parent -1 and every parent index must precede its child.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<int> parents;

  int joint_count() const { return static_cast<int>(parents.size()); }
  int root() const;
  void validate() const;  // throws std::invalid_argument on structural errors
};

// Frames are rows of flattened joint coordinates (x0,y0,z0,x1,...) so a
// sequence of L poses over N joints is [L x 3N]. Root-relative coordinates:
// consumers expect the global translation already removed.
struct MotionSequence {
  Skeleton skeleton;
  Mat frames;
  double fps = 30.0;

  int length() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
  void validate() const;
};

// Disjoint exhaustive partition of the joints into a controllable part (1)
// and the complement (2).
struct BodySplit {
  std::vector<int> part1;
  std::vector<int> part2;

  static BodySplit from_part1(const Skeleton& skeleton, std::vector<int> part1);
  void validate(int joint_count) const;
  // flattened frame-column indices (3 per joint, joint order preserved)
  std::vector<int> part1_columns() const;
  std::vector<int> part2_columns() const;
};

std::vector<int> joint_columns(const std::vector<int>& joints);

// past/future halves of one motion pair, both [.. x 3N]
struct MotionPair {
  Mat past;
  Mat future;
};

struct Dataset {
  Skeleton skeleton;
  double fps = 30.0;
  int history = 0;  // H frames of past
  int horizon = 0;  // T frames of future
  std::vector<MotionPair> pairs;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

enum class GestureMode { none, wave, reach, clap };

std::string gesture_mode_name(GestureMode m);
GestureMode gesture_mode_from_name(const std::string& s);

// Control knobs of the synthetic walker. The lower body follows the stride
// parameters and turn rate; the upper body follows a fixed-rate arm swing and
// the gesture mode. Per-sequence hidden variation (gesture intensity, speed,
// phase and the additive noise) comes from `seed`.
struct SyntheticGaitConfig {
  double stride_frequency = 1.0;   // Hz
  double stride_amplitude = 0.6;   // rad, hip swing
  double arm_swing_amplitude = 0.4;  // rad
  double turn_rate = 0.0;          // rad/frame yaw applied to the leg motion
  GestureMode gesture_mode = GestureMode::none;
  double phase = 0.0;              // stride phase offset, rad
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

// sampling ranges used by make-data
struct GaitRanges {
  double stride_frequency_lo = 0.7, stride_frequency_hi = 1.4;
  double stride_amplitude_lo = 0.35, stride_amplitude_hi = 0.8;
  double arm_swing_lo = 0.25, arm_swing_hi = 0.55;
  double turn_rate_lo = -0.045, turn_rate_hi = 0.045;
  double noise_std = 0.01;

  SyntheticGaitConfig sample(Rng& rng) const;
};

// 12-joint walker: root, spine, shoulders/elbows/wrists, hips/knees
Skeleton walker_skeleton();
// default controllable part: root + legs (lower body)
BodySplit walker_lower_split();

// One H+T frame walk. Turn and gesture activate only in the future segment
// (smooth onset), so futures stay multimodal given a past.
MotionSequence synthesize_walk(const Skeleton& skeleton, int history, int horizon,
                               const SyntheticGaitConfig& config);

Dataset generate_synthetic_dataset(int count, int history, int horizon,
                                   const GaitRanges& ranges, std::uint64_t seed);

// column projection of a frame block onto one part of a split
Mat split_part(const Mat& frames, const BodySplit& split, int part);
// inverse of splitting: reassembles full frames from both parts
Mat merge_parts(const BodySplit& split, const Mat& part1, const Mat& part2,
                int joint_count);

MotionSequence remove_global_translation(const MotionSequence& seq);

// Straight-line stand-in for a future segment: same endpoints (copied
// bit-for-bit), interior frames linearly interpolated, same length.
Mat build_aux_sequence(const Mat& future);

void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq);
MotionSequence read_motion_file(const std::filesystem::path& path);

// dataset directory = dataset_manifest.json + one motion file per pair
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                   std::uint64_t seed);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace motctl
