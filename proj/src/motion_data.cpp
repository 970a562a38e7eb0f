#include "motctl/motion_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace motctl {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void io_fail(const std::string& what) {
  throw std::runtime_error("motion io: " + what);
}

// smooth 0->1 ramp (cubic smoothstep) on s in [0,1]
double smooth01(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 rot_z(const Vec3& v, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

Vec3 normalize_or_up(const Vec3& v) {
  double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  if (n < 1e-12) return {0.0, 0.0, 1.0};
  return {v.x / n, v.y / n, v.z / n};
}

// walker geometry (meters, z up, left side at +x)
constexpr double kSpineZ = 0.55;
constexpr double kShoulderX = 0.22, kShoulderZ = 0.50;
constexpr double kHipX = 0.14, kHipZ = -0.08;
constexpr double kThigh = 0.42;
constexpr double kUpperArm = 0.30;
constexpr double kForearm = 0.28;
constexpr double kArmHz = 1.0;     // arm swing clock, independent of the stride
constexpr int kOnsetFrames = 8;    // turn/gesture ramp length after the past
constexpr double kFps = 30.0;

enum WalkerJoint {
  J_ROOT = 0,
  J_SPINE,
  J_L_SHOULDER,
  J_L_ELBOW,
  J_L_WRIST,
  J_R_SHOULDER,
  J_R_ELBOW,
  J_R_WRIST,
  J_L_HIP,
  J_L_KNEE,
  J_R_HIP,
  J_R_KNEE,
  kWalkerJoints
};

}  // namespace

int Skeleton::root() const {
  for (std::size_t i = 0; i < parents.size(); ++i)
    if (parents[i] < 0) return static_cast<int>(i);
  throw std::invalid_argument("skeleton has no root");
}

void Skeleton::validate() const {
  int n = joint_count();
  if (n <= 0) throw std::invalid_argument("skeleton: no joints");
  if (joint_names.size() != parents.size())
    throw std::invalid_argument("skeleton: name/parent count mismatch");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    int p = parents[i];
    if (p < 0) {
      ++roots;
    } else if (p >= n) {
      throw std::invalid_argument("skeleton: parent index out of range");
    } else if (p >= i) {
      throw std::invalid_argument("skeleton: parents must precede children");
    }
  }
  if (roots != 1) throw std::invalid_argument("skeleton: exactly one root required");
}

void MotionSequence::validate() const {
  skeleton.validate();
  if (frames.cols() != 3 * skeleton.joint_count())
    throw std::invalid_argument("motion: frame width != 3 * joints");
  if (frames.rows() < 1) throw std::invalid_argument("motion: empty");
  if (!frames.allFinite()) throw std::invalid_argument("motion: non-finite values");
  if (fps <= 0) throw std::invalid_argument("motion: fps must be positive");
}

BodySplit BodySplit::from_part1(const Skeleton& skeleton, std::vector<int> part1) {
  std::set<int> chosen(part1.begin(), part1.end());
  if (chosen.size() != part1.size())
    throw std::invalid_argument("body split: duplicate joints in part 1");
  BodySplit s;
  s.part1 = std::move(part1);
  std::sort(s.part1.begin(), s.part1.end());
  for (int j = 0; j < skeleton.joint_count(); ++j)
    if (!chosen.count(j)) s.part2.push_back(j);
  s.validate(skeleton.joint_count());
  return s;
}

void BodySplit::validate(int joint_count) const {
  if (part1.empty() || part2.empty())
    throw std::invalid_argument("body split: both parts must be non-empty");
  std::set<int> seen;
  for (int j : part1) seen.insert(j);
  for (int j : part2) {
    if (seen.count(j)) throw std::invalid_argument("body split: parts overlap");
    seen.insert(j);
  }
  if (static_cast<int>(seen.size()) != joint_count ||
      *seen.begin() < 0 || *seen.rbegin() >= joint_count)
    throw std::invalid_argument("body split: parts must partition the joints");
}

std::vector<int> joint_columns(const std::vector<int>& joints) {
  std::vector<int> cols;
  cols.reserve(joints.size() * 3);
  for (int j : joints) {
    cols.push_back(3 * j);
    cols.push_back(3 * j + 1);
    cols.push_back(3 * j + 2);
  }
  return cols;
}

std::vector<int> BodySplit::part1_columns() const { return joint_columns(part1); }
std::vector<int> BodySplit::part2_columns() const { return joint_columns(part2); }

std::string gesture_mode_name(GestureMode m) {
  switch (m) {
    case GestureMode::none: return "none";
    case GestureMode::wave: return "wave";
    case GestureMode::reach: return "reach";
    case GestureMode::clap: return "clap";
  }
  throw std::logic_error("bad gesture mode");
}

GestureMode gesture_mode_from_name(const std::string& s) {
  if (s == "none") return GestureMode::none;
  if (s == "wave") return GestureMode::wave;
  if (s == "reach") return GestureMode::reach;
  if (s == "clap") return GestureMode::clap;
  throw std::invalid_argument("unknown gesture mode: " + s);
}

Skeleton walker_skeleton() {
  Skeleton s;
  s.joint_names = {"root",       "spine",   "l_shoulder", "l_elbow",
                   "l_wrist",    "r_shoulder", "r_elbow", "r_wrist",
                   "l_hip",      "l_knee",  "r_hip",      "r_knee"};
  s.parents = {-1, 0, 1, 2, 3, 1, 5, 6, 0, 8, 0, 10};
  return s;
}

BodySplit walker_lower_split() {
  return BodySplit::from_part1(walker_skeleton(),
                               {J_ROOT, J_L_HIP, J_L_KNEE, J_R_HIP, J_R_KNEE});
}

SyntheticGaitConfig GaitRanges::sample(Rng& rng) const {
  SyntheticGaitConfig c;
  c.stride_frequency = rng.uniform(stride_frequency_lo, stride_frequency_hi);
  c.stride_amplitude = rng.uniform(stride_amplitude_lo, stride_amplitude_hi);
  c.arm_swing_amplitude = rng.uniform(arm_swing_lo, arm_swing_hi);
  c.turn_rate = rng.uniform(turn_rate_lo, turn_rate_hi);
  c.gesture_mode = static_cast<GestureMode>(rng.uniform_int(4));
  c.phase = rng.uniform(0.0, kTwoPi);
  c.noise_std = noise_std;
  c.seed = rng.next_u64();
  return c;
}

MotionSequence synthesize_walk(const Skeleton& skeleton, int history, int horizon,
                               const SyntheticGaitConfig& config) {
  skeleton.validate();
  if (skeleton.joint_count() != kWalkerJoints ||
      skeleton.parents != walker_skeleton().parents)
    throw std::invalid_argument("synthesize_walk: skeleton is not the 12-joint walker");
  if (history < 2 || horizon < 2)
    throw std::invalid_argument("synthesize_walk: need at least 2 past and 2 future frames");

  const int total = history + horizon;
  // Independent streams so the lower body is bit-identical across configs
  // that differ only in upper-body settings (and vice versa).
  Rng lower_rng(mix_seed(config.seed, 0x10));
  Rng upper_rng(mix_seed(config.seed, 0x20));

  // hidden per-sequence gesture variation (drawn before any noise)
  double g_intensity = upper_rng.uniform(0.6, 1.0);
  double g_speed = upper_rng.uniform(0.8, 1.3);
  double g_phase = upper_rng.uniform(0.0, kTwoPi);

  // cumulative yaw; turning starts only once the future begins
  std::vector<double> yaw(total, 0.0);
  {
    double acc = 0.0;
    for (int t = 0; t < total; ++t) {
      double ramp = t < history
                        ? 0.0
                        : smooth01(static_cast<double>(t - history + 1) / kOnsetFrames);
      acc += config.turn_rate * ramp;
      yaw[t] = acc;
    }
  }

  Mat frames(total, 3 * kWalkerJoints);
  auto put = [&frames](int t, int joint, const Vec3& p) {
    frames(t, 3 * joint) = p.x;
    frames(t, 3 * joint + 1) = p.y;
    frames(t, 3 * joint + 2) = p.z;
  };

  for (int t = 0; t < total; ++t) {
    double stride = config.phase + kTwoPi * config.stride_frequency * t / kFps;
    double envelope = t < history
                          ? 0.0
                          : smooth01(static_cast<double>(t - history + 1) / kOnsetFrames);

    // --- lower body ---
    put(t, J_ROOT, {0.0, 0.0, 0.0});
    for (int side = 0; side < 2; ++side) {
      double sx = side == 0 ? 1.0 : -1.0;  // left at +x
      double theta = config.stride_amplitude * std::sin(stride + (side == 0 ? 0.0 : kTwoPi / 2));
      Vec3 hip{sx * kHipX, 0.0, kHipZ};
      Vec3 knee{hip.x, hip.y + kThigh * std::sin(theta), hip.z - kThigh * std::cos(theta)};
      hip = rot_z(hip, yaw[t]);
      knee = rot_z(knee, yaw[t]);
      put(t, side == 0 ? J_L_HIP : J_R_HIP, hip);
      put(t, side == 0 ? J_L_KNEE : J_R_KNEE, knee);
    }
    if (config.noise_std > 0) {
      for (int j : {J_L_HIP, J_L_KNEE, J_R_HIP, J_R_KNEE})
        for (int k = 0; k < 3; ++k)
          frames(t, 3 * j + k) += config.noise_std * lower_rng.normal();
    }

    // --- upper body ---
    put(t, J_SPINE, {0.0, 0.0, kSpineZ});
    double arm_clock = kTwoPi * kArmHz * t / kFps;
    double gesture_clock = kTwoPi * g_speed * t / kFps + g_phase;
    double beta = g_intensity * std::sin(gesture_clock);
    for (int side = 0; side < 2; ++side) {
      double sx = side == 0 ? 1.0 : -1.0;
      double swing = config.arm_swing_amplitude *
                     std::sin(arm_clock + (side == 0 ? kTwoPi / 2 : 0.0));
      Vec3 shoulder{sx * kShoulderX, 0.0, kShoulderZ};
      Vec3 elbow{shoulder.x, shoulder.y + kUpperArm * std::sin(swing),
                 shoulder.z - kUpperArm * std::cos(swing)};
      Vec3 base_dir{0.0, std::sin(1.2 * swing), -std::cos(1.2 * swing)};
      Vec3 target = base_dir;
      switch (config.gesture_mode) {
        case GestureMode::none:
          break;
        case GestureMode::wave:
          target = {0.85 * beta, 0.15, 0.75};
          break;
        case GestureMode::reach:
          target = {0.0, 0.9 + 0.1 * beta, 0.15 + 0.2 * beta};
          break;
        case GestureMode::clap: {
          double close = 0.5 * (1.0 + std::sin(gesture_clock));
          target = {-sx * (0.15 + 0.75 * close), 0.55, 0.1};
          break;
        }
      }
      Vec3 dir = normalize_or_up({(1.0 - envelope) * base_dir.x + envelope * target.x,
                                  (1.0 - envelope) * base_dir.y + envelope * target.y,
                                  (1.0 - envelope) * base_dir.z + envelope * target.z});
      Vec3 wrist{elbow.x + kForearm * dir.x, elbow.y + kForearm * dir.y,
                 elbow.z + kForearm * dir.z};
      put(t, side == 0 ? J_L_SHOULDER : J_R_SHOULDER, shoulder);
      put(t, side == 0 ? J_L_ELBOW : J_R_ELBOW, elbow);
      put(t, side == 0 ? J_L_WRIST : J_R_WRIST, wrist);
    }
    if (config.noise_std > 0) {
      for (int j : {J_SPINE, J_L_SHOULDER, J_L_ELBOW, J_L_WRIST, J_R_SHOULDER,
                    J_R_ELBOW, J_R_WRIST})
        for (int k = 0; k < 3; ++k)
          frames(t, 3 * j + k) += config.noise_std * upper_rng.normal();
    }
  }

  MotionSequence seq;
  seq.skeleton = skeleton;
  seq.frames = std::move(frames);
  seq.fps = kFps;
  seq.validate();
  return seq;
}

Dataset generate_synthetic_dataset(int count, int history, int horizon,
                                   const GaitRanges& ranges, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("dataset: count must be positive");
  Dataset ds;
  ds.skeleton = walker_skeleton();
  ds.fps = kFps;
  ds.history = history;
  ds.horizon = horizon;
  Rng rng(mix_seed(seed, 0xDA7A));
  ds.pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    SyntheticGaitConfig cfg = ranges.sample(rng);
    MotionSequence seq = synthesize_walk(ds.skeleton, history, horizon, cfg);
    MotionPair pair;
    pair.past = seq.frames.topRows(history);
    pair.future = seq.frames.bottomRows(horizon);
    ds.pairs.push_back(std::move(pair));
  }
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  Rng split_rng(mix_seed(seed, 0x5411));
  shuffle_indices(order, split_rng);
  int test_count = count >= 2 ? std::max(1, count / 10) : 0;
  ds.test_indices.assign(order.begin(), order.begin() + test_count);
  ds.train_indices.assign(order.begin() + test_count, order.end());
  std::sort(ds.test_indices.begin(), ds.test_indices.end());
  std::sort(ds.train_indices.begin(), ds.train_indices.end());
  return ds;
}

Mat split_part(const Mat& frames, const BodySplit& split, int part) {
  if (part != 1 && part != 2) throw std::invalid_argument("split_part: part must be 1 or 2");
  std::vector<int> cols = part == 1 ? split.part1_columns() : split.part2_columns();
  Mat out(frames.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] >= frames.cols())
      throw std::invalid_argument("split_part: split does not fit the frames");
    out.col(k) = frames.col(cols[k]);
  }
  return out;
}

Mat merge_parts(const BodySplit& split, const Mat& part1, const Mat& part2,
                int joint_count) {
  split.validate(joint_count);
  if (part1.rows() != part2.rows())
    throw std::invalid_argument("merge_parts: row count mismatch");
  std::vector<int> c1 = split.part1_columns();
  std::vector<int> c2 = split.part2_columns();
  if (part1.cols() != static_cast<Eigen::Index>(c1.size()) ||
      part2.cols() != static_cast<Eigen::Index>(c2.size()))
    throw std::invalid_argument("merge_parts: column count mismatch");
  Mat out(part1.rows(), 3 * joint_count);
  for (std::size_t k = 0; k < c1.size(); ++k) out.col(c1[k]) = part1.col(k);
  for (std::size_t k = 0; k < c2.size(); ++k) out.col(c2[k]) = part2.col(k);
  return out;
}

MotionSequence remove_global_translation(const MotionSequence& seq) {
  seq.validate();
  int root = seq.skeleton.root();
  MotionSequence out = seq;
  for (int t = 0; t < out.length(); ++t) {
    double rx = out.frames(t, 3 * root);
    double ry = out.frames(t, 3 * root + 1);
    double rz = out.frames(t, 3 * root + 2);
    for (int j = 0; j < seq.skeleton.joint_count(); ++j) {
      out.frames(t, 3 * j) -= rx;
      out.frames(t, 3 * j + 1) -= ry;
      out.frames(t, 3 * j + 2) -= rz;
    }
  }
  return out;
}

Mat build_aux_sequence(const Mat& future) {
  int T = static_cast<int>(future.rows());
  if (T < 2) throw std::invalid_argument("aux sequence needs at least 2 frames");
  Mat aux(T, future.cols());
  aux.row(0) = future.row(0);
  aux.row(T - 1) = future.row(T - 1);
  for (int t = 1; t < T - 1; ++t) {
    double w = static_cast<double>(t) / (T - 1);
    aux.row(t) = (1.0 - w) * future.row(0) + w * future.row(T - 1);
  }
  return aux;
}

void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq) {
  seq.validate();
  ordered_json j;
  j["fps"] = seq.fps;
  j["joints"] = seq.skeleton.joint_names;
  j["parents"] = seq.skeleton.parents;
  ordered_json frames = ordered_json::array();
  for (int t = 0; t < seq.length(); ++t) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < seq.dim(); ++c) row.push_back(seq.frames(t, c));
    frames.push_back(std::move(row));
  }
  j["frames"] = std::move(frames);
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail("cannot write " + path.string());
  f << j.dump(1) << "\n";
}

MotionSequence read_motion_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail("cannot open " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const std::exception& e) {
    io_fail(path.string() + ": invalid json: " + e.what());
  }
  MotionSequence seq;
  try {
    seq.fps = j.at("fps").get<double>();
    seq.skeleton.joint_names = j.at("joints").get<std::vector<std::string>>();
    seq.skeleton.parents = j.at("parents").get<std::vector<int>>();
    const auto& frames = j.at("frames");
    int rows = static_cast<int>(frames.size());
    int cols = 3 * seq.skeleton.joint_count();
    seq.frames.resize(rows, cols);
    for (int t = 0; t < rows; ++t) {
      const auto& row = frames.at(t);
      if (static_cast<int>(row.size()) != cols)
        throw std::invalid_argument("frame width mismatch at frame " + std::to_string(t));
      for (int c = 0; c < cols; ++c) seq.frames(t, c) = row.at(c).get<double>();
    }
  } catch (const ordered_json::exception& e) {
    io_fail(path.string() + ": " + e.what());
  }
  seq.validate();
  return seq;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                   std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) io_fail("cannot create " + dir.string() + ": " + ec.message());

  ordered_json m;
  m["format"] = "motctl.dataset.v1";
  m["fps"] = dataset.fps;
  m["history"] = dataset.history;
  m["horizon"] = dataset.horizon;
  m["count"] = dataset.pairs.size();
  m["seed"] = seed;
  m["joints"] = dataset.skeleton.joint_names;
  m["parents"] = dataset.skeleton.parents;
  ordered_json files = ordered_json::array();
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%05zu.json", i);
    files.push_back(std::string(name));
    MotionSequence seq;
    seq.skeleton = dataset.skeleton;
    seq.fps = dataset.fps;
    seq.frames.resize(dataset.history + dataset.horizon, dataset.pairs[i].past.cols());
    seq.frames.topRows(dataset.history) = dataset.pairs[i].past;
    seq.frames.bottomRows(dataset.horizon) = dataset.pairs[i].future;
    write_motion_file(dir / name, seq);
  }
  m["files"] = std::move(files);
  m["train"] = dataset.train_indices;
  m["test"] = dataset.test_indices;
  std::ofstream f(dir / "dataset_manifest.json", std::ios::binary);
  if (!f) io_fail("cannot write dataset manifest");
  f << m.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "dataset_manifest.json", std::ios::binary);
  if (!f) io_fail("cannot open " + (dir / "dataset_manifest.json").string());
  ordered_json m;
  try {
    m = ordered_json::parse(f);
  } catch (const std::exception& e) {
    io_fail("bad dataset manifest: " + std::string(e.what()));
  }
  if (m.value("format", "") != "motctl.dataset.v1") io_fail("unrecognized dataset format");
  Dataset ds;
  ds.fps = m.at("fps").get<double>();
  ds.history = m.at("history").get<int>();
  ds.horizon = m.at("horizon").get<int>();
  ds.skeleton.joint_names = m.at("joints").get<std::vector<std::string>>();
  ds.skeleton.parents = m.at("parents").get<std::vector<int>>();
  ds.skeleton.validate();
  ds.train_indices = m.at("train").get<std::vector<int>>();
  ds.test_indices = m.at("test").get<std::vector<int>>();
  for (const auto& name : m.at("files")) {
    MotionSequence seq = read_motion_file(dir / name.get<std::string>());
    if (seq.length() != ds.history + ds.horizon)
      io_fail("sequence length disagrees with manifest in " + name.get<std::string>());
    MotionPair pair;
    pair.past = seq.frames.topRows(ds.history);
    pair.future = seq.frames.bottomRows(ds.horizon);
    ds.pairs.push_back(std::move(pair));
  }
  int n = static_cast<int>(ds.pairs.size());
  for (int i : ds.train_indices)
    if (i < 0 || i >= n) io_fail("train index out of range");
  for (int i : ds.test_indices)
    if (i < 0 || i >= n) io_fail("test index out of range");
  return ds;
}

}  // namespace motctl
