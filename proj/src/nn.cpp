#include "motctl/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace motctl::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {
constexpr const char* kFormatTag = "motctl.checkpoint.v1";

[[noreturn]] void io_fail(const std::string& what) {
  throw std::runtime_error("checkpoint io: " + what);
}
}  // namespace

Mat& ParameterStore::create(const std::string& name, int rows, int cols) {
  if (entries_.count(name)) throw std::logic_error("parameter exists: " + name);
  Entry e;
  e.value = Mat::Zero(rows, cols);
  e.grad = Mat::Zero(rows, cols);
  e.adam_m = Mat::Zero(rows, cols);
  e.adam_v = Mat::Zero(rows, cols);
  return entries_.emplace(name, std::move(e)).first->second.value;
}

const Mat& ParameterStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter: " + name);
  return it->second.value;
}

Mat& ParameterStore::value_mut(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter: " + name);
  return it->second.value;
}

Mat& ParameterStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter: " + name);
  return it->second.grad;
}

void ParameterStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.setZero();
}

void ParameterStore::adam_update(double lr, double beta1, double beta2, double eps) {
  ++adam_step_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_step_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_step_));
  for (auto& [name, e] : entries_) {
    e.adam_m = beta1 * e.adam_m + (1.0 - beta1) * e.grad;
    e.adam_v = (beta2 * e.adam_v.array() + (1.0 - beta2) * e.grad.array().square()).matrix();
    Mat m_hat = e.adam_m / bc1;
    Mat v_hat = e.adam_v / bc2;
    e.value -= (lr * m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
  }
}

void ParameterStore::quantize_f32() {
  auto q = [](Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  };
  for (auto& [name, e] : entries_) {
    q(e.value);
    q(e.adam_m);
    q(e.adam_v);
  }
}

std::size_t ParameterStore::total_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

std::uint64_t ParameterStore::value_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, e] : entries_) {
    feed(name.data(), name.size());
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
        float f = static_cast<float>(e.value(r, c));
        feed(&f, sizeof(f));
      }
  }
  return h;
}

namespace {

void append_tensor_bytes(std::string& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      float f = static_cast<float>(m(r, c));
      char buf[4];
      std::memcpy(buf, &f, 4);
      out.append(buf, 4);
    }
}

Mat tensor_from_bytes(const std::string& blob, std::size_t offset, int rows, int cols) {
  Mat m(rows, cols);
  std::size_t k = offset;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      float f;
      std::memcpy(&f, blob.data() + k, 4);
      k += 4;
      m(r, c) = static_cast<double>(f);
    }
  return m;
}

}  // namespace

void ParameterStore::save_checkpoint(const std::filesystem::path& dir,
                                     const nlohmann::ordered_json& header) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) io_fail("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json root;
  root["format"] = kFormatTag;
  for (const auto& [key, value] : header.items()) root[key] = value;
  root["adam_step"] = adam_step_;

  std::string blob;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  auto emit = [&](const std::string& name, const Mat& m) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["shape"] = {m.rows(), m.cols()};
    t["dtype"] = "f32";
    t["byte_offset"] = blob.size();
    t["byte_len"] = static_cast<std::size_t>(m.size()) * 4;
    tensors.push_back(std::move(t));
    append_tensor_bytes(blob, m);
  };
  for (const auto& [name, e] : entries_) emit(name, e.value);
  for (const auto& [name, e] : entries_) emit("adam_m/" + name, e.adam_m);
  for (const auto& [name, e] : entries_) emit("adam_v/" + name, e.adam_v);
  root["tensors"] = std::move(tensors);

  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) io_fail("cannot write " + (dir / "manifest.json").string());
    f << root.dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "params.bin", std::ios::binary);
    if (!f) io_fail("cannot write " + (dir / "params.bin").string());
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
}

ParameterStore ParameterStore::load_checkpoint(const std::filesystem::path& dir,
                                               nlohmann::ordered_json* header_out) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) io_fail("cannot open " + (dir / "manifest.json").string());
  nlohmann::ordered_json root;
  try {
    root = nlohmann::ordered_json::parse(mf);
  } catch (const std::exception& e) {
    io_fail("bad manifest: " + std::string(e.what()));
  }
  if (root.value("format", "") != kFormatTag) io_fail("unrecognized checkpoint format");

  std::ifstream bf(dir / "params.bin", std::ios::binary);
  if (!bf) io_fail("cannot open " + (dir / "params.bin").string());
  std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  ParameterStore store;
  store.adam_step_ = root.value("adam_step", 0LL);
  for (const auto& t : root.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    int rows = t.at("shape")[0].get<int>();
    int cols = t.at("shape")[1].get<int>();
    std::size_t off = t.at("byte_offset").get<std::size_t>();
    std::size_t len = t.at("byte_len").get<std::size_t>();
    if (t.at("dtype").get<std::string>() != "f32") io_fail("unsupported dtype in " + name);
    if (off + len > blob.size() || len != static_cast<std::size_t>(rows) * cols * 4)
      io_fail("tensor bytes out of range for " + name);
    Mat m = tensor_from_bytes(blob, off, rows, cols);
    auto put = [&](const std::string& base, int which) {
      auto it = store.entries_.find(base);
      if (it == store.entries_.end()) {
        Entry e;
        e.value = Mat::Zero(rows, cols);
        e.grad = Mat::Zero(rows, cols);
        e.adam_m = Mat::Zero(rows, cols);
        e.adam_v = Mat::Zero(rows, cols);
        it = store.entries_.emplace(base, std::move(e)).first;
      }
      if (which == 0) it->second.value = std::move(m);
      else if (which == 1) it->second.adam_m = std::move(m);
      else it->second.adam_v = std::move(m);
    };
    if (name.rfind("adam_m/", 0) == 0) put(name.substr(7), 1);
    else if (name.rfind("adam_v/", 0) == 0) put(name.substr(7), 2);
    else put(name, 0);
  }
  if (header_out) *header_out = root;
  return store;
}

void init_linear(ParameterStore& store, const std::string& weight_name, int fan_in,
                 int fan_out, Rng& rng) {
  Mat& w = store.value_mut(weight_name);
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
}

void FcLayer::init(ParameterStore& store, Rng& rng) const {
  store.create(prefix + ".w", in, out);
  store.create(prefix + ".b", 1, out);
  init_linear(store, prefix + ".w", in, out, rng);
}

ad::Val FcLayer::apply(ad::Tape& tape, ParameterStore& store, ad::Val x,
                       bool trainable) const {
  ad::Val w = tape.use_param(store, prefix + ".w", trainable);
  ad::Val b = tape.use_param(store, prefix + ".b", trainable);
  ad::Val y = ad::add_rowvec(ad::matmul(x, w), b);
  if (act == Activation::tanh_act) y = ad::tanhv(y);
  return y;
}

void GruCell::init(ParameterStore& store, Rng& rng) const {
  store.create(prefix + ".w_ih", in, 3 * hidden);
  store.create(prefix + ".w_hh", hidden, 3 * hidden);
  store.create(prefix + ".b_ih", 1, 3 * hidden);
  store.create(prefix + ".b_hh", 1, 3 * hidden);
  init_linear(store, prefix + ".w_ih", in, 3 * hidden, rng);
  init_linear(store, prefix + ".w_hh", hidden, 3 * hidden, rng);
}

ad::Val GruCell::step(ad::Tape& tape, ParameterStore& store, ad::Val x, ad::Val h,
                      bool trainable) const {
  using namespace ad;
  Val gi = add_rowvec(matmul(x, tape.use_param(store, prefix + ".w_ih", trainable)),
                      tape.use_param(store, prefix + ".b_ih", trainable));
  Val gh = add_rowvec(matmul(h, tape.use_param(store, prefix + ".w_hh", trainable)),
                      tape.use_param(store, prefix + ".b_hh", trainable));
  Val r = sigmoid(slice_cols(gi, 0, hidden) + slice_cols(gh, 0, hidden));
  Val z = sigmoid(slice_cols(gi, hidden, hidden) + slice_cols(gh, hidden, hidden));
  Val n = tanhv(slice_cols(gi, 2 * hidden, hidden) +
                cmul(r, slice_cols(gh, 2 * hidden, hidden)));
  // h' = (1 - z) * n + z * h
  return n + cmul(z, h - n);
}

ad::Val GruCell::run(ad::Tape& tape, ParameterStore& store,
                     const std::vector<ad::Val>& frames, bool trainable) const {
  if (frames.empty()) throw std::invalid_argument("GruCell::run: empty sequence");
  Eigen::Index batch = tape.val(frames[0]).rows();
  ad::Val h = tape.zeros(static_cast<int>(batch), hidden);
  for (ad::Val x : frames) h = step(tape, store, x, h, trainable);
  return h;
}

Mat fc_forward(const FcLayer& layer, ParameterStore& store, const Mat& x) {
  ad::Tape tape;
  return tape.val(layer.apply(tape, store, tape.constant(x), false));
}

Mat gru_step(const GruCell& cell, ParameterStore& store, const Mat& x, const Mat& h) {
  ad::Tape tape;
  return tape.val(cell.step(tape, store, tape.constant(x), tape.constant(h), false));
}

}  // namespace motctl::nn
