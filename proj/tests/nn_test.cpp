#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "motctl/nn.hpp"
#include "motctl/rng.hpp"
#include "test_util.hpp"

using namespace motctl;
using Mat = Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

fs::path temp_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "motctl_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("GRU step matches a scalar-loop oracle") {
  const int in = 3, hidden = 2, batch = 2;
  nn::GruCell cell{"g", in, hidden};
  nn::ParameterStore store;
  Rng rng(42);
  cell.init(store, rng);
  store.value_mut("g.b_ih") = random_mat(rng, 1, 3 * hidden, 0.3);
  store.value_mut("g.b_hh") = random_mat(rng, 1, 3 * hidden, 0.3);

  Mat x = random_mat(rng, batch, in);
  Mat h = random_mat(rng, batch, hidden);
  Mat got = nn::gru_step(cell, store, x, h);

  const Mat& wi = store.value("g.w_ih");
  const Mat& wh = store.value("g.w_hh");
  const Mat& bi = store.value("g.b_ih");
  const Mat& bh = store.value("g.b_hh");
  for (int r = 0; r < batch; ++r)
    for (int k = 0; k < hidden; ++k) {
      auto gate = [&](const Mat& w, const Mat& v, int col) {
        double s = 0;
        for (int j = 0; j < static_cast<int>(w.rows()); ++j) s += v(r, j) * w(j, col);
        return s;
      };
      double gi_r = gate(wi, x, k) + bi(0, k);
      double gh_r = gate(wh, h, k) + bh(0, k);
      double gi_z = gate(wi, x, hidden + k) + bi(0, hidden + k);
      double gh_z = gate(wh, h, hidden + k) + bh(0, hidden + k);
      double gi_n = gate(wi, x, 2 * hidden + k) + bi(0, 2 * hidden + k);
      double gh_n = gate(wh, h, 2 * hidden + k) + bh(0, 2 * hidden + k);
      double rg = sigmoid(gi_r + gh_r);
      double zg = sigmoid(gi_z + gh_z);
      double ng = std::tanh(gi_n + rg * gh_n);
      double expect = (1.0 - zg) * ng + zg * h(r, k);
      CHECK(got(r, k) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("GRU gradients pass finite differences") {
  nn::GruCell cell{"g", 2, 3};
  nn::ParameterStore store;
  Rng rng(5);
  cell.init(store, rng);
  Mat x0 = random_mat(rng, 2, 2), x1 = random_mat(rng, 2, 2);

  auto res = testutil::check_gradients(store, [&](ad::Tape& t) {
    ad::Val h = cell.run(t, store, {t.constant(x0), t.constant(x1)});
    return ad::sum_sq(h);
  });
  CAPTURE(res.worst);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("fc layer applies weights, bias and activation") {
  nn::FcLayer fc{"f", 2, 2, nn::Activation::tanh_act};
  nn::ParameterStore store;
  Rng rng(3);
  fc.init(store, rng);
  store.value_mut("f.w") << 1.0, 0.0, 0.0, -1.0;
  store.value_mut("f.b") << 0.5, 0.25;
  Mat x(1, 2);
  x << 2.0, 3.0;
  Mat y = nn::fc_forward(fc, store, x);
  CHECK(y(0, 0) == doctest::Approx(std::tanh(2.5)).epsilon(1e-14));
  CHECK(y(0, 1) == doctest::Approx(std::tanh(-2.75)).epsilon(1e-14));
}

TEST_CASE("adam first step matches the closed form") {
  nn::ParameterStore store;
  store.create("p", 1, 2) << 1.0, -2.0;
  store.grad("p") << 0.3, -0.7;

  // after one step with fresh moments: m_hat = g, v_hat = g^2, so
  // theta' = theta - lr * g / (|g| + eps)
  Mat theta0 = store.value("p");
  Mat g = store.grad("p");
  store.adam_update(0.01, 0.9, 0.999, 1e-8);
  for (int j = 0; j < 2; ++j) {
    double expect = theta0(0, j) - 0.01 * g(0, j) / (std::abs(g(0, j)) + 1e-8);
    CHECK(store.value("p")(0, j) == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK(store.adam_step() == 1);
}

TEST_CASE("adam converges on a quadratic and lr=0 is a no-op") {
  nn::ParameterStore store;
  store.create("p", 1, 1)(0, 0) = -4.0;
  for (int i = 0; i < 800; ++i) {
    store.grad("p")(0, 0) = 2.0 * (store.value("p")(0, 0) - 3.0);
    store.adam_update(0.05);
  }
  CHECK(store.value("p")(0, 0) == doctest::Approx(3.0).epsilon(1e-4));

  Mat before = store.value("p");
  store.grad("p")(0, 0) = 123.0;
  store.adam_update(0.0);
  CHECK(store.value("p") == before);
}

TEST_CASE("checkpoint round trip is lossless after f32 quantization") {
  nn::ParameterStore store;
  Rng rng(9);
  store.create("alpha", 3, 4) = random_mat(rng, 3, 4);
  store.create("beta", 1, 5) = random_mat(rng, 1, 5);
  // populate adam state
  for (int i = 0; i < 3; ++i) {
    store.grad("alpha") = random_mat(rng, 3, 4);
    store.grad("beta") = random_mat(rng, 1, 5);
    store.adam_update(1e-3);
  }
  store.quantize_f32();

  fs::path dir = temp_dir("ckpt_roundtrip");
  nlohmann::ordered_json header;
  header["artifact"] = "unit";
  store.save_checkpoint(dir, header);

  nlohmann::ordered_json loaded_header;
  nn::ParameterStore loaded = nn::ParameterStore::load_checkpoint(dir, &loaded_header);
  CHECK(loaded_header.at("artifact") == "unit");
  CHECK(loaded.adam_step() == store.adam_step());
  CHECK(loaded.value_checksum() == store.value_checksum());
  for (const auto& [name, e] : store.entries()) {
    CHECK(loaded.value(name) == e.value);
    CHECK(loaded.entries().at(name).adam_m == e.adam_m);
    CHECK(loaded.entries().at(name).adam_v == e.adam_v);
  }

  // saving the loaded store again produces identical bytes
  fs::path dir2 = temp_dir("ckpt_roundtrip2");
  loaded.save_checkpoint(dir2, header);
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(slurp(dir / "params.bin") == slurp(dir2 / "params.bin"));
  CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));
}

TEST_CASE("quantize_f32 is idempotent and checksum reacts to value changes") {
  nn::ParameterStore store;
  Rng rng(13);
  store.create("w", 2, 2) = random_mat(rng, 2, 2);
  store.quantize_f32();
  Mat once = store.value("w");
  store.quantize_f32();
  CHECK(store.value("w") == once);

  std::uint64_t c0 = store.value_checksum();
  store.value_mut("w")(0, 0) += 1.0;
  CHECK(store.value_checksum() != c0);
}
