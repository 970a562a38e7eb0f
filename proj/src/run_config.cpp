#include "motctl/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

#include "motctl/metrics.hpp"

namespace motctl {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument("config: unknown key \"" + it.key() + "\" in " + where);
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (dataset.kind != "synthetic" && dataset.kind != "import")
    throw std::invalid_argument("config: dataset.kind must be synthetic or import");
  if (dataset.count < 0) throw std::invalid_argument("config: dataset.count < 0");
  if (optimizer.lr <= 0 || optimizer.batch_size < 1 || optimizer.epochs < 0)
    throw std::invalid_argument("config: bad optimizer block");
  if (optimizer.beta1 <= 0 || optimizer.beta1 >= 1 || optimizer.beta2 <= 0 ||
      optimizer.beta2 >= 1)
    throw std::invalid_argument("config: betas must lie in (0,1)");
  if (flow.lr <= 0 || flow.batch_size < 1 || flow.epochs < 0 || flow.jitter_std < 0 ||
      flow_layers < 1)
    throw std::invalid_argument("config: bad flow block");
  if (sampler.lr <= 0 || sampler.epochs < 0 || sampler_k < 2 || sampler_hidden < 1)
    throw std::invalid_argument("config: bad sampler block");
  sampler.weights.validate();
  protocol_from_name(eval.protocol);
  control_from_name(eval.control);
  if (eval.k_random < 2 || eval.k_diversity < 2)
    throw std::invalid_argument("config: eval sample counts must be >= 2");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model.to_json();
  j["dataset"] = {{"kind", dataset.kind}, {"count", dataset.count}, {"dir", dataset.dir}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"betas", {optimizer.beta1, optimizer.beta2}},
                    {"batch_size", optimizer.batch_size},
                    {"epochs", optimizer.epochs}};
  j["flow"] = {{"layers", flow_layers},
               {"lr", flow.lr},
               {"batch_size", flow.batch_size},
               {"epochs", flow.epochs},
               {"jitter_std", flow.jitter_std}};
  j["sampler"] = {{"K", sampler_k},
                  {"hidden", sampler_hidden},
                  {"lr", sampler.lr},
                  {"epochs", sampler.epochs},
                  {"weights",
                   {sampler.weights.lambda_kl, sampler.weights.lambda_div,
                    sampler.weights.lambda_vli}},
                  {"clip", {sampler.weights.clip_lo, sampler.weights.clip_hi}}};
  j["eval"] = {{"protocol", eval.protocol},
               {"control", eval.control},
               {"K_random", eval.k_random},
               {"K_diversity", eval.k_diversity}};
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  check_keys(j, {"model", "dataset", "optimizer", "flow", "sampler", "eval", "seed",
                 "out_dir"},
             "config");
  if (j.contains("model")) {
    check_keys(j.at("model"),
               {"H", "T", "split", "mode", "bottom_input", "d_z", "hidden", "lambdas"},
               "model");
    if (j.at("model").contains("split"))
      check_keys(j.at("model").at("split"), {"part1", "part2"}, "model.split");
    nlohmann::json m = c.model.to_json();
    m.update(j.at("model"));
    c.model = ModelConfig::from_json(m);
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"kind", "count", "dir"}, "dataset");
    c.dataset.kind = d.value("kind", c.dataset.kind);
    c.dataset.count = d.value("count", c.dataset.count);
    c.dataset.dir = d.value("dir", c.dataset.dir);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, {"lr", "betas", "batch_size", "epochs"}, "optimizer");
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    if (o.contains("betas")) {
      if (!o.at("betas").is_array() || o.at("betas").size() != 2)
        throw std::invalid_argument("config: optimizer.betas must be [b1, b2]");
      c.optimizer.beta1 = o.at("betas")[0].get<double>();
      c.optimizer.beta2 = o.at("betas")[1].get<double>();
    }
    c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
    c.optimizer.epochs = o.value("epochs", c.optimizer.epochs);
  }
  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    check_keys(f, {"layers", "lr", "batch_size", "epochs", "jitter_std"}, "flow");
    c.flow_layers = f.value("layers", c.flow_layers);
    c.flow.lr = f.value("lr", c.flow.lr);
    c.flow.batch_size = f.value("batch_size", c.flow.batch_size);
    c.flow.epochs = f.value("epochs", c.flow.epochs);
    c.flow.jitter_std = f.value("jitter_std", c.flow.jitter_std);
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    check_keys(s, {"K", "hidden", "lr", "epochs", "weights", "clip"}, "sampler");
    c.sampler_k = s.value("K", c.sampler_k);
    c.sampler_hidden = s.value("hidden", c.sampler_hidden);
    c.sampler.lr = s.value("lr", c.sampler.lr);
    c.sampler.epochs = s.value("epochs", c.sampler.epochs);
    if (s.contains("weights")) {
      if (!s.at("weights").is_array() || s.at("weights").size() != 3)
        throw std::invalid_argument("config: sampler.weights must be [kl, div, vli]");
      c.sampler.weights.lambda_kl = s.at("weights")[0].get<double>();
      c.sampler.weights.lambda_div = s.at("weights")[1].get<double>();
      c.sampler.weights.lambda_vli = s.at("weights")[2].get<double>();
    }
    if (s.contains("clip")) {
      if (!s.at("clip").is_array() || s.at("clip").size() != 2)
        throw std::invalid_argument("config: sampler.clip must be [lo, hi]");
      c.sampler.weights.clip_lo = s.at("clip")[0].get<double>();
      c.sampler.weights.clip_hi = s.at("clip")[1].get<double>();
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"protocol", "control", "K_random", "K_diversity"}, "eval");
    c.eval.protocol = e.value("protocol", c.eval.protocol);
    c.eval.control = e.value("control", c.eval.control);
    c.eval.k_random = e.value("K_random", c.eval.k_random);
    c.eval.k_diversity = e.value("K_diversity", c.eval.k_diversity);
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  c.validate();
  return c;
}

RunConfig RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config parse error in " + path.string() + ": " +
                                e.what());
  }
  return from_json(j);
}

void RunConfig::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path.string());
  out << to_json().dump(1) << '\n';
}

}  // namespace motctl
