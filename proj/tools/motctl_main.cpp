#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "motctl/commands.hpp"
#include "motctl/training.hpp"

using namespace motctl;

int main(int argc, char** argv) {
  CLI::App app{"controllable motion prediction workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  app.add_option("--config", config_path, "run configuration file")->expected(1);
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* out_opt = app.add_option("--out", out_dir, "override the output directory");

  auto* make_data = app.add_subcommand("make-data", "generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "train the dual-path model");
  auto* train_prior =
      app.add_subcommand("train-pose-prior", "train the flow pose prior");

  auto* train_sampler = app.add_subcommand("train-sampler", "train the diversity sampler");
  std::string ts_model, ts_flow;
  train_sampler->add_option("--model", ts_model, "model checkpoint directory");
  train_sampler->add_option("--flow", ts_flow, "pose-prior checkpoint directory");

  auto* generate = app.add_subcommand("generate", "decode futures for one condition");
  std::string g_model, g_sampler, g_past;
  GenerateFlags gflags;
  generate->add_option("--model", g_model, "model checkpoint directory");
  generate->add_option("--sampler", g_sampler, "sampler checkpoint directory");
  generate->add_option("--past", g_past, "motion file with the observed frames")
      ->required();
  generate->add_option("--k", gflags.K, "number of futures");
  generate->add_flag("--fix-zb", gflags.fix_zb, "freeze the bottom latent");
  generate->add_flag("--fix-zt", gflags.fix_zt, "freeze the top latent");
  generate->add_flag("--end-pose", gflags.end_pose, "end-pose control");
  generate->add_flag("--diverse", gflags.diverse, "use the diversity sampler");
  generate->add_flag("--plot", gflags.plot, "also write bone plots");

  auto* evaluate = app.add_subcommand("evaluate", "run the evaluation protocol");
  std::string e_model, e_sampler, e_flow;
  evaluate->add_option("--model", e_model, "model checkpoint directory");
  evaluate->add_option("--sampler", e_sampler, "sampler checkpoint directory");
  evaluate->add_option("--flow", e_flow, "pose-prior checkpoint directory");

  auto* exportc = app.add_subcommand("export", "render a motion file as a bone plot");
  std::string x_file;
  exportc->add_option("file", x_file, "motion file")->required();

  // global flags may appear after the subcommand name
  for (CLI::App* sub : {make_data, train, train_prior, train_sampler, generate,
                        evaluate, exportc})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::load_file(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (out_opt->count() > 0) cfg.out_dir = out_dir;
    cfg.validate();

    auto or_default = [](const std::string& s, std::filesystem::path fallback) {
      return s.empty() ? fallback : std::filesystem::path(s);
    };

    if (make_data->parsed()) {
      cmd_make_data(cfg);
    } else if (train->parsed()) {
      cmd_train(cfg);
    } else if (train_prior->parsed()) {
      cmd_train_pose_prior(cfg);
    } else if (train_sampler->parsed()) {
      cmd_train_sampler(cfg, or_default(ts_model, model_dir(cfg)),
                        or_default(ts_flow, flow_dir(cfg)));
    } else if (generate->parsed()) {
      cmd_generate(cfg, or_default(g_model, model_dir(cfg)),
                   g_sampler.empty() && gflags.diverse ? sampler_dir(cfg)
                                                       : std::filesystem::path(g_sampler),
                   g_past, gflags);
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, or_default(e_model, model_dir(cfg)),
                   or_default(e_sampler, sampler_dir(cfg)),
                   or_default(e_flow, flow_dir(cfg)));
    } else if (exportc->parsed()) {
      cmd_export(cfg, x_file);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
