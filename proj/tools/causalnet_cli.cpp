// Command-line front end. All functionality goes through the C API in
// causalnet.h; this file only parses flags and merges config overrides.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <string>

#include "causalnet.h"

namespace {

struct Overrides {
  std::string config_path;
  std::string out_dir = "out";
  long long seed = -1;
  int epochs = -1;
  int image_size = -1;
  long long n = -1;
};

std::string build_config(const Overrides& o) {
  nlohmann::json j = nlohmann::json::parse(cn_default_config());
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    if (!f) {
      std::fprintf(stderr, "error: cannot read config file %s\n", o.config_path.c_str());
      std::exit(CN_ERR_CONFIG);
    }
    try {
      nlohmann::json user = nlohmann::json::parse(f);
      j.merge_patch(user);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: invalid config JSON: %s\n", e.what());
      std::exit(CN_ERR_CONFIG);
    }
  }
  // command-line overrides win over the config file
  if (o.seed >= 0) {
    const auto s = static_cast<unsigned long long>(o.seed);
    j["seeds"] = {{"scm", s + 11},   {"pool_train", s + 101}, {"pool_val", s + 202},
                  {"init", s + 303}, {"train", s + 404},      {"noise", s + 505}};
  }
  if (o.epochs > 0) j["max_epochs"] = o.epochs;
  if (o.image_size > 0) j["image_size"] = o.image_size;
  if (o.n > 0) j["n_train"] = o.n;
  return j.dump();
}

cn_experiment* make_exp(const Overrides& o) {
  cn_experiment* exp = nullptr;
  const cn_status st = cn_experiment_create(build_config(o).c_str(), &exp);
  if (st != CN_OK) {
    std::fprintf(stderr, "error: %s\n", cn_last_error());
    std::exit(st);
  }
  return exp;
}

int finish(cn_experiment* exp, cn_status st) {
  if (st != CN_OK) std::fprintf(stderr, "error: %s\n", cn_last_error());
  cn_experiment_destroy(exp);
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collider-aware prognosis pipeline"};
  app.require_subcommand(0, 1);

  Overrides o;
  bool print_default = false;
  app.add_flag("--print-default-config", print_default,
               "Print the default JSON config and exit");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("-o,--out", o.out_dir, "Output directory");
    cmd->add_option("--seed", o.seed, "Base seed override (derives all streams)");
    cmd->add_option("--epochs", o.epochs, "Cap on training epochs");
    cmd->add_option("--image-size", o.image_size, "Network crop size (e.g. 51, or smaller for CI)");
  };

  auto* simulate = app.add_subcommand("simulate", "Write cohort CSVs and manifest");
  add_common(simulate);
  simulate->add_option("--n", o.n, "Training cohort size override");

  auto* build_pool = app.add_subcommand("build-pool", "Render and persist image pools");
  add_common(build_pool);

  auto* train = app.add_subcommand("train", "Train one network");
  add_common(train);
  std::string mode = "causal";
  train->add_option("--mode", mode, "causal or biased")->check(CLI::IsMember({"causal", "biased"}));

  auto* calibrate = app.add_subcommand("calibrate", "Noise-calibration run (targets x, z)");
  add_common(calibrate);

  auto* evaluate = app.add_subcommand("evaluate", "Score trained checkpoints into results.csv");
  add_common(evaluate);
  std::string causal_ckpt, biased_ckpt;
  evaluate->add_option("--causal-ckpt", causal_ckpt, "CausalNet checkpoint (default <out>/model_causal.ckpt)");
  evaluate->add_option("--biased-ckpt", biased_ckpt, "BiasedNet checkpoint (default <out>/model_biased.ckpt)");

  auto* reproduce = app.add_subcommand("reproduce", "Full pipeline, k seed replicates");
  add_common(reproduce);
  int replicates = 1, jobs = 1;
  reproduce->add_option("-k,--replicates", replicates, "Number of seed replicates");
  reproduce->add_option("-j,--jobs", jobs, "Parallel replicate workers");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : CN_ERR_CONFIG;
  }

  if (print_default) {
    std::printf("%s", cn_default_config());
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::fprintf(stderr, "%s", app.help().c_str());
    return CN_ERR_CONFIG;
  }

  if (gradcheck->parsed()) {
    char report[4096];
    double max_err = 0.0;
    const cn_status st = cn_gradcheck(report, sizeof(report), &max_err);
    std::printf("%s", report);
    if (st != CN_OK) std::fprintf(stderr, "error: %s\n", cn_last_error());
    return st;
  }

  cn_experiment* exp = make_exp(o);
  if (simulate->parsed()) return finish(exp, cn_simulate(exp, o.out_dir.c_str()));
  if (build_pool->parsed()) return finish(exp, cn_build_pool(exp, o.out_dir.c_str()));
  if (train->parsed()) return finish(exp, cn_train(exp, mode.c_str(), o.out_dir.c_str()));
  if (calibrate->parsed()) {
    double mx = 0, mz = 0;
    const cn_status st = cn_calibrate(exp, o.out_dir.c_str(), &mx, &mz);
    if (st == CN_OK) std::printf("mse_x=%.6f mse_z=%.6f\n", mx, mz);
    return finish(exp, st);
  }
  if (evaluate->parsed()) {
    if (causal_ckpt.empty()) causal_ckpt = o.out_dir + "/model_causal.ckpt";
    if (biased_ckpt.empty()) biased_ckpt = o.out_dir + "/model_biased.ckpt";
    return finish(exp, cn_evaluate(exp, causal_ckpt.c_str(), biased_ckpt.c_str(),
                                   o.out_dir.c_str()));
  }
  if (reproduce->parsed())
    return finish(exp, cn_reproduce(exp, replicates, jobs, o.out_dir.c_str()));
  return CN_ERR_CONFIG;
}
