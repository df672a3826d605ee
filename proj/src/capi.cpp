#include "causalnet.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "errors.hpp"
#include "gradcheck_suite.hpp"
#include "pipeline.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

struct cn_experiment {
  cn::pipe::ExperimentConfig cfg;
  std::string config_json;
  std::optional<cn::pipe::Datasets> data;  // built lazily, reused per handle

  const cn::pipe::Datasets& datasets() {
    if (!data) data = cn::pipe::assemble_dataset(cfg);
    return *data;
  }
};

namespace {

thread_local std::string g_last_error;

template <class F>
cn_status wrap(F&& f) {
  try {
    f();
    return CN_OK;
  } catch (const cn::ConfigError& e) {
    g_last_error = e.what();
    return CN_ERR_CONFIG;
  } catch (const cn::CheckError& e) {
    g_last_error = e.what();
    return CN_ERR_CHECK;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CN_ERR_RUNTIME;
  }
}

}  // namespace

extern "C" {

const char* cn_default_config(void) {
  static const std::string def = cn::pipe::ExperimentConfig::defaults().to_json();
  return def.c_str();
}

const char* cn_last_error(void) { return g_last_error.c_str(); }

cn_status cn_experiment_create(const char* config_json, cn_experiment** out) {
  if (!out) {
    g_last_error = "out handle is NULL";
    return CN_ERR_CONFIG;
  }
  *out = nullptr;
  return wrap([&]() {
    auto exp = std::make_unique<cn_experiment>();
    exp->cfg = config_json ? cn::pipe::ExperimentConfig::from_json(config_json)
                           : cn::pipe::ExperimentConfig::defaults();
    exp->config_json = exp->cfg.to_json();
    *out = exp.release();
  });
}

void cn_experiment_destroy(cn_experiment* exp) { delete exp; }

const char* cn_experiment_config(cn_experiment* exp) {
  return exp ? exp->config_json.c_str() : "";
}

cn_status cn_simulate(cn_experiment* exp, const char* out_dir) {
  if (!exp || !out_dir) {
    g_last_error = "NULL argument";
    return CN_ERR_CONFIG;
  }
  return wrap([&]() {
    exp->cfg.validate();
    fs::create_directories(out_dir);
    const std::string dir(out_dir);
    const auto train = cn::scm::sample_cohort(exp->cfg.scm_params, exp->cfg.n_train,
                                              exp->cfg.seeds.scm);
    const auto val = cn::scm::sample_cohort(
        exp->cfg.scm_params, exp->cfg.n_val, cn::rng::splitmix64(exp->cfg.seeds.scm) + 1);
    train.write_csv(dir + "/cohort_train.csv");
    val.write_csv(dir + "/cohort_val.csv");
    train.write_manifest(dir + "/cohort_manifest.json", exp->cfg.n_train);
  });
}

cn_status cn_build_pool(cn_experiment* exp, const char* out_dir) {
  if (!exp || !out_dir) {
    g_last_error = "NULL argument";
    return CN_ERR_CONFIG;
  }
  return wrap([&]() {
    exp->cfg.validate();
    fs::create_directories(out_dir);
    const std::string dir(out_dir);
    const auto tp = cn::img::build_pool(exp->cfg.pool_size, exp->cfg.seeds.pool_train);
    const auto vp = cn::img::build_pool(exp->cfg.pool_size, exp->cfg.seeds.pool_val);
    tp.save(dir + "/pool_train.raw", dir + "/pool_train.json");
    vp.save(dir + "/pool_val.raw", dir + "/pool_val.json");
    cn::img::write_pgm(tp.images[0], dir + "/pool_train_preview.pgm");
  });
}

cn_status cn_train(cn_experiment* exp, const char* mode, const char* out_dir) {
  if (!exp || !mode || !out_dir) {
    g_last_error = "NULL argument";
    return CN_ERR_CONFIG;
  }
  cn::model::Mode m;
  if (std::strcmp(mode, "causal") == 0)
    m = cn::model::Mode::causal;
  else if (std::strcmp(mode, "biased") == 0)
    m = cn::model::Mode::biased;
  else {
    g_last_error = "mode must be 'causal' or 'biased'";
    return CN_ERR_CONFIG;
  }
  return wrap([&]() {
    fs::create_directories(out_dir);
    const std::string dir(out_dir);
    // the dual-task run warm-starts from the calibration trunk when a prior
    // `calibrate` left its checkpoint here
    std::optional<cn::model::CausalNet<float>> warm;
    const std::string calib_ckpt = dir + "/model_calibrate.ckpt";
    if (m == cn::model::Mode::causal && fs::exists(calib_ckpt))
      warm.emplace(cn::pipe::load_net(calib_ckpt, exp->cfg, cn::model::Mode::calibrate));
    const auto res =
        cn::pipe::train(exp->cfg, exp->datasets(), m, warm ? &*warm : nullptr);
    cn::pipe::save_net(res.net, dir + "/model_" + mode + ".ckpt");
    cn::pipe::write_training_log(res.log, dir + "/training_log_" + mode + ".csv");
  });
}

cn_status cn_calibrate(cn_experiment* exp, const char* out_dir, double* mse_x,
                       double* mse_z) {
  if (!exp || !out_dir) {
    g_last_error = "NULL argument";
    return CN_ERR_CONFIG;
  }
  return wrap([&]() {
    fs::create_directories(out_dir);
    cn::model::NetConfig nc;
    nc.input_size = exp->cfg.image_size;
    nc.mode = cn::model::Mode::calibrate;
    cn::model::CausalNet<float> net(nc, 0);
    const auto c = cn::pipe::calibrate_noise(exp->cfg, exp->datasets(), &net);
    cn::pipe::save_net(net, std::string(out_dir) + "/model_calibrate.ckpt");
    if (mse_x) *mse_x = c.mse_x;
    if (mse_z) *mse_z = c.mse_z;
    std::ofstream f(std::string(out_dir) + "/calibration.json");
    if (!f) throw cn::RuntimeError("cannot write calibration.json");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "{\"mse_x\": %.9g, \"mse_z\": %.9g}\n", c.mse_x,
                  c.mse_z);
    f << buf;
  });
}

cn_status cn_evaluate(cn_experiment* exp, const char* causal_ckpt,
                      const char* biased_ckpt, const char* out_dir) {
  if (!exp || !causal_ckpt || !biased_ckpt || !out_dir) {
    g_last_error = "NULL argument";
    return CN_ERR_CONFIG;
  }
  return wrap([&]() {
    fs::create_directories(out_dir);
    const std::string dir(out_dir);
    const auto& data = exp->datasets();
    const auto causal =
        cn::pipe::load_net(causal_ckpt, exp->cfg, cn::model::Mode::causal);
    const auto biased =
        cn::pipe::load_net(biased_ckpt, exp->cfg, cn::model::Mode::biased);

    // reuse a calibration written next to the report if present
    cn::pipe::NoiseCalibration calib;
    bool have = false;
    {
      std::ifstream f(dir + "/calibration.json");
      if (f) {
        std::string txt((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
        if (std::sscanf(txt.c_str(), "{\"mse_x\": %lf, \"mse_z\": %lf", &calib.mse_x,
                        &calib.mse_z) == 2)
          have = true;
      }
    }
    if (!have) calib = cn::pipe::calibrate_noise(exp->cfg, data);

    auto evals = cn::pipe::evaluate_nets(causal, biased, data, exp->cfg.image_size);
    auto rows = cn::pipe::run_baselines(data.train.samples, data.val.samples, calib,
                                        exp->cfg.seeds.noise);
    rows.push_back(evals[0].row);
    rows.push_back(evals[1].row);
    const double oracle =
        cn::scm::interventional_ate(exp->cfg.scm_params, 100000, exp->cfg.seeds.scm);
    cn::pipe::make_report(dir, rows, exp->cfg, calib, evals, oracle, 0.0);
  });
}

cn_status cn_reproduce(cn_experiment* exp, int replicates, int jobs,
                       const char* out_dir) {
  if (!exp || !out_dir) {
    g_last_error = "NULL argument";
    return CN_ERR_CONFIG;
  }
  return wrap([&]() { cn::pipe::reproduce(exp->cfg, replicates, jobs, out_dir); });
}

cn_status cn_gradcheck(char* report_buf, size_t buf_len, double* max_rel_err) {
  std::string report;
  double worst = 0.0;
  bool all_ok = true;
  const cn_status st = wrap([&]() {
    for (const auto& r : cn::ad::run_gradcheck_suite()) {
      char line[192];
      std::snprintf(line, sizeof(line), "%-24s %s  max_rel_err=%.3e (tol %.0e, %zu params)\n",
                    r.name.c_str(), r.passed ? "PASS" : "FAIL", r.max_rel_err,
                    r.tolerance, r.params_checked);
      report += line;
      worst = std::max(worst, r.max_rel_err);
      all_ok = all_ok && r.passed;
    }
  });
  if (report_buf && buf_len > 0) {
    std::snprintf(report_buf, buf_len, "%s", report.c_str());
  }
  if (max_rel_err) *max_rel_err = worst;
  if (st != CN_OK) return st;
  if (!all_ok) {
    g_last_error = "gradient check failed:\n" + report;
    return CN_ERR_CHECK;
  }
  return CN_OK;
}

}  // extern "C"
