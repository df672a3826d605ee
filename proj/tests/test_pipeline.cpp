#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "pipeline.hpp"

using namespace cn;
using pipe::ExperimentConfig;

namespace {

// small enough to train in seconds, big enough to exercise every code path
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.n_train = 120;
  cfg.n_val = 60;
  cfg.pool_size = 150;
  cfg.batch_size = 20;
  cfg.max_epochs = 2;
  cfg.patience = 5;
  cfg.image_size = 35;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config json round trip and hashing") {
  ExperimentConfig cfg = tiny_config();
  cfg.seeds.scm = 999;
  const std::string j = cfg.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(j);
  CHECK(back.n_train == cfg.n_train);
  CHECK(back.image_size == cfg.image_size);
  CHECK(back.seeds.scm == 999);
  CHECK(back.to_json() == j);
  CHECK(back.content_hash() == cfg.content_hash());

  ExperimentConfig other = cfg;
  other.lr = 0.002;
  CHECK(other.content_hash() != cfg.content_hash());

  // partial override keeps defaults elsewhere
  const auto partial = ExperimentConfig::from_json("{\"batch_size\": 16}");
  CHECK(partial.batch_size == 16);
  CHECK(partial.n_train == ExperimentConfig::defaults().n_train);

  CHECK_THROWS_AS(ExperimentConfig::from_json("{nope"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{\"batch_size\": 2}").validate(),
                  ConfigError);
}

TEST_CASE("replicate seeds are shifted and disjoint") {
  const ExperimentConfig cfg = tiny_config();
  const auto r0 = cfg.for_replicate(0);
  const auto r1 = cfg.for_replicate(1);
  CHECK(r0.seeds.scm != r1.seeds.scm);
  CHECK(r0.seeds.train != r1.seeds.train);
  CHECK(r0.seeds.pool_train != r0.seeds.pool_val);
  CHECK(r0.n_train == cfg.n_train);
}

TEST_CASE("dataset assembly links cohort rows to matched images") {
  const ExperimentConfig cfg = tiny_config();
  const auto data = pipe::assemble_dataset(cfg);
  CHECK(data.train.samples.size() == cfg.n_train);
  CHECK(data.val.samples.size() == cfg.n_val);
  CHECK(data.train.pool.images.size() == cfg.pool_size);
  for (const auto& s : data.train.samples) {
    CHECK(s.image_id >= 0);
    CHECK(s.image_id < static_cast<int>(cfg.pool_size));
    CHECK((s.t == 0.0 || s.t == 1.0));
  }
  // matched image should be close to the subject in measured space
  double corr_num = 0.0, sx = 0.0, si = 0.0, mx = 0.0, mi = 0.0;
  const std::size_t n = data.train.samples.size();
  for (const auto& s : data.train.samples) {
    mx += s.x;
    mi += data.train.pool.images[s.image_id].meas_x;
  }
  mx /= n;
  mi /= n;
  for (const auto& s : data.train.samples) {
    const double a = s.x - mx;
    const double b = data.train.pool.images[s.image_id].meas_x - mi;
    corr_num += a * b;
    sx += a * a;
    si += b * b;
  }
  CHECK(corr_num / std::sqrt(sx * si) > 0.9);
  // the two cohorts come from different seeds
  CHECK(data.train.samples[0].y != data.val.samples[0].y);
}

TEST_CASE("training runs, logs, and is deterministic") {
  ExperimentConfig cfg = tiny_config();
  const auto data = pipe::assemble_dataset(cfg);
  const auto r1 = pipe::train(cfg, data, model::Mode::biased);
  const auto r2 = pipe::train(cfg, data, model::Mode::biased);
  CHECK(r1.log.size() == 2);
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.best_val_total == doctest::Approx(r2.best_val_total).epsilon(1e-12));
  CHECK(r1.net.params[0].val == r2.net.params[0].val);
  for (const auto& row : r1.log) {
    CHECK(std::isfinite(row.train.total));
    CHECK(std::isfinite(row.val.total));
  }

  // checkpoint round trip preserves every weight
  const std::string ckpt = "/tmp/cn_test_ckpt.bin";
  pipe::save_net(r1.net, ckpt);
  const auto loaded = pipe::load_net(ckpt, cfg, model::Mode::biased);
  for (std::size_t i = 0; i < r1.net.params.size(); ++i)
    CHECK(loaded.params[i].val == r1.net.params[i].val);
  std::remove(ckpt.c_str());

  const std::string logp = "/tmp/cn_test_log.csv";
  pipe::write_training_log(r1.log, logp);
  const std::string text = slurp(logp);
  CHECK(text.rfind("epoch,", 0) == 0);
  std::remove(logp.c_str());
}

TEST_CASE("patience zero stops after the first non-improving epoch") {
  ExperimentConfig cfg = tiny_config();
  cfg.max_epochs = 40;
  cfg.patience = 0;
  const auto data = pipe::assemble_dataset(cfg);
  const auto r = pipe::train(cfg, data, model::Mode::biased);
  CHECK(static_cast<int>(r.log.size()) <= cfg.max_epochs);
  // stopped at the first epoch whose val loss failed to improve
  const int epochs_run = static_cast<int>(r.log.size());
  const bool stopped_early =
      epochs_run == r.best_epoch + 2 || epochs_run == cfg.max_epochs;
  CHECK(stopped_early);
}

TEST_CASE("tabular baselines reproduce the regression contrast") {
  // big clean cohorts: the marginal regression is unbiased but noisy (t has
  // no common cause with y), the noisy adjusted regression lands on the
  // collider-biased value, and the star row conditions on z' only
  ExperimentConfig cfg;
  cfg.n_train = 20000;
  cfg.n_val = 5000;
  pipe::Datasets data;
  data.train.samples.resize(cfg.n_train);
  data.val.samples.resize(cfg.n_val);
  const auto fill = [&](std::vector<pipe::Sample>& out, std::uint64_t seed) {
    const auto cohort = scm::sample_cohort(cfg.scm_params, out.size(), seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = {static_cast<int>(i), static_cast<double>(cohort.subjects[i].t),
                cohort.subjects[i].y, cohort.subjects[i].x, cohort.subjects[i].z};
    }
  };
  fill(data.train.samples, 42);
  fill(data.val.samples, 43);

  pipe::NoiseCalibration calib{0.3, 0.3};
  const auto rows = pipe::run_baselines(data.train.samples, data.val.samples, calib, 7);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variables == "t");
  CHECK(rows[0].ate == doctest::Approx(1.0).epsilon(0.1));
  CHECK(rows[0].mse_y > 2.5);        // residual variance of the marginal fit
  CHECK(rows[1].ate == doctest::Approx(0.42).epsilon(0.25));  // collider-biased
  CHECK(rows[2].ate == doctest::Approx(1.0).epsilon(0.15));   // adjusts z' only
  CHECK(rows[0].mse_y > rows[1].mse_y);  // conditioning shrinks residual MSE
  // deterministic in the seed
  const auto again = pipe::run_baselines(data.train.samples, data.val.samples, calib, 7);
  CHECK(rows[1].ate == again[1].ate);
}

TEST_CASE("replicate report has the canonical five rows") {
  ExperimentConfig cfg = tiny_config();
  const std::string dir = "/tmp/cn_test_rep";
  const auto res = pipe::run_replicate(cfg, dir);
  REQUIRE(res.rows.size() == 5);
  CHECK(res.rows[0].model == "Regression");
  CHECK(res.rows[3].model == "BiasedNet");
  CHECK(res.rows[4].model == "CausalNet");
  for (const auto& r : res.rows) CHECK(std::isfinite(r.ate));
  CHECK(res.calib.mse_x > 0.0);

  const std::string csv = slurp(dir + "/results.csv");
  CHECK(csv.rfind("model,variables,mse_y,ate", 0) == 0);
  CHECK(csv.find("CausalNet") != std::string::npos);
  const std::string manifest = slurp(dir + "/manifest.json");
  CHECK(manifest.find("\"config_hash\"") != std::string::npos);
  CHECK(manifest.find("\"oracle_interventional_ate\"") != std::string::npos);

  // byte-identical rerun
  const std::string dir2 = "/tmp/cn_test_rep2";
  pipe::run_replicate(cfg, dir2);
  CHECK(slurp(dir2 + "/results.csv") == csv);
}
