#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "causalnet.h"

namespace {

const char* kTinyConfig = R"({
  "n_train": 120, "n_val": 60, "pool_size": 150,
  "batch_size": 20, "max_epochs": 2, "patience": 5, "image_size": 35
})";

int count_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("default config is valid json the library accepts") {
  const char* def = cn_default_config();
  REQUIRE(def != nullptr);
  CHECK(std::strstr(def, "\"batch_size\"") != nullptr);
  cn_experiment* exp = nullptr;
  CHECK(cn_experiment_create(def, &exp) == CN_OK);
  REQUIRE(exp != nullptr);
  CHECK(std::strstr(cn_experiment_config(exp), "\"seeds\"") != nullptr);
  cn_experiment_destroy(exp);
}

TEST_CASE("null config means defaults") {
  cn_experiment* exp = nullptr;
  CHECK(cn_experiment_create(nullptr, &exp) == CN_OK);
  cn_experiment_destroy(exp);
}

TEST_CASE("bad configs map to CN_ERR_CONFIG with messages") {
  cn_experiment* exp = nullptr;
  CHECK(cn_experiment_create("{not json", &exp) == CN_ERR_CONFIG);
  CHECK(exp == nullptr);
  CHECK(std::strlen(cn_last_error()) > 0);

  CHECK(cn_experiment_create("{\"batch_size\": 1}", &exp) == CN_ERR_CONFIG);
  CHECK(cn_experiment_create("{\"image_size\": 4}", &exp) == CN_ERR_CONFIG);
}

TEST_CASE("simulate writes both cohort csvs") {
  cn_experiment* exp = nullptr;
  REQUIRE(cn_experiment_create(kTinyConfig, &exp) == CN_OK);
  const char* dir = "/tmp/cn_capi_sim";
  CHECK(cn_simulate(exp, dir) == CN_OK);
  CHECK(count_lines(std::string(dir) + "/cohort_train.csv") == 121);  // header + rows
  CHECK(count_lines(std::string(dir) + "/cohort_val.csv") == 61);
  cn_experiment_destroy(exp);
}

TEST_CASE("pool build emits payload, sidecar and preview") {
  cn_experiment* exp = nullptr;
  REQUIRE(cn_experiment_create(kTinyConfig, &exp) == CN_OK);
  const char* dir = "/tmp/cn_capi_pool";
  CHECK(cn_build_pool(exp, dir) == CN_OK);
  std::ifstream raw(std::string(dir) + "/pool_train.raw", std::ios::binary);
  CHECK(raw.good());
  std::ifstream side(std::string(dir) + "/pool_train.json");
  CHECK(side.good());
  std::ifstream pgm(std::string(dir) + "/pool_train_preview.pgm", std::ios::binary);
  REQUIRE(pgm.good());
  char magic[2] = {};
  pgm.read(magic, 2);
  CHECK(magic[0] == 'P');
  CHECK(magic[1] == '5');
  cn_experiment_destroy(exp);
}

TEST_CASE("train, calibrate, evaluate round trip through the C surface") {
  cn_experiment* exp = nullptr;
  REQUIRE(cn_experiment_create(kTinyConfig, &exp) == CN_OK);
  const char* dir = "/tmp/cn_capi_run";

  CHECK(cn_train(exp, "frobnicate", dir) == CN_ERR_CONFIG);

  double mse_x = 0.0, mse_z = 0.0;
  CHECK(cn_calibrate(exp, dir, &mse_x, &mse_z) == CN_OK);
  CHECK(mse_x > 0.0);
  CHECK(mse_z > 0.0);

  CHECK(cn_train(exp, "causal", dir) == CN_OK);
  CHECK(cn_train(exp, "biased", dir) == CN_OK);
  const std::string causal = std::string(dir) + "/model_causal.ckpt";
  const std::string biased = std::string(dir) + "/model_biased.ckpt";
  CHECK(cn_evaluate(exp, causal.c_str(), biased.c_str(), dir) == CN_OK);
  CHECK(count_lines(std::string(dir) + "/results.csv") == 6);  // header + 5 models

  // missing checkpoint is a runtime failure, not a crash
  CHECK(cn_evaluate(exp, "/tmp/nope.ckpt", biased.c_str(), dir) == CN_ERR_RUNTIME);
  cn_experiment_destroy(exp);
}

TEST_CASE("gradcheck reports a small worst-case error") {
  char buf[4096] = {};
  double worst = 1.0;
  CHECK(cn_gradcheck(buf, sizeof buf, &worst) == CN_OK);
  CHECK(worst < 1e-4);
  CHECK(std::strstr(buf, "conv") != nullptr);
}
