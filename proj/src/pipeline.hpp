#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"
#include "net.hpp"
#include "scm.hpp"

namespace cn::pipe {

struct Seeds {
  std::uint64_t scm = 11;
  std::uint64_t pool_train = 101;
  std::uint64_t pool_val = 202;
  std::uint64_t init = 303;
  std::uint64_t train = 404;
  std::uint64_t noise = 505;
};

struct ExperimentConfig {
  scm::ScmParams scm_params;
  std::size_t n_train = 3000;
  std::size_t n_val = 1000;
  std::size_t pool_size = 2609;
  int batch_size = 40;
  double lr = 0.001;
  int max_epochs = 200;
  int patience = 10;
  int image_size = img::kCropDefault;  // crop fed to the network
  model::Mode model_mode = model::Mode::causal;
  Seeds seeds;

  void validate() const;
  static ExperimentConfig from_json(const std::string& json_text);
  static ExperimentConfig defaults() { return {}; }
  std::string to_json() const;
  std::string content_hash() const;  // hex FNV-1a of the canonical JSON

  // replicate r gets shifted, mutually disjoint seed streams
  ExperimentConfig for_replicate(int r) const;
};

struct Sample {
  int image_id;
  double t, y, x, z;
};

struct Dataset {
  img::ImagePool pool;
  std::vector<Sample> samples;
};

struct Datasets {
  Dataset train, val;
};

Datasets assemble_dataset(const ExperimentConfig& cfg);

// Copies the shared trunk (conv + fc layers, matched by parameter name) from
// a trained net into a freshly initialized one; activation and head layers
// keep their fresh initialization.
void warm_start_trunk(model::CausalNet<float>& dst, const model::CausalNet<float>& src);

struct TrainLogRow {
  int epoch;
  model::LossBreakdown train, val;
};

struct TrainResult {
  model::CausalNet<float> net;
  std::vector<TrainLogRow> log;
  int best_epoch = 0;
  double best_val_total = 0.0;
};

// warm, when given, seeds the trunk weights (the dual-task run starts from
// the calibration trunk so a1 aligns with x before a leak can entrench).
TrainResult train(const ExperimentConfig& cfg, const Datasets& data, model::Mode mode,
                  const model::CausalNet<float>* warm = nullptr);

void save_net(const model::CausalNet<float>& net, const std::string& path);
model::CausalNet<float> load_net(const std::string& path, const ExperimentConfig& cfg,
                                 model::Mode mode);
void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path);

struct NoiseCalibration {
  double mse_x = 0.0, mse_z = 0.0;  // validation MSE of predicting x and z
};

// net_out, when non-null, receives the trained calibration network (used to
// warm-start the dual-task run and persisted by the C API).
NoiseCalibration calibrate_noise(const ExperimentConfig& cfg, const Datasets& data,
                                 model::CausalNet<float>* net_out = nullptr);

struct ResultRow {
  std::string model;
  std::string variables;
  double mse_y = 0.0;
  double ate = 0.0;
};

// The three tabular baselines of the results table, fitted on the training
// cohort with x', z' = x, z + noise at the calibrated variances, scored on
// the validation cohort.
std::vector<ResultRow> run_baselines(const std::vector<Sample>& train,
                                     const std::vector<Sample>& val,
                                     const NoiseCalibration& calib, std::uint64_t seed);

// Deterministic eval-mode activations over a dataset (center crops).
struct Activations {
  std::vector<double> a;  // n x head_width
  std::vector<double> t, y, x, z;
  std::size_t n = 0;
  int k = 0;
};
Activations extract_activations(const model::CausalNet<float>& net, const Dataset& ds,
                                int crop_size);

struct NetEval {
  ResultRow row;
  double head_beta_t = 0.0;        // raw head coefficient, logged
  double ate_trainfit = 0.0;       // train-fit / val-evaluate variant, logged
  double mse_trainfit = 0.0;
  double r2_x_on_rest = 0.0;       // OLS R^2 of x on {a2..aNk} over validation
  double mse_a1_x = 0.0;           // MSE of a1 vs x over validation
};

std::vector<NetEval> evaluate_nets(const model::CausalNet<float>& causal_net,
                                   const model::CausalNet<float>& biased_net,
                                   const Datasets& data, int crop_size);

void make_report(const std::string& dir, const std::vector<ResultRow>& rows,
                 const ExperimentConfig& cfg, const NoiseCalibration& calib,
                 const std::vector<NetEval>& net_extras, double oracle_ate,
                 double elapsed_seconds);

struct ReplicateResult {
  std::vector<ResultRow> rows;  // canonical five-row order
  NoiseCalibration calib;
  std::vector<NetEval> net_extras;
  double elapsed_seconds = 0.0;
};

ReplicateResult run_replicate(const ExperimentConfig& cfg, const std::string& run_dir);

// Full pipeline for k seed replicates; per-replicate reports under
// out_dir/rep_<i>/ plus an aggregate results.csv (means and sds).
std::vector<ReplicateResult> reproduce(const ExperimentConfig& cfg, int replicates,
                                       int jobs, const std::string& out_dir);

}  // namespace cn::pipe
