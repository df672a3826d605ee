#include "pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace cn::pipe {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config ------------------------------------------------------------------

void ExperimentConfig::validate() const {
  scm_params.validate();
  if (n_train < static_cast<std::size_t>(batch_size) ||
      n_val < static_cast<std::size_t>(batch_size))
    throw ConfigError("config: n_train and n_val must be >= batch_size");
  if (pool_size < 1) throw ConfigError("config: pool_size must be >= 1");
  if (batch_size < 8) throw ConfigError("config: batch_size must be >= 8");
  if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
  if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("config: patience must be >= 0");
  if (image_size < 16 || image_size > img::kImageSize)
    throw ConfigError("config: image_size out of range [16, 100]");
  if (seeds.pool_train == seeds.pool_val)
    throw ConfigError("config: train/val pool seeds must be disjoint");
}

std::string ExperimentConfig::to_json() const {
  char buf[2048];
  std::snprintf(
      buf, sizeof(buf),
      "{\n"
      "  \"scm\": {\"sd_u1\": %.9g, \"sd_u2\": %.9g, \"sd_z\": %.9g, \"sd_x\": %.9g,\n"
      "          \"t_slope\": %.9g, \"t_offset\": %.9g, \"t_noise_sd\": %.9g,\n"
      "          \"y_treat_coef\": %.9g, \"y_z_coef\": %.9g, \"y_u1_coef\": %.9g,\n"
      "          \"y_offset\": %.9g, \"y_noise_sd\": %.9g},\n"
      "  \"n_train\": %zu,\n  \"n_val\": %zu,\n  \"pool_size\": %zu,\n"
      "  \"batch_size\": %d,\n  \"lr\": %.9g,\n  \"max_epochs\": %d,\n"
      "  \"patience\": %d,\n  \"image_size\": %d,\n  \"model_mode\": \"%s\",\n"
      "  \"seeds\": {\"scm\": %llu, \"pool_train\": %llu, \"pool_val\": %llu,\n"
      "            \"init\": %llu, \"train\": %llu, \"noise\": %llu}\n"
      "}\n",
      scm_params.sd_u1, scm_params.sd_u2, scm_params.sd_z, scm_params.sd_x,
      scm_params.t_slope, scm_params.t_offset, scm_params.t_noise_sd,
      scm_params.y_treat_coef, scm_params.y_z_coef, scm_params.y_u1_coef,
      scm_params.y_offset, scm_params.y_noise_sd, n_train, n_val, pool_size,
      batch_size, lr, max_epochs, patience, image_size, model::mode_name(model_mode),
      static_cast<unsigned long long>(seeds.scm),
      static_cast<unsigned long long>(seeds.pool_train),
      static_cast<unsigned long long>(seeds.pool_val),
      static_cast<unsigned long long>(seeds.init),
      static_cast<unsigned long long>(seeds.train),
      static_cast<unsigned long long>(seeds.noise));
  return buf;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (j.contains("scm")) {
      const json& s = j["scm"];
      auto get = [&s](const char* k, double& v) {
        if (s.contains(k)) v = s[k].get<double>();
      };
      get("sd_u1", c.scm_params.sd_u1);
      get("sd_u2", c.scm_params.sd_u2);
      get("sd_z", c.scm_params.sd_z);
      get("sd_x", c.scm_params.sd_x);
      get("t_slope", c.scm_params.t_slope);
      get("t_offset", c.scm_params.t_offset);
      get("t_noise_sd", c.scm_params.t_noise_sd);
      get("y_treat_coef", c.scm_params.y_treat_coef);
      get("y_z_coef", c.scm_params.y_z_coef);
      get("y_u1_coef", c.scm_params.y_u1_coef);
      get("y_offset", c.scm_params.y_offset);
      get("y_noise_sd", c.scm_params.y_noise_sd);
    }
    if (j.contains("n_train")) c.n_train = j["n_train"].get<std::size_t>();
    if (j.contains("n_val")) c.n_val = j["n_val"].get<std::size_t>();
    if (j.contains("pool_size")) c.pool_size = j["pool_size"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("patience")) c.patience = j["patience"].get<int>();
    if (j.contains("image_size")) c.image_size = j["image_size"].get<int>();
    if (j.contains("model_mode")) {
      const std::string m = j["model_mode"].get<std::string>();
      if (m == "causal")
        c.model_mode = model::Mode::causal;
      else if (m == "biased")
        c.model_mode = model::Mode::biased;
      else
        throw ConfigError("config: model_mode must be causal or biased");
    }
    if (j.contains("seeds")) {
      const json& s = j["seeds"];
      auto get = [&s](const char* k, std::uint64_t& v) {
        if (s.contains(k)) v = s[k].get<std::uint64_t>();
      };
      get("scm", c.seeds.scm);
      get("pool_train", c.seeds.pool_train);
      get("pool_val", c.seeds.pool_val);
      get("init", c.seeds.init);
      get("train", c.seeds.train);
      get("noise", c.seeds.noise);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: bad field: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::content_hash() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(io::fnv1a(to_json())));
  return buf;
}

ExperimentConfig ExperimentConfig::for_replicate(int r) const {
  ExperimentConfig c = *this;
  const std::uint64_t off = rng::splitmix64(0xC0F0ULL + static_cast<std::uint64_t>(r));
  c.seeds.scm += off;
  c.seeds.pool_train += off;
  c.seeds.pool_val += off;
  c.seeds.init += off;
  c.seeds.train += off;
  c.seeds.noise += off;
  return c;
}

// --- dataset -----------------------------------------------------------------

namespace {

Dataset match_cohort(const scm::Cohort& cohort, img::ImagePool pool) {
  Dataset ds;
  ds.samples.reserve(cohort.subjects.size());
  for (const scm::Subject& s : cohort.subjects) {
    Sample smp;
    smp.image_id = img::match_image(pool, s.x, s.z);
    smp.t = s.t;
    smp.y = s.y;
    smp.x = s.x;
    smp.z = s.z;
    ds.samples.push_back(smp);
  }
  ds.pool = std::move(pool);
  return ds;
}

}  // namespace

Datasets assemble_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  const scm::Cohort train_cohort =
      scm::sample_cohort(cfg.scm_params, cfg.n_train, cfg.seeds.scm);
  const scm::Cohort val_cohort =
      scm::sample_cohort(cfg.scm_params, cfg.n_val, rng::splitmix64(cfg.seeds.scm) + 1);
  Datasets d;
  d.train = match_cohort(train_cohort, img::build_pool(cfg.pool_size, cfg.seeds.pool_train));
  d.val = match_cohort(val_cohort, img::build_pool(cfg.pool_size, cfg.seeds.pool_val));
  return d;
}

// --- training ----------------------------------------------------------------

namespace {

struct Batch {
  std::vector<float> images;
  std::vector<float> t, y, x, z;
  int m = 0;
};

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& idx,
                 std::size_t lo, std::size_t hi, int crop, bool random_aug,
                 std::uint64_t crop_seed) {
  Batch b;
  b.m = static_cast<int>(hi - lo);
  b.images.reserve(static_cast<std::size_t>(b.m) * crop * crop);
  img::CropSpec spec;
  spec.size = crop;
  spec.mode = random_aug ? img::CropSpec::Mode::random : img::CropSpec::Mode::center;
  for (std::size_t i = lo; i < hi; ++i) {
    const Sample& s = ds.samples[idx[i]];
    const auto px = img::crop_and_augment(ds.pool.images[s.image_id], spec,
                                          rng::splitmix64(crop_seed ^ idx[i]));
    b.images.insert(b.images.end(), px.begin(), px.end());
    b.t.push_back(static_cast<float>(s.t));
    b.y.push_back(static_cast<float>(s.y));
    b.x.push_back(static_cast<float>(s.x));
    b.z.push_back(static_cast<float>(s.z));
  }
  return b;
}

// loss targets by mode: calibrate trains against (x, z), the others against y.
model::LossBreakdown run_batch(const model::CausalNet<float>& net, const Batch& b,
                               bool train_mode, std::uint64_t step_seed,
                               std::vector<std::vector<float>>* grads_out) {
  ad::Tape<float> tape;
  const auto fwd = net.forward(tape, b.images, b.m, b.t, train_mode, step_seed);
  const auto lr = net.cfg.mode == model::Mode::calibrate
                      ? net.loss_total(tape, fwd, b.x, b.z)
                      : net.loss_total(tape, fwd, b.y, b.x);
  if (grads_out) {
    tape.backward(lr.total);
    net.collect_grads(tape, fwd, *grads_out);
  }
  return net.breakdown(tape, lr);
}

model::LossBreakdown weighted_eval(const model::CausalNet<float>& net, const Dataset& ds,
                                   int crop, int batch_size) {
  std::vector<std::size_t> idx(ds.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  model::LossBreakdown acc;
  std::size_t used = 0;
  for (std::size_t lo = 0; lo < idx.size(); lo += batch_size) {
    std::size_t hi = std::min(idx.size(), lo + batch_size);
    if (hi - lo < 8 && lo > 0) break;  // drop a tiny tail batch
    Batch b = make_batch(ds, idx, lo, hi, crop, false, 0);
    const auto l = run_batch(net, b, false, 0, nullptr);
    acc.l_y += l.l_y * b.m;
    acc.l_x += l.l_x * b.m;
    acc.l_reg += l.l_reg * b.m;
    acc.total += l.total * b.m;
    used += b.m;
  }
  acc.l_y /= used;
  acc.l_x /= used;
  acc.l_reg /= used;
  acc.total /= used;
  return acc;
}

}  // namespace

void warm_start_trunk(model::CausalNet<float>& dst, const model::CausalNet<float>& src) {
  const auto find = [&](const std::string& name) -> const auto& {
    for (const auto& q : src.params)
      if (q.name == name) return q;
    throw RuntimeError("warm start: missing source parameter " + name);
  };
  for (auto& p : dst.params) {
    if (p.name.rfind("conv", 0) != 0 && p.name.rfind("fc", 0) != 0) continue;
    const auto& q = find(p.name);
    if (q.shape != p.shape) throw RuntimeError("warm start: trunk shape mismatch");
    p.val = q.val;
  }
  if (src.cfg.mode != model::Mode::calibrate || dst.cfg.mode != model::Mode::causal)
    return;

  // Compose the calibration run's x- and z-readouts into the first two
  // activation columns: a1 starts as the best available x estimate, a2 as
  // the z estimate, and the remaining columns near zero. Starting at a
  // disentangled configuration matters because the hinge's gradient is
  // proportional to the in-batch residual — once a collider leak is strong
  // enough to be fitted exactly, the penalty can no longer remove it.
  const auto& A = find("act_w");      // width x 6
  const auto& Ab = find("act_b");     // 6
  const auto& H = find("head_w");     // 6 x 2 (x, z readout columns)
  const auto& Hb = find("head_b");    // 2
  const int nk = dst.cfg.head_width;
  const int width = A.shape[0];
  auto& W = dst.params[dst.params.size() - 4];  // act_w
  auto& b = dst.params[dst.params.size() - 3];  // act_b
  if (W.shape != A.shape) throw RuntimeError("warm start: activation shape mismatch");
  for (int c = 0; c < nk; ++c) {
    if (c < 2) {
      for (int r = 0; r < width; ++r) {
        float acc = 0.0f;
        for (int j = 0; j < nk; ++j) acc += A.val[r * nk + j] * H.val[j * 2 + c];
        W.val[r * nk + c] = acc;
      }
      float bacc = Hb.val[c];
      for (int j = 0; j < nk; ++j) bacc += Ab.val[j] * H.val[j * 2 + c];
      b.val[c] = bacc;
    } else {
      // Exactly zero, not merely scaled down: random mixes of the
      // calibration trunk's features are dominated by its x- and z-readout
      // directions, and linear predictability is scale-invariant, so scaled
      // random columns would start with a near-perfect collider leak. With
      // a1 already feeding the collider to the outcome head penalty-free,
      // zeroed spare columns leave no incentive to acquire it.
      for (int r = 0; r < width; ++r) W.val[r * nk + c] = 0.0f;
      b.val[c] = 0.0f;
    }
  }
}

TrainResult train(const ExperimentConfig& cfg, const Datasets& data, model::Mode mode,
                  const model::CausalNet<float>* warm) {
  cfg.validate();
  model::NetConfig nc;
  nc.input_size = cfg.image_size;
  nc.mode = mode;
  model::CausalNet<float> net(nc, cfg.seeds.init);
  if (warm) {
    warm_start_trunk(net, *warm);
    if (mode == model::Mode::causal) {
      // Fit the outcome head to its least-squares optimum given the
      // warm-started activations. With a random head, the early residual is
      // dominated by the collider and the prognostic factor, and the first
      // epochs of Adam steps grow those into the spare activation columns
      // faster than the hinge can police — an optimal head leaves no
      // image-recoverable signal in the residual from the first step.
      const Activations tr = extract_activations(net, data.train, cfg.image_size);
      const int k = net.cfg.head_width;
      std::vector<double> design;
      design.reserve(tr.n * (k + 1));
      for (std::size_t i = 0; i < tr.n; ++i) {
        for (int j = 0; j < k; ++j) design.push_back(tr.a[i * k + j]);
        design.push_back(tr.t[i]);
      }
      const auto fit =
          ols::fit(design, tr.n, static_cast<std::size_t>(k) + 1, tr.y);
      auto& hw = net.params[net.params.size() - 2];
      auto& hb = net.params[net.params.size() - 1];
      for (int j = 0; j <= k; ++j)
        hw.val[j] = static_cast<float>(fit.coefficients[j + 1]);
      hb.val[0] = static_cast<float>(fit.coefficients[0]);
    }
  }

  ad::AdamState<float> opt;
  opt.lr = cfg.lr;

  TrainResult res{std::move(net), {}, 0, std::numeric_limits<double>::infinity()};
  std::vector<std::vector<float>> best_params;
  int since_best = 0;

  std::vector<std::size_t> idx(data.train.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // deterministic Fisher-Yates reshuffle per epoch
    rng::Stream shuf(cfg.seeds.train, 0x73687566ULL + epoch);
    for (std::size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[static_cast<std::size_t>(shuf.next_int(0, static_cast<int64_t>(i)))]);

    model::LossBreakdown tr_acc;
    std::size_t used = 0;
    const std::uint64_t epoch_seed = rng::splitmix64(cfg.seeds.train + 0x65706fULL) + epoch;
    int batch_no = 0;
    for (std::size_t lo = 0; lo + 8 <= idx.size(); lo += cfg.batch_size, ++batch_no) {
      const std::size_t hi = std::min(idx.size(), lo + cfg.batch_size);
      Batch b = make_batch(data.train, idx, lo, hi, cfg.image_size, true,
                           rng::splitmix64(epoch_seed ^ 0x63726f70ULL));
      std::vector<std::vector<float>> grads;
      const auto l =
          run_batch(res.net, b, true, rng::splitmix64(epoch_seed) ^ batch_no, &grads);
      if (!std::isfinite(l.total))
        throw RuntimeError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
      std::vector<std::vector<float>*> ps;
      std::vector<const std::vector<float>*> gs;
      for (std::size_t i = 0; i < res.net.params.size(); ++i) {
        ps.push_back(&res.net.params[i].val);
        gs.push_back(&grads[i]);
      }
      ad::adam_step(ps, gs, opt);
      tr_acc.l_y += l.l_y * b.m;
      tr_acc.l_x += l.l_x * b.m;
      tr_acc.l_reg += l.l_reg * b.m;
      tr_acc.total += l.total * b.m;
      used += b.m;
    }
    tr_acc.l_y /= used;
    tr_acc.l_x /= used;
    tr_acc.l_reg /= used;
    tr_acc.total /= used;

    const auto val = weighted_eval(res.net, data.val, cfg.image_size, cfg.batch_size);
    res.log.push_back({epoch, tr_acc, val});

    if (val.total < res.best_val_total) {
      res.best_val_total = val.total;
      res.best_epoch = epoch;
      since_best = 0;
      best_params.clear();
      for (const auto& p : res.net.params) best_params.push_back(p.val);
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  if (!best_params.empty())
    for (std::size_t i = 0; i < res.net.params.size(); ++i)
      res.net.params[i].val = best_params[i];
  return res;
}

void save_net(const model::CausalNet<float>& net, const std::string& path) {
  std::vector<io::NamedTensor> ts;
  for (const auto& p : net.params) {
    io::NamedTensor t;
    t.name = p.name;
    t.shape = p.shape;
    t.data.assign(p.val.begin(), p.val.end());
    ts.push_back(std::move(t));
  }
  io::save_checkpoint(path, ts);
}

model::CausalNet<float> load_net(const std::string& path, const ExperimentConfig& cfg,
                                 model::Mode mode) {
  model::NetConfig nc;
  nc.input_size = cfg.image_size;
  nc.mode = mode;
  model::CausalNet<float> net(nc, 0);
  const auto ts = io::load_checkpoint(path);
  if (ts.size() != net.params.size())
    throw RuntimeError("checkpoint: tensor count mismatch in " + path);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i].name != net.params[i].name || ts[i].shape != net.params[i].shape)
      throw RuntimeError("checkpoint: tensor " + ts[i].name + " mismatch in " + path);
    net.params[i].val.assign(ts[i].data.begin(), ts[i].data.end());
  }
  return net;
}

void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot open " + path);
  f << "epoch,train_l_y,train_l_x,train_l_reg,train_total,val_l_y,val_l_x,val_l_reg,"
       "val_total\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.epoch, r.train.l_y, r.train.l_x, r.train.l_reg, r.train.total,
                  r.val.l_y, r.val.l_x, r.val.l_reg, r.val.total);
    f << buf;
  }
}

// --- calibration & baselines --------------------------------------------------

NoiseCalibration calibrate_noise(const ExperimentConfig& cfg, const Datasets& data,
                                 model::CausalNet<float>* net_out) {
  ExperimentConfig c = cfg;
  c.seeds.init = rng::splitmix64(cfg.seeds.init ^ 0xCA11ULL);
  c.seeds.train = rng::splitmix64(cfg.seeds.train ^ 0xCA11ULL);
  // the calibration MSEs parameterize the baselines' noisy views, so an
  // undertrained run would overstate measurement noise; give it extra room
  c.patience = cfg.patience * 2;
  c.max_epochs = cfg.max_epochs + cfg.max_epochs / 2;
  const TrainResult r = train(c, data, model::Mode::calibrate);
  // measure each factor the way all models in the results table are measured:
  // an OLS refit on the run's validation activations. The head outputs
  // understate what the trunk measured — six features carry more of each
  // factor than a single readout — and the noisy views should reflect the
  // best measurement the representation attains.
  const Activations va = extract_activations(r.net, data.val, cfg.image_size);
  NoiseCalibration out;
  out.mse_x = ols::fit(va.a, va.n, static_cast<std::size_t>(va.k), va.x).residual_mse;
  out.mse_z = ols::fit(va.a, va.n, static_cast<std::size_t>(va.k), va.z).residual_mse;
  if (net_out) *net_out = r.net;
  return out;
}

namespace {

struct NoisyCohort {
  std::vector<double> t, xp, zp, y;
};

NoisyCohort add_noise(const std::vector<Sample>& ss, const NoiseCalibration& c,
                      std::uint64_t seed, std::uint64_t stream) {
  rng::Stream s(seed, stream);
  NoisyCohort out;
  const double sx = std::sqrt(c.mse_x), sz = std::sqrt(c.mse_z);
  for (const Sample& smp : ss) {
    out.t.push_back(smp.t);
    out.xp.push_back(smp.x + sx * s.next_normal());
    out.zp.push_back(smp.z + sz * s.next_normal());
    out.y.push_back(smp.y);
  }
  return out;
}

double mse_of(const std::vector<double>& pred, const std::vector<double>& truth) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

}  // namespace

std::vector<ResultRow> run_baselines(const std::vector<Sample>& train,
                                     const std::vector<Sample>& val,
                                     const NoiseCalibration& calib, std::uint64_t seed) {
  const NoisyCohort tr = add_noise(train, calib, seed, 1);
  const NoisyCohort va = add_noise(val, calib, seed, 2);
  const std::size_t nt = tr.t.size(), nv = va.t.size();

  auto build = [](const NoisyCohort& c, std::size_t n, bool with_x, bool with_z) {
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
      d.push_back(c.t[i]);
      if (with_x) d.push_back(c.xp[i]);
      if (with_z) d.push_back(c.zp[i]);
    }
    return d;
  };

  std::vector<ResultRow> rows;
  struct Spec {
    const char* model;
    const char* vars;
    bool with_x, with_z;
  };
  const Spec specs[3] = {{"Regression", "t", false, false},
                         {"Regression", "t,x',z'", true, true},
                         {"Regression*", "t,z'", false, true}};
  for (const Spec& sp : specs) {
    const std::size_t p = 1 + sp.with_x + sp.with_z;
    const auto fit = ols::fit(build(tr, nt, sp.with_x, sp.with_z), nt, p, tr.y);
    const auto pred = ols::predict(fit, build(va, nv, sp.with_x, sp.with_z), nv);
    rows.push_back({sp.model, sp.vars, mse_of(pred, va.y), fit.coefficients[1]});
  }
  return rows;
}

// --- network evaluation --------------------------------------------------------

Activations extract_activations(const model::CausalNet<float>& net, const Dataset& ds,
                                int crop_size) {
  Activations out;
  out.n = ds.samples.size();
  out.k = net.cfg.head_width;
  std::vector<std::size_t> idx(out.n);
  for (std::size_t i = 0; i < out.n; ++i) idx[i] = i;
  const int bs = 50;
  for (std::size_t lo = 0; lo < out.n; lo += bs) {
    const std::size_t hi = std::min(out.n, lo + bs);
    Batch b = make_batch(ds, idx, lo, hi, crop_size, false, 0);
    ad::Tape<float> tape;
    const auto fwd = net.forward(tape, b.images, b.m, b.t, false, 0);
    const auto& act = tape.at(fwd.activations);
    for (int i = 0; i < b.m; ++i) {
      for (int j = 0; j < out.k; ++j)
        out.a.push_back(static_cast<double>(act.val[i * out.k + j]));
      out.t.push_back(b.t[i]);
      out.y.push_back(b.y[i]);
      out.x.push_back(b.x[i]);
      out.z.push_back(b.z[i]);
    }
  }
  return out;
}

namespace {

// columns [c0, k) of the activation matrix
std::vector<double> act_slice(const Activations& a, int c0) {
  std::vector<double> out;
  for (std::size_t i = 0; i < a.n; ++i)
    for (int j = c0; j < a.k; ++j) out.push_back(a.a[i * a.k + j]);
  return out;
}

NetEval eval_one(const model::CausalNet<float>& net, const Datasets& data,
                 int crop_size, bool drop_a1, const char* name, const char* vars) {
  const Activations tr = extract_activations(net, data.train, crop_size);
  const Activations va = extract_activations(net, data.val, crop_size);
  const int c0 = drop_a1 ? 1 : 0;
  const int k = va.k - c0;

  NetEval e;
  // primary protocol: refit on validation activations, in-sample metrics
  const auto refit = ols::ate_from_refit(act_slice(va, c0), va.n, k, va.t, va.y);
  e.row = {name, vars, refit.mse_y, refit.ate};
  e.head_beta_t = net.head_coeffs()[1];

  // logged variant: fit on train activations, evaluate on validation
  const auto train_fit = ols::ate_from_refit(act_slice(tr, c0), tr.n, k, tr.t, tr.y);
  std::vector<double> vdesign;
  for (std::size_t i = 0; i < va.n; ++i) {
    for (int j = c0; j < va.k; ++j) vdesign.push_back(va.a[i * va.k + j]);
    vdesign.push_back(va.t[i]);
  }
  e.ate_trainfit = train_fit.ate;
  e.mse_trainfit = mse_of(ols::predict(train_fit.fit, vdesign, va.n), va.y);

  // disentanglement diagnostics over validation
  e.r2_x_on_rest = ols::fit(act_slice(va, 1), va.n, va.k - 1, va.x).r_squared;
  std::vector<double> a1(va.n);
  for (std::size_t i = 0; i < va.n; ++i) a1[i] = va.a[i * va.k + 0];
  e.mse_a1_x = mse_of(a1, va.x);
  return e;
}

}  // namespace

std::vector<NetEval> evaluate_nets(const model::CausalNet<float>& causal_net,
                                   const model::CausalNet<float>& biased_net,
                                   const Datasets& data, int crop_size) {
  return {eval_one(biased_net, data, crop_size, false, "BiasedNet", "t,image"),
          eval_one(causal_net, data, crop_size, true, "CausalNet", "t,a_j (j>1)")};
}

// --- reporting -----------------------------------------------------------------

void make_report(const std::string& dir, const std::vector<ResultRow>& rows,
                 const ExperimentConfig& cfg, const NoiseCalibration& calib,
                 const std::vector<NetEval>& net_extras, double oracle_ate,
                 double elapsed_seconds) {
  if (rows.size() != 5) throw RuntimeError("make_report: expected five rows");
  fs::create_directories(dir);
  std::ofstream csv(dir + "/results.csv");
  if (!csv) throw RuntimeError("cannot open " + dir + "/results.csv");
  csv << "model,variables,mse_y,ate\n";
  char buf[256];
  for (const ResultRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,\"%s\",%.6f,%.6f\n", r.model.c_str(),
                  r.variables.c_str(), r.mse_y, r.ate);
    csv << buf;
  }

  json manifest;
  manifest["config"] = json::parse(cfg.to_json());
  manifest["config_hash"] = cfg.content_hash();
  manifest["calibration"] = {{"mse_x", calib.mse_x}, {"mse_z", calib.mse_z}};
  manifest["oracle_interventional_ate"] = oracle_ate;
  manifest["elapsed_seconds"] = elapsed_seconds;
  for (const NetEval& e : net_extras) {
    json extra = {{"head_beta_t", e.head_beta_t},
                  {"ate_trainfit_val_eval", e.ate_trainfit},
                  {"mse_trainfit_val_eval", e.mse_trainfit},
                  {"r2_x_on_rest", e.r2_x_on_rest},
                  {"mse_a1_x", e.mse_a1_x}};
    manifest["net_diagnostics"][e.row.model] = extra;
  }
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw RuntimeError("cannot open " + dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

// --- full pipeline ---------------------------------------------------------------

ReplicateResult run_replicate(const ExperimentConfig& cfg, const std::string& run_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(run_dir);

  const Datasets data = assemble_dataset(cfg);
  model::NetConfig calib_nc;
  calib_nc.input_size = cfg.image_size;
  calib_nc.mode = model::Mode::calibrate;
  model::CausalNet<float> calib_net(calib_nc, 0);
  const NoiseCalibration calib = calibrate_noise(cfg, data, &calib_net);

  ExperimentConfig biased_cfg = cfg;
  biased_cfg.seeds.init = rng::splitmix64(cfg.seeds.init ^ 0xB1A5ULL);
  biased_cfg.seeds.train = rng::splitmix64(cfg.seeds.train ^ 0xB1A5ULL);
  const TrainResult causal = train(cfg, data, model::Mode::causal, &calib_net);
  const TrainResult biased = train(biased_cfg, data, model::Mode::biased);

  save_net(causal.net, run_dir + "/model_causal.ckpt");
  save_net(biased.net, run_dir + "/model_biased.ckpt");
  write_training_log(causal.log, run_dir + "/training_log.csv");
  write_training_log(biased.log, run_dir + "/training_log_biased.csv");

  const auto evals = evaluate_nets(causal.net, biased.net, data, cfg.image_size);

  ReplicateResult rr;
  rr.calib = calib;
  rr.net_extras = evals;
  rr.rows = run_baselines(data.train.samples, data.val.samples, calib, cfg.seeds.noise);
  rr.rows.push_back(evals[0].row);  // BiasedNet
  rr.rows.push_back(evals[1].row);  // CausalNet
  rr.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double oracle = scm::interventional_ate(cfg.scm_params, 100000, cfg.seeds.scm);
  make_report(run_dir, rr.rows, cfg, calib, evals, oracle, rr.elapsed_seconds);
  return rr;
}

std::vector<ReplicateResult> reproduce(const ExperimentConfig& cfg, int replicates,
                                       int jobs, const std::string& out_dir) {
  if (replicates < 1) throw ConfigError("reproduce: replicates must be >= 1");
  if (jobs < 1) jobs = 1;
  fs::create_directories(out_dir);

  std::vector<ReplicateResult> results(replicates);
  std::vector<std::string> errors(replicates);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= replicates) return;
      try {
        results[r] = run_replicate(cfg.for_replicate(r),
                                   out_dir + "/rep_" + std::to_string(r));
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    }
  };
  if (jobs == 1 || replicates == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < std::min(jobs, replicates); ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (int r = 0; r < replicates; ++r)
    if (!errors[r].empty())
      throw RuntimeError("replicate " + std::to_string(r) + ": " + errors[r]);

  // aggregate table: per-row means and sds across replicates
  std::ofstream csv(out_dir + "/results.csv");
  if (!csv) throw RuntimeError("cannot open " + out_dir + "/results.csv");
  csv << "model,variables,mse_y_mean,mse_y_sd,ate_mean,ate_sd\n";
  char buf[320];
  for (std::size_t row = 0; row < 5; ++row) {
    double my = 0, ma = 0, vy = 0, va = 0;
    for (const auto& rr : results) {
      my += rr.rows[row].mse_y;
      ma += rr.rows[row].ate;
    }
    my /= replicates;
    ma /= replicates;
    for (const auto& rr : results) {
      vy += (rr.rows[row].mse_y - my) * (rr.rows[row].mse_y - my);
      va += (rr.rows[row].ate - ma) * (rr.rows[row].ate - ma);
    }
    const double sy = replicates > 1 ? std::sqrt(vy / (replicates - 1)) : 0.0;
    const double sa = replicates > 1 ? std::sqrt(va / (replicates - 1)) : 0.0;
    std::snprintf(buf, sizeof(buf), "%s,\"%s\",%.6f,%.6f,%.6f,%.6f\n",
                  results[0].rows[row].model.c_str(),
                  results[0].rows[row].variables.c_str(), my, sy, ma, sa);
    csv << buf;
  }
  return results;
}

}  // namespace cn::pipe
