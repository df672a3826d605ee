#pragma once

// The dual-task architecture: 4x(3x3 conv -> ReLU -> 2x2 maxpool) ->
// flatten -> 3x(dense -> ReLU -> dropout) -> dense to N_k activations.
// The treatment indicator is concatenated to the activations and an affine
// head produces y_hat, so the last layer is literally a linear regression.

#include <cstdint>
#include <string>
#include <vector>

#include "adam.hpp"
#include "errors.hpp"
#include "ols.hpp"
#include "tensor.hpp"

namespace cn::model {

enum class Mode { causal, biased, calibrate };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::causal: return "causal";
    case Mode::biased: return "biased";
    default: return "calibrate";
  }
}

struct NetConfig {
  int conv_layers = 4;
  int conv_channels = 16;
  std::vector<int> fc_sizes{144, 144, 12};
  int head_width = 6;  // N_k
  double dropout_p = 0.25;
  int input_size = 51;
  Mode mode = Mode::causal;

  // spatial chain: same-padding conv keeps size, 2x2 pool floors it
  int flatten_size() const {
    int s = input_size;
    for (int i = 0; i < conv_layers; ++i) s /= 2;
    return conv_channels * s * s;
  }

  void validate() const {
    if (conv_layers < 1 || conv_channels < 1 || head_width < 1)
      throw ConfigError("net: bad architecture sizes");
    if (mode == Mode::causal && head_width < 2)
      throw ConfigError("net: causal mode needs head_width >= 2");
    if (flatten_size() < 1) throw ConfigError("net: input too small for conv stack");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("net: bad dropout_p");
  }
};

struct LossBreakdown {
  double l_y = 0.0, l_x = 0.0, l_reg = 0.0, total = 0.0;
};

template <class T>
class CausalNet {
 public:
  struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> val;
  };

  NetConfig cfg;
  std::vector<Param> params;

  CausalNet(NetConfig c, std::uint64_t init_seed) : cfg(std::move(c)) {
    cfg.validate();
    const int C = cfg.conv_channels;
    int in_ch = 1;
    for (int l = 0; l < cfg.conv_layers; ++l) {
      add_param("conv" + std::to_string(l) + "_w", {C, in_ch, 3, 3}, in_ch * 9, init_seed);
      add_param("conv" + std::to_string(l) + "_b", {C}, 0, init_seed);
      in_ch = C;
    }
    int width = cfg.flatten_size();
    for (std::size_t l = 0; l < cfg.fc_sizes.size(); ++l) {
      add_param("fc" + std::to_string(l) + "_w", {width, cfg.fc_sizes[l]}, width, init_seed);
      add_param("fc" + std::to_string(l) + "_b", {cfg.fc_sizes[l]}, 0, init_seed);
      width = cfg.fc_sizes[l];
    }
    add_param("act_w", {width, cfg.head_width}, width, init_seed);
    add_param("act_b", {cfg.head_width}, 0, init_seed);
    if (cfg.mode == Mode::calibrate) {
      add_param("head_w", {cfg.head_width, 2}, cfg.head_width, init_seed);
      add_param("head_b", {2}, 0, init_seed);
    } else {
      add_param("head_w", {cfg.head_width + 1, 1}, cfg.head_width + 1, init_seed);
      add_param("head_b", {1}, 0, init_seed);
    }
  }

  struct Forward {
    int output = -1;       // y_hat (m x 1) in causal/biased; m x 2 in calibrate
    int activations = -1;  // m x head_width, pre-head (feeds the y head)
    // Dropout-free twin of the activations, sharing the same parameter
    // leaves. The disentanglement terms are defined on these: dropout noise
    // masks linear predictability within a batch, so measuring L_x / L_reg
    // on the dropped path lets a collider leak survive in the clean
    // representation. Equals `activations` outside causal training.
    int activations_disc = -1;
    std::vector<int> param_refs;
  };

  // images: m x input_size^2 row-major, already normalized.
  Forward forward(ad::Tape<T>& tape, const std::vector<T>& images, int m,
                  const std::vector<T>& t, bool train, std::uint64_t step_seed) const {
    const int s = cfg.input_size;
    if (images.size() != static_cast<std::size_t>(m) * s * s)
      throw RuntimeError("forward: image batch shape mismatch");
    if (cfg.mode != Mode::calibrate && t.size() != static_cast<std::size_t>(m))
      throw RuntimeError("forward: treatment vector shape mismatch");

    Forward f;
    for (const Param& p : params) f.param_refs.push_back(tape.leaf(p.shape, p.val));
    const int img_leaf = tape.leaf({m, 1, s, s}, images);

    const auto trunk = [&](bool with_dropout) {
      int h = img_leaf;
      std::size_t pi = 0;
      for (int l = 0; l < cfg.conv_layers; ++l) {
        h = tape.conv2d_3x3(h, f.param_refs[pi], f.param_refs[pi + 1]);
        pi += 2;
        h = tape.relu(h);
        h = tape.maxpool2x2(h);
      }
      h = tape.flatten(h);
      for (std::size_t l = 0; l < cfg.fc_sizes.size(); ++l) {
        h = tape.dense(h, f.param_refs[pi], f.param_refs[pi + 1]);
        pi += 2;
        h = tape.relu(h);
        h = tape.dropout(h, cfg.dropout_p, rng::splitmix64(step_seed ^ (0x1000ULL + l)),
                         with_dropout);
      }
      int a = tape.dense(h, f.param_refs[pi], f.param_refs[pi + 1]);
      return a;
    };

    f.activations = trunk(train);
    const std::size_t pi = params.size() - 2;  // head weights follow the trunk's
    if (cfg.mode == Mode::calibrate) {
      f.output = tape.dense(f.activations, f.param_refs[pi], f.param_refs[pi + 1]);
    } else {
      int t_col = tape.leaf({m, 1}, t);
      int at = tape.concat_cols(f.activations, t_col);
      f.output = tape.dense(at, f.param_refs[pi], f.param_refs[pi + 1]);  // m x 1
    }
    f.activations_disc =
        (train && cfg.mode == Mode::causal) ? trunk(false) : f.activations;
    return f;
  }

  struct LossRefs {
    int l_y = -1, l_x = -1, l_reg = -1, total = -1;
  };

  // y: outcome targets. x: collider targets (causal) or the second target
  // in calibrate mode (y carries the first). Biased mode ignores x.
  // frozen_reg, when given, supplies the L_reg coefficients (intercept
  // first) instead of the per-batch fit; gradient checks use this to hold
  // beta^reg fixed across finite-difference evaluations.
  LossRefs loss_total(ad::Tape<T>& tape, const Forward& f, const std::vector<T>& y,
                      const std::vector<T>& x,
                      const std::vector<double>* frozen_reg = nullptr) const {
    const int m = tape.at(f.activations).shape[0];
    LossRefs lr;
    if (cfg.mode == Mode::calibrate) {
      int px = tape.slice_cols(f.output, 0, 1);
      int pz = tape.slice_cols(f.output, 1, 2);
      lr.l_y = tape.mse(px, tape.leaf({m, 1}, y));
      lr.l_x = tape.mse(pz, tape.leaf({m, 1}, x));
      lr.total = tape.add(lr.l_y, lr.l_x);
      return lr;
    }
    int y_leaf = tape.leaf({m}, y);
    lr.l_y = tape.mse(f.output, y_leaf);
    if (cfg.mode == Mode::biased) {
      lr.total = lr.l_y;
      return lr;
    }
    if (m < 8) throw RuntimeError("loss_total: causal mode needs batch size >= 8");

    int x_leaf = tape.leaf({m}, x);
    int a1 = tape.slice_cols(f.activations_disc, 0, 1);
    lr.l_x = tape.mse(a1, x_leaf);

    // Per-batch OLS of x on {a2..aNk}. The coefficients are recomputed each
    // step but held constant in the backward pass: the gradient flows through
    // the affine prediction only, not through the normal-equations solve.
    const int k = cfg.head_width - 1;
    int a_rest = tape.slice_cols(f.activations_disc, 1, cfg.head_width);
    std::vector<double> xt(m);
    for (int i = 0; i < m; ++i) xt[i] = static_cast<double>(x[i]);
    std::vector<double> coeffs;
    if (frozen_reg) {
      if (frozen_reg->size() != static_cast<std::size_t>(k) + 1)
        throw RuntimeError("loss_total: frozen_reg size mismatch");
      coeffs = *frozen_reg;
    } else {
      std::vector<double> design(static_cast<std::size_t>(m) * k);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
          design[i * k + j] = static_cast<double>(tape.at(a_rest).val[i * k + j]);
      coeffs = ols::fit(design, m, k, xt).coefficients;
    }
    std::vector<T> w(k);
    for (int j = 0; j < k; ++j) w[j] = static_cast<T>(coeffs[j + 1]);
    int xhat = tape.linear_const(a_rest, w, static_cast<T>(coeffs[0]));
    int mse_reg = tape.mse(xhat, x_leaf);

    double xbar = 0.0;
    for (int i = 0; i < m; ++i) xbar += xt[i];
    xbar /= m;
    double mse_mean = 0.0;
    for (int i = 0; i < m; ++i) mse_mean += (xt[i] - xbar) * (xt[i] - xbar);
    mse_mean /= m;

    lr.l_reg = tape.relu(tape.sub_from_const(static_cast<T>(mse_mean), mse_reg));
    lr.total = tape.add(tape.add(lr.l_y, lr.l_x), lr.l_reg);
    return lr;
  }

  LossBreakdown breakdown(const ad::Tape<T>& tape, const LossRefs& lr) const {
    LossBreakdown b;
    b.l_y = lr.l_y >= 0 ? static_cast<double>(tape.at(lr.l_y).val[0]) : 0.0;
    b.l_x = lr.l_x >= 0 ? static_cast<double>(tape.at(lr.l_x).val[0]) : 0.0;
    b.l_reg = lr.l_reg >= 0 ? static_cast<double>(tape.at(lr.l_reg).val[0]) : 0.0;
    b.total = static_cast<double>(tape.at(lr.total).val[0]);
    return b;
  }

  // (beta_0, beta_t, beta_1..beta_Nk) of the affine head.
  std::vector<double> head_coeffs() const {
    const Param& w = params[params.size() - 2];
    const Param& b = params.back();
    std::vector<double> out;
    out.push_back(static_cast<double>(b.val[0]));
    out.push_back(static_cast<double>(w.val[cfg.head_width]));  // t column is last
    for (int j = 0; j < cfg.head_width; ++j)
      out.push_back(static_cast<double>(w.val[j]));
    return out;
  }

  // Accumulate tape gradients back into caller-owned buffers (one per param).
  void collect_grads(const ad::Tape<T>& tape, const Forward& f,
                     std::vector<std::vector<T>>& grads) const {
    grads.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      grads[i] = tape.at(f.param_refs[i]).grad;
  }

 private:
  void add_param(std::string name, std::vector<int> shape, int fan_in,
                 std::uint64_t seed) {
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.val.assign(ad::shape_numel(p.shape), T(0));
    if (fan_in > 0) {  // fan-in scaled normal for weights, zeros for biases
      rng::Stream s(seed, params.size());
      const double sd = std::sqrt(2.0 / fan_in);
      for (T& v : p.val) v = static_cast<T>(s.next_normal(0.0, sd));
    }
    params.push_back(std::move(p));
  }
};

}  // namespace cn::model
