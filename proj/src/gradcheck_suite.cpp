#include "gradcheck_suite.hpp"

#include "net.hpp"
#include "rng.hpp"

namespace cn::ad {

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  rng::Stream s(seed, 0);
  std::vector<double> v(n);
  for (double& x : v) x = s.next_normal(0.0, sd);
  return v;
}

GradCheckReport check_conv() {
  // B=1, C=2, H=W=5, F=3
  const auto input = randn(2 * 5 * 5, 1);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int k = t.leaf({3, 2, 3, 3}, p[0]);
    int b = t.leaf({3}, p[1]);
    int in = t.leaf({1, 2, 5, 5}, input);
    int out = t.conv2d_3x3(in, k, b);
    int target = t.leaf({1, 3, 5, 5}, randn(3 * 5 * 5, 2));
    return std::make_pair(t.mse(out, target), std::vector<int>{k, b});
  };
  return grad_check("conv2d_3x3", build, {randn(3 * 2 * 9, 3, 0.5), randn(3, 4, 0.1)},
                    1e-6);
}

GradCheckReport check_dense_stack() {
  // random 4x3 -> 2 two-layer net with relu between
  const auto input = randn(4 * 3, 10);
  const auto target = randn(4 * 2, 11);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int w1 = t.leaf({3, 3}, p[0]), b1 = t.leaf({3}, p[1]);
    int w2 = t.leaf({3, 2}, p[2]), b2 = t.leaf({2}, p[3]);
    int x = t.leaf({4, 3}, input);
    int h = t.relu(t.dense(x, w1, b1));
    int o = t.dense(h, w2, b2);
    return std::make_pair(t.mse(o, t.leaf({4, 2}, target)),
                          std::vector<int>{w1, b1, w2, b2});
  };
  return grad_check("dense_relu_stack", build,
                    {randn(9, 12, 0.6), randn(3, 13, 0.1), randn(6, 14, 0.6),
                     randn(2, 15, 0.1)},
                    1e-6);
}

GradCheckReport check_maxpool() {
  const auto target = randn(1 * 2 * 2 * 2, 20);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int in = t.leaf({1, 2, 5, 5}, p[0]);  // odd size, floors to 2x2
    int out = t.maxpool2x2(in);
    return std::make_pair(t.mse(out, t.leaf({1, 2, 2, 2}, target)),
                          std::vector<int>{in});
  };
  return grad_check("maxpool2x2", build, {randn(2 * 5 * 5, 21)}, 1e-6);
}

GradCheckReport check_dropout_frozen() {
  const auto target = randn(6 * 4, 30);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int in = t.leaf({6, 4}, p[0]);
    int out = t.dropout(in, 0.25, 77, true);  // fixed seed => frozen mask
    return std::make_pair(t.mse(out, t.leaf({6, 4}, target)), std::vector<int>{in});
  };
  return grad_check("dropout_frozen_mask", build, {randn(24, 31)}, 1e-6);
}

GradCheckReport check_mse() {
  const auto target = randn(7, 40);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int pred = t.leaf({7}, p[0]);
    return std::make_pair(t.mse(pred, t.leaf({7}, target)), std::vector<int>{pred});
  };
  return grad_check("mse", build, {randn(7, 41)}, 1e-8);
}

GradCheckReport check_linear_only() {
  // exact linearity: affine graph with no nonlinearities
  const auto input = randn(5 * 3, 50);
  const auto target = randn(5, 51);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int w = t.leaf({3, 1}, p[0]), b = t.leaf({1}, p[1]);
    int x = t.leaf({5, 3}, input);
    int o = t.flatten(t.dense(x, w, b));
    return std::make_pair(t.mse(o, t.leaf({5}, target)), std::vector<int>{w, b});
  };
  return grad_check("linear_only", build, {randn(3, 52), randn(1, 53)}, 1e-9);
}

GradCheckReport check_slice_concat() {
  const auto target = randn(4 * 5, 60);
  auto build = [&](Tape<double>& t, const std::vector<std::vector<double>>& p) {
    int a = t.leaf({4, 3}, p[0]);
    int b = t.leaf({4, 2}, p[1]);
    int cat = t.concat_cols(a, b);
    int lhs = t.slice_cols(cat, 0, 2);
    int rhs = t.slice_cols(cat, 2, 5);
    int back = t.concat_cols(rhs, lhs);
    return std::make_pair(t.mse(back, t.leaf({4, 5}, target)), std::vector<int>{a, b});
  };
  return grad_check("slice_concat", build, {randn(12, 61), randn(8, 62)}, 1e-8);
}

// Full dual-task graph: small net, 16x16 inputs, batch 8, dropout masks and
// L_reg coefficients frozen across evaluations.
GradCheckReport check_full_net() {
  model::NetConfig nc;
  nc.conv_layers = 3;  // 16 -> 8 -> 4 keeps every conv input >= 3x3
  nc.conv_channels = 4;
  nc.fc_sizes = {8, 8, 6};
  nc.head_width = 6;
  nc.input_size = 16;
  nc.mode = model::Mode::causal;
  model::CausalNet<double> net(nc, 99);

  const int m = 8;
  const auto images = randn(static_cast<std::size_t>(m) * 16 * 16, 70);
  std::vector<double> t_ind(m), y(m), x(m);
  {
    rng::Stream s(71, 0);
    for (int i = 0; i < m; ++i) {
      t_ind[i] = s.next_uniform() < 0.5 ? 1.0 : 0.0;
      y[i] = s.next_normal();
      x[i] = s.next_normal();
    }
  }
  // freeze beta^reg at the values of the unperturbed graph
  std::vector<double> frozen;
  {
    Tape<double> tape;
    auto fwd = net.forward(tape, images, m, t_ind, true, 123);
    const auto& act = tape.at(fwd.activations_disc);
    const int k = nc.head_width - 1;
    std::vector<double> design(static_cast<std::size_t>(m) * k);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) design[i * k + j] = act.val[i * nc.head_width + 1 + j];
    frozen = ols::fit(design, m, k, x).coefficients;
  }

  std::vector<std::vector<double>> init;
  for (const auto& p : net.params) init.push_back(p.val);

  auto build = [&, frozen](Tape<double>& tape,
                           const std::vector<std::vector<double>>& p) {
    model::CausalNet<double> n2(nc, 0);
    for (std::size_t i = 0; i < p.size(); ++i) n2.params[i].val = p[i];
    auto fwd = n2.forward(tape, images, m, t_ind, true, 123);
    auto lr = n2.loss_total(tape, fwd, y, x, &frozen);
    return std::make_pair(lr.total, fwd.param_refs);
  };
  return grad_check("full_causalnet_loss", build, init, 1e-4);
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite() {
  return {check_conv(),   check_dense_stack(),    check_maxpool(),
          check_dropout_frozen(), check_mse(),    check_linear_only(),
          check_slice_concat(),   check_full_net()};
}

}  // namespace cn::ad
