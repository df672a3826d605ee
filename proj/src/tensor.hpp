#pragma once

// Reverse-mode autodiff tape. Nodes are appended in execution order (which
// is topological by construction); backward() walks the tape once in
// reverse. Templated on the scalar type: float for training, double for
// finite-difference gradient checks.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace cn::ad {

template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> val;
  std::vector<T> grad;  // allocated lazily, same length as val

  std::size_t size() const { return val.size(); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), T(0));
  }
};

inline std::size_t shape_numel(const std::vector<int>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

template <class T>
class Tape {
 public:
  using Ref = int;

  Tensor<T>& at(Ref r) { return nodes_[r].t; }
  const Tensor<T>& at(Ref r) const { return nodes_[r].t; }

  Ref leaf(std::vector<int> shape, const T* data) {
    Ref r = new_node(std::move(shape));
    std::copy(data, data + at(r).size(), at(r).val.begin());
    return r;
  }

  Ref leaf(std::vector<int> shape, const std::vector<T>& data) {
    return leaf(std::move(shape), data.data());
  }

  // --- layers -------------------------------------------------------------

  // Same-padding 3x3 cross-correlation. input B x C x H x W,
  // kernels F x C x 3 x 3, bias F -> B x F x H x W.
  Ref conv2d_3x3(Ref in, Ref k, Ref b);

  Ref relu(Ref in);
  Ref maxpool2x2(Ref in);                    // floor division on odd sizes
  Ref dense(Ref x, Ref w, Ref bias);         // x: m x in, w: in x out, bias: out
  Ref dropout(Ref in, double p, std::uint64_t seed, bool train);
  Ref flatten(Ref in);                       // B x C x H x W -> B x CHW
  Ref concat_cols(Ref a, Ref b);             // m x ka, m x kb -> m x (ka+kb)
  Ref slice_cols(Ref in, int c0, int c1);    // m x k -> m x (c1-c0)
  Ref linear_const(Ref x, const std::vector<T>& w, T b);  // constant affine, m x k -> m
  Ref mse(Ref pred, Ref target);             // scalar
  Ref add(Ref a, Ref b);                     // elementwise, equal shapes
  Ref sub_from_const(T c, Ref a);            // c - a, elementwise

  void backward(Ref loss) {
    if (at(loss).size() != 1) throw RuntimeError("backward: loss must be scalar");
    for (auto& n : nodes_) n.t.ensure_grad();
    at(loss).grad[0] = T(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].backward) nodes_[i].backward();
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> t;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;

  Ref new_node(std::vector<int> shape) {
    Node n;
    n.t.shape = std::move(shape);
    n.t.val.assign(shape_numel(n.t.shape), T(0));
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  void set_backward(Ref r, std::function<void()> f) {
    nodes_[r].backward = std::move(f);
  }

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<Mat>;
  using CMapM = Eigen::Map<const Mat>;
};

// --- conv ------------------------------------------------------------------

namespace detail {

// im2col for a 3x3 same-padded window: out is (C*9) x (H*W), row-major.
template <class T>
void im2col3(const T* in, int C, int H, int W, T* col) {
  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * HW;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        T* row = col + (static_cast<std::size_t>(c) * 9 + (di + 1) * 3 + (dj + 1)) * HW;
        for (int i = 0; i < H; ++i) {
          const int si = i + di;
          if (si < 0 || si >= H) {
            std::fill(row + i * W, row + (i + 1) * W, T(0));
            continue;
          }
          for (int j = 0; j < W; ++j) {
            const int sj = j + dj;
            row[i * W + j] = (sj < 0 || sj >= W) ? T(0) : plane[si * W + sj];
          }
        }
      }
  }
}

template <class T>
void col2im3_accum(const T* col, int C, int H, int W, T* out) {
  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    T* plane = out + static_cast<std::size_t>(c) * HW;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const T* row = col + (static_cast<std::size_t>(c) * 9 + (di + 1) * 3 + (dj + 1)) * HW;
        for (int i = 0; i < H; ++i) {
          const int si = i + di;
          if (si < 0 || si >= H) continue;
          for (int j = 0; j < W; ++j) {
            const int sj = j + dj;
            if (sj >= 0 && sj < W) plane[si * W + sj] += row[i * W + j];
          }
        }
      }
  }
}

}  // namespace detail

template <class T>
typename Tape<T>::Ref Tape<T>::conv2d_3x3(Ref in, Ref k, Ref b) {
  const auto& is = at(in).shape;
  const auto& ks = at(k).shape;
  if (is.size() != 4 || ks.size() != 4 || ks[2] != 3 || ks[3] != 3 || ks[1] != is[1])
    throw RuntimeError("conv2d_3x3: shape mismatch");
  const int B = is[0], C = is[1], H = is[2], W = is[3], F = ks[0];
  if (H < 3 || W < 3) throw RuntimeError("conv2d_3x3: spatial size < 3");
  if (at(b).shape != std::vector<int>{F}) throw RuntimeError("conv2d_3x3: bias shape");

  Ref out = new_node({B, F, H, W});
  const int HW = H * W, K = C * 9;
  std::vector<T> col(static_cast<std::size_t>(K) * HW);
  CMapM Wm(at(k).val.data(), F, K);
  for (int bi = 0; bi < B; ++bi) {
    detail::im2col3(at(in).val.data() + static_cast<std::size_t>(bi) * C * HW, C, H, W,
                    col.data());
    CMapM Cm(col.data(), K, HW);
    MapM Om(at(out).val.data() + static_cast<std::size_t>(bi) * F * HW, F, HW);
    Om.noalias() = Wm * Cm;
    for (int f = 0; f < F; ++f) Om.row(f).array() += at(b).val[f];
  }

  set_backward(out, [this, in, k, b, out, B, C, H, W, F]() {
    const int HW = H * W, K = C * 9;
    std::vector<T> col(static_cast<std::size_t>(K) * HW);
    std::vector<T> dcol(static_cast<std::size_t>(K) * HW);
    CMapM Wm(at(k).val.data(), F, K);
    MapM dWm(at(k).grad.data(), F, K);
    for (int bi = 0; bi < B; ++bi) {
      CMapM dOm(at(out).grad.data() + static_cast<std::size_t>(bi) * F * HW, F, HW);
      detail::im2col3(at(in).val.data() + static_cast<std::size_t>(bi) * C * HW, C, H, W,
                      col.data());
      CMapM Cm(col.data(), K, HW);
      dWm.noalias() += dOm * Cm.transpose();
      // fixed-order accumulation: Map redux order depends on buffer alignment
      for (int f = 0; f < F; ++f) {
        T acc = T(0);
        for (int q = 0; q < HW; ++q) acc += dOm(f, q);
        at(b).grad[f] += acc;
      }
      MapM dCm(dcol.data(), K, HW);
      dCm.noalias() = Wm.transpose() * dOm;
      detail::col2im3_accum(dcol.data(), C, H, W,
                            at(in).grad.data() + static_cast<std::size_t>(bi) * C * HW);
    }
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::relu(Ref in) {
  Ref out = new_node(at(in).shape);
  for (std::size_t i = 0; i < at(in).size(); ++i)
    at(out).val[i] = at(in).val[i] > T(0) ? at(in).val[i] : T(0);
  set_backward(out, [this, in, out]() {
    for (std::size_t i = 0; i < at(in).size(); ++i)
      if (at(in).val[i] > T(0)) at(in).grad[i] += at(out).grad[i];
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::maxpool2x2(Ref in) {
  const auto& is = at(in).shape;
  if (is.size() != 4) throw RuntimeError("maxpool2x2: expects 4-d input");
  const int B = is[0], C = is[1], H = is[2], W = is[3];
  const int Ho = H / 2, Wo = W / 2;
  if (Ho < 1 || Wo < 1) throw RuntimeError("maxpool2x2: spatial size < 2");
  Ref out = new_node({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int>>(at(out).size());
  const T* iv = at(in).val.data();
  T* ov = at(out).val.data();
  std::size_t o = 0;
  for (int bc = 0; bc < B * C; ++bc) {
    const T* plane = iv + static_cast<std::size_t>(bc) * H * W;
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j, ++o) {
        int best = (2 * i) * W + 2 * j;  // first-encountered index wins ties
        T bv = plane[best];
        const int cand[3] = {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j,
                             (2 * i + 1) * W + 2 * j + 1};
        for (int idx : cand)
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        ov[o] = bv;
        (*argmax)[o] = bc * H * W + best;
      }
  }
  set_backward(out, [this, in, out, argmax]() {
    for (std::size_t i = 0; i < at(out).size(); ++i)
      at(in).grad[(*argmax)[i]] += at(out).grad[i];
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::dense(Ref x, Ref w, Ref bias) {
  const auto& xs = at(x).shape;
  const auto& ws = at(w).shape;
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
    throw RuntimeError("dense: shape mismatch");
  const int m = xs[0], in = xs[1], out_dim = ws[1];
  if (at(bias).shape != std::vector<int>{out_dim}) throw RuntimeError("dense: bias shape");
  Ref out = new_node({m, out_dim});
  CMapM X(at(x).val.data(), m, in), W(at(w).val.data(), in, out_dim);
  MapM O(at(out).val.data(), m, out_dim);
  O.noalias() = X * W;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < out_dim; ++j) O(i, j) += at(bias).val[j];
  set_backward(out, [this, x, w, bias, out, m, in, out_dim]() {
    CMapM X(at(x).val.data(), m, in), W(at(w).val.data(), in, out_dim);
    CMapM dO(at(out).grad.data(), m, out_dim);
    MapM dX(at(x).grad.data(), m, in), dW(at(w).grad.data(), in, out_dim);
    dX.noalias() += dO * W.transpose();
    dW.noalias() += X.transpose() * dO;
    // fixed-order accumulation: Map redux order depends on buffer alignment
    for (int j = 0; j < out_dim; ++j) {
      T acc = T(0);
      for (int i = 0; i < m; ++i) acc += dO(i, j);
      at(bias).grad[j] += acc;
    }
  });
  return out;
}

// Inverted dropout: kept activations scaled by 1/(1-p). Identity in eval
// mode. The mask is a pure function of the seed so checks can freeze it.
template <class T>
typename Tape<T>::Ref Tape<T>::dropout(Ref in, double p, std::uint64_t seed, bool train) {
  if (!train || p <= 0.0) {
    Ref out = new_node(at(in).shape);
    at(out).val = at(in).val;
    set_backward(out, [this, in, out]() {
      for (std::size_t i = 0; i < at(in).size(); ++i) at(in).grad[i] += at(out).grad[i];
    });
    return out;
  }
  Ref out = new_node(at(in).shape);
  auto mask = std::make_shared<std::vector<T>>(at(in).size());
  rng::Stream s(seed, 0);
  const T scale = T(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < at(in).size(); ++i) {
    (*mask)[i] = s.next_uniform() < p ? T(0) : scale;
    at(out).val[i] = at(in).val[i] * (*mask)[i];
  }
  set_backward(out, [this, in, out, mask]() {
    for (std::size_t i = 0; i < at(in).size(); ++i)
      at(in).grad[i] += at(out).grad[i] * (*mask)[i];
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::flatten(Ref in) {
  const auto& is = at(in).shape;
  if (is.empty()) throw RuntimeError("flatten: scalar input");
  const int B = is[0];
  const int rest = static_cast<int>(shape_numel(is)) / B;
  Ref out = new_node({B, rest});
  at(out).val = at(in).val;
  set_backward(out, [this, in, out]() {
    for (std::size_t i = 0; i < at(in).size(); ++i) at(in).grad[i] += at(out).grad[i];
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::concat_cols(Ref a, Ref b) {
  const auto& as = at(a).shape;
  const auto& bs = at(b).shape;
  if (as.size() != 2 || bs.size() != 2 || as[0] != bs[0])
    throw RuntimeError("concat_cols: shape mismatch");
  const int m = as[0], ka = as[1], kb = bs[1];
  Ref out = new_node({m, ka + kb});
  for (int i = 0; i < m; ++i) {
    std::copy_n(at(a).val.data() + static_cast<std::size_t>(i) * ka, ka,
                at(out).val.data() + static_cast<std::size_t>(i) * (ka + kb));
    std::copy_n(at(b).val.data() + static_cast<std::size_t>(i) * kb, kb,
                at(out).val.data() + static_cast<std::size_t>(i) * (ka + kb) + ka);
  }
  set_backward(out, [this, a, b, out, m, ka, kb]() {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < ka; ++j)
        at(a).grad[i * ka + j] += at(out).grad[i * (ka + kb) + j];
      for (int j = 0; j < kb; ++j)
        at(b).grad[i * kb + j] += at(out).grad[i * (ka + kb) + ka + j];
    }
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::slice_cols(Ref in, int c0, int c1) {
  const auto& is = at(in).shape;
  if (is.size() != 2 || c0 < 0 || c1 > is[1] || c0 >= c1)
    throw RuntimeError("slice_cols: bad range");
  const int m = is[0], k = is[1], kc = c1 - c0;
  Ref out = new_node({m, kc});
  for (int i = 0; i < m; ++i)
    std::copy_n(at(in).val.data() + static_cast<std::size_t>(i) * k + c0, kc,
                at(out).val.data() + static_cast<std::size_t>(i) * kc);
  set_backward(out, [this, in, out, m, k, c0, kc]() {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < kc; ++j)
        at(in).grad[i * k + c0 + j] += at(out).grad[i * kc + j];
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::linear_const(Ref x, const std::vector<T>& w, T b) {
  const auto& xs = at(x).shape;
  if (xs.size() != 2 || static_cast<std::size_t>(xs[1]) != w.size())
    throw RuntimeError("linear_const: shape mismatch");
  const int m = xs[0], k = xs[1];
  Ref out = new_node({m});
  for (int i = 0; i < m; ++i) {
    T acc = b;
    for (int j = 0; j < k; ++j) acc += at(x).val[i * k + j] * w[j];
    at(out).val[i] = acc;
  }
  auto wc = std::make_shared<std::vector<T>>(w);
  set_backward(out, [this, x, out, m, k, wc]() {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        at(x).grad[i * k + j] += at(out).grad[i] * (*wc)[j];
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::mse(Ref pred, Ref target) {
  if (at(pred).size() != at(target).size())
    throw RuntimeError("mse: length mismatch");
  const std::size_t m = at(pred).size();
  Ref out = new_node({1});
  T acc = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T d = at(pred).val[i] - at(target).val[i];
    acc += d * d;
  }
  at(out).val[0] = acc / static_cast<T>(m);
  set_backward(out, [this, pred, target, out, m]() {
    const T g = at(out).grad[0] * T(2) / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T d = at(pred).val[i] - at(target).val[i];
      at(pred).grad[i] += g * d;
      at(target).grad[i] -= g * d;
    }
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::add(Ref a, Ref b) {
  if (at(a).size() != at(b).size()) throw RuntimeError("add: shape mismatch");
  Ref out = new_node(at(a).shape);
  for (std::size_t i = 0; i < at(a).size(); ++i)
    at(out).val[i] = at(a).val[i] + at(b).val[i];
  set_backward(out, [this, a, b, out]() {
    for (std::size_t i = 0; i < at(out).size(); ++i) {
      at(a).grad[i] += at(out).grad[i];
      at(b).grad[i] += at(out).grad[i];
    }
  });
  return out;
}

template <class T>
typename Tape<T>::Ref Tape<T>::sub_from_const(T c, Ref a) {
  Ref out = new_node(at(a).shape);
  for (std::size_t i = 0; i < at(a).size(); ++i) at(out).val[i] = c - at(a).val[i];
  set_backward(out, [this, a, out]() {
    for (std::size_t i = 0; i < at(out).size(); ++i) at(a).grad[i] -= at(out).grad[i];
  });
  return out;
}

}  // namespace cn::ad
