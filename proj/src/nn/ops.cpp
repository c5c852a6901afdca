#include "mslu/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eigen_util.hpp"

namespace mslu::nn {

using detail::CMapMat;
using detail::CStridedMap;
using detail::MapMat;
using detail::RowMat;
using detail::StridedMap;

namespace {

template <typename T>
bool wants(const Node<T>* n) {
  return n != nullptr && n->requires_grad;
}

template <typename T>
std::size_t last_dim(const Tensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("tensor has no axes");
  return x.shape().back();
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(weight.rank() == 2, "linear: weight must be 2-D");
  const std::size_t in = weight.dim(1), out_dim = weight.dim(0);
  require(last_dim(x) == in, "linear: input width " + std::to_string(last_dim(x)) +
                                 " does not match weight " + to_string(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.size() == out_dim, "linear: bias length mismatch");
  const std::size_t rows = x.size() / in;

  Buffer<T> y(rows * out_dim);
  MapMat<T> Y(y.data(), rows, out_dim);
  CMapMat<T> X(x.data().data(), rows, in);
  CMapMat<T> W(weight.data().data(), out_dim, in);
  Y.noalias() = X * W.transpose();
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data().data(), out_dim);
    Y.rowwise() += b;
  }

  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<std::shared_ptr<Node<T>>> parents{x.node_ptr(), weight.node_ptr()};
  if (has_bias) parents.push_back(bias.node_ptr());
  auto result = Tensor<T>::make_result(std::move(shape), std::move(y), std::move(parents));
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  Node<T>* wn = weight.node();
  Node<T>* bn = has_bias ? bias.node() : nullptr;
  set_backward(result, [=] {
    CMapMat<T> G(self->grad.data(), rows, out_dim);
    if (wants(xn)) {
      MapMat<T> GX(xn->grad.data(), rows, in);
      GX.noalias() += G * CMapMat<T>(wn->value.data(), out_dim, in);
    }
    if (wants(wn)) {
      MapMat<T> GW(wn->grad.data(), out_dim, in);
      GW.noalias() += G.transpose() * CMapMat<T>(xn->value.data(), rows, in);
    }
    if (wants(bn)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bn->grad.data(), out_dim);
      gb += G.colwise().sum();
    }
  });
  return result;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  auto result = Tensor<T>::make_result(a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  set_backward(result, [=] {
    const std::size_t n = self->grad.size();
    if (wants(an))
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += self->grad[i];
    if (wants(bn))
      for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self->grad[i];
  });
  return result;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Buffer<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  auto result = Tensor<T>::make_result(a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  set_backward(result, [=] {
    const std::size_t n = self->grad.size();
    if (wants(an))
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += self->grad[i] * bn->value[i];
    if (wants(bn))
      for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self->grad[i] * an->value[i];
  });
  return result;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Buffer<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * factor;
  auto result = Tensor<T>::make_result(a.shape(), std::move(y), {a.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* an = a.node();
  set_backward(result, [=] {
    for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i] * factor;
  });
  return result;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Buffer<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  auto result = Tensor<T>::make_result(x.shape(), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      if (xn->value[i] > T(0)) xn->grad[i] += self->grad[i];
  });
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (auto v : x.data()) total += v;
  auto result = Tensor<T>::make_result({1}, {total}, {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (auto& g : xn->grad) g += self->grad[0];
  });
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t d = last_dim(x);
  require(d >= 1, "layer_norm: last dim must be >= 1");
  require(gain.size() == d && bias.size() == d, "layer_norm: gain/bias width mismatch");
  const std::size_t rows = x.size() / d;
  Buffer<T> y(x.size());
  auto xhat = std::make_shared<Buffer<T>>(x.size());
  auto inv_std = std::make_shared<Buffer<T>>(rows);
  const T* xv = x.data().data();
  const T* g = gain.data().data();
  const T* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mean = T(0);
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= T(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (row[i] - mean) * is;
      (*xhat)[r * d + i] = h;
      y[r * d + i] = h * g[i] + b[i];
    }
  }
  auto result = Tensor<T>::make_result(x.shape(), std::move(y),
                                       {x.node_ptr(), gain.node_ptr(), bias.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  Node<T>* gn = gain.node();
  Node<T>* bn = bias.node();
  set_backward(result, [=] {
    const T* gy = self->grad.data();
    const T* h = xhat->data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = gy + r * d;
      const T* hr = h + r * d;
      if (wants(gn))
        for (std::size_t i = 0; i < d; ++i) gn->grad[i] += gr[i] * hr[i];
      if (wants(bn))
        for (std::size_t i = 0; i < d; ++i) bn->grad[i] += gr[i];
      if (wants(xn)) {
        T mean_dh = T(0), mean_dh_h = T(0);
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = gr[i] * gn->value[i];
          mean_dh += dh;
          mean_dh_h += dh * hr[i];
        }
        mean_dh /= T(d);
        mean_dh_h /= T(d);
        const T is = (*inv_std)[r];
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = gr[i] * gn->value[i];
          xn->grad[r * d + i] += is * (dh - mean_dh - hr[i] * mean_dh_h);
        }
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t d = last_dim(x);
  const std::size_t rows = x.size() / d;
  Buffer<T> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data().data() + r * d;
    T* out = y.data() + r * d;
    const T m = *std::max_element(row, row + d);
    T z = T(0);
    for (std::size_t i = 0; i < d; ++i) z += (out[i] = std::exp(row[i] - m));
    for (std::size_t i = 0; i < d; ++i) out[i] /= z;
  }
  auto result = Tensor<T>::make_result(x.shape(), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* p = self->value.data() + r * d;
      const T* g = self->grad.data() + r * d;
      T dot = T(0);
      for (std::size_t i = 0; i < d; ++i) dot += p[i] * g[i];
      for (std::size_t i = 0; i < d; ++i) xn->grad[r * d + i] += p[i] * (g[i] - dot);
    }
  });
  return result;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t d = last_dim(x);
  const std::size_t rows = x.size() / d;
  Buffer<T> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data().data() + r * d;
    T* out = y.data() + r * d;
    const T m = *std::max_element(row, row + d);
    T z = T(0);
    for (std::size_t i = 0; i < d; ++i) z += std::exp(row[i] - m);
    const T lse = m + std::log(z);
    for (std::size_t i = 0; i < d; ++i) out[i] = row[i] - lse;
  }
  auto result = Tensor<T>::make_result(x.shape(), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* lp = self->value.data() + r * d;
      const T* g = self->grad.data() + r * d;
      T gsum = T(0);
      for (std::size_t i = 0; i < d; ++i) gsum += g[i];
      for (std::size_t i = 0; i < d; ++i) xn->grad[r * d + i] += g[i] - std::exp(lp[i]) * gsum;
    }
  });
  return result;
}

template <typename T>
AttentionResult<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                                        const Tensor<T>& v, ValidMask key_valid,
                                        std::size_t heads) {
  require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: expects [B, L, d] inputs");
  const std::size_t B = q.dim(0), Lq = q.dim(1), d = q.dim(2), Lk = k.dim(1);
  require(heads > 0 && d % heads == 0, "attention: model dim " + std::to_string(d) +
                                           " not divisible by " + std::to_string(heads) + " heads");
  require(k.dim(0) == B && v.dim(0) == B && k.dim(2) == d && v.dim(2) == d && v.dim(1) == Lk,
          "attention: q/k/v shapes disagree");
  require(key_valid.size() == B * Lk, "attention: key mask length " +
                                          std::to_string(key_valid.size()) + " != " +
                                          std::to_string(B * Lk));
  const std::size_t dh = d / heads;
  const T scale_factor = T(1) / std::sqrt(T(dh));
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));

  Buffer<T> attn(B * heads * Lq * Lk);
  Buffer<T> out(B * Lq * d);
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* valid = key_valid.data() + b * Lk;
    if (std::none_of(valid, valid + Lk, [](std::uint8_t m) { return m != 0; })) {
      throw ShapeError("attention: every key position is masked");
    }
    for (std::size_t h = 0; h < heads; ++h) {
      CStridedMap<T> Q(q.data().data() + b * Lq * d + h * dh, Lq, dh, stride);
      CStridedMap<T> K(k.data().data() + b * Lk * d + h * dh, Lk, dh, stride);
      CStridedMap<T> V(v.data().data() + b * Lk * d + h * dh, Lk, dh, stride);
      MapMat<T> A(attn.data() + (b * heads + h) * Lq * Lk, Lq, Lk);
      A.noalias() = (Q * K.transpose()) * scale_factor;
      for (std::size_t i = 0; i < Lq; ++i) {
        T m = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < Lk; ++j)
          if (valid[j]) m = std::max(m, A(i, j));
        T z = T(0);
        for (std::size_t j = 0; j < Lk; ++j) {
          const T e = valid[j] ? std::exp(A(i, j) - m) : T(0);
          A(i, j) = e;
          z += e;
        }
        A.row(i) /= z;
      }
      StridedMap<T> O(out.data() + b * Lq * d + h * dh, Lq, dh, stride);
      O.noalias() = A * V;
    }
  }

  auto weights = Tensor<T>::from({B, heads, Lq, Lk}, std::move(attn));
  auto result = Tensor<T>::make_result({B, Lq, d}, std::move(out),
                                       {q.node_ptr(), k.node_ptr(), v.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* qn = q.node();
  Node<T>* kn = k.node();
  Node<T>* vn = v.node();
  auto wnode = weights.node_ptr();
  set_backward(result, [=] {
    RowMat<T> dA(Lq, Lk);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t qoff = b * Lq * d + h * dh;
        const std::size_t koff = b * Lk * d + h * dh;
        CStridedMap<T> dO(self->grad.data() + qoff, Lq, dh, stride);
        CStridedMap<T> Q(qn->value.data() + qoff, Lq, dh, stride);
        CStridedMap<T> K(kn->value.data() + koff, Lk, dh, stride);
        CStridedMap<T> V(vn->value.data() + koff, Lk, dh, stride);
        CMapMat<T> A(wnode->value.data() + (b * heads + h) * Lq * Lk, Lq, Lk);
        if (wants(vn)) {
          StridedMap<T> dV(vn->grad.data() + koff, Lk, dh, stride);
          dV.noalias() += A.transpose() * dO;
        }
        if (!wants(qn) && !wants(kn)) continue;
        dA.noalias() = dO * V.transpose();
        for (std::size_t i = 0; i < Lq; ++i) {
          const T dot = A.row(i).dot(dA.row(i));
          for (std::size_t j = 0; j < Lk; ++j) dA(i, j) = A(i, j) * (dA(i, j) - dot) * scale_factor;
        }
        if (wants(qn)) {
          StridedMap<T> dQ(qn->grad.data() + qoff, Lq, dh, stride);
          dQ.noalias() += dA * K;
        }
        if (wants(kn)) {
          StridedMap<T> dK(kn->grad.data() + koff, Lk, dh, stride);
          dK.noalias() += dA.transpose() * Q;
        }
      }
    }
  });
  return {std::move(result), std::move(weights)};
}

template <typename T>
Tensor<T> conv2d_3x3_s2(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(x.rank() == 4, "conv2d: input must be [B, H, W, C]");
  require(weight.rank() == 4 && weight.dim(1) == 3 && weight.dim(2) == 3,
          "conv2d: weight must be [Cout, 3, 3, Cin]");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const std::size_t Co = weight.dim(0);
  require(weight.dim(3) == Ci, "conv2d: channel mismatch");
  require(bias.size() == Co, "conv2d: bias length mismatch");
  require(H >= 1 && W >= 1, "conv2d: empty input");
  const std::size_t Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  const std::size_t K = 9 * Ci;
  const std::size_t rows = B * Ho * Wo;

  auto cols = std::make_shared<Buffer<T>>(rows * K, T(0));
  const T* xv = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        T* col = cols->data() + ((b * Ho + oy) * Wo + ox) * K;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const long iy = static_cast<long>(2 * oy + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const long ix = static_cast<long>(2 * ox + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const T* src = xv + ((b * H + iy) * W + ix) * Ci;
            std::copy(src, src + Ci, col + (ky * 3 + kx) * Ci);
          }
        }
      }

  Buffer<T> y(rows * Co);
  MapMat<T> Y(y.data(), rows, Co);
  CMapMat<T> C(cols->data(), rows, K);
  CMapMat<T> Wm(weight.data().data(), Co, K);
  Y.noalias() = C * Wm.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.data().data(), Co);
  Y.rowwise() += bv;

  auto result = Tensor<T>::make_result({B, Ho, Wo, Co}, std::move(y),
                                       {x.node_ptr(), weight.node_ptr(), bias.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  Node<T>* wn = weight.node();
  Node<T>* bn = bias.node();
  set_backward(result, [=] {
    CMapMat<T> G(self->grad.data(), rows, Co);
    CMapMat<T> Cb(cols->data(), rows, K);
    if (wants(wn)) {
      MapMat<T> GW(wn->grad.data(), Co, K);
      GW.noalias() += G.transpose() * Cb;
    }
    if (wants(bn)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bn->grad.data(), Co);
      gb += G.colwise().sum();
    }
    if (wants(xn)) {
      RowMat<T> GC = G * CMapMat<T>(wn->value.data(), Co, K);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oy = 0; oy < Ho; ++oy)
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const T* gcol = GC.data() + ((b * Ho + oy) * Wo + ox) * K;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const long iy = static_cast<long>(2 * oy + ky) - 1;
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const long ix = static_cast<long>(2 * ox + kx) - 1;
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                T* dst = xn->grad.data() + ((b * H + iy) * W + ix) * Ci;
                const T* src = gcol + (ky * 3 + kx) * Ci;
                for (std::size_t c = 0; c < Ci; ++c) dst[c] += src[c];
              }
            }
          }
    }
  });
  return result;
}

template <typename T>
Tensor<T> mask_time(const Tensor<T>& x, ValidMask valid) {
  require(x.rank() >= 2, "mask_time: expects [B, L, ...]");
  const std::size_t BL = x.dim(0) * x.dim(1);
  require(valid.size() == BL, "mask_time: mask length mismatch");
  const std::size_t inner = x.size() / BL;
  Buffer<T> y(x.data().begin(), x.data().end());
  for (std::size_t p = 0; p < BL; ++p)
    if (!valid[p]) std::fill_n(y.begin() + p * inner, inner, T(0));
  auto result = Tensor<T>::make_result(x.shape(), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  std::vector<std::uint8_t> keep(valid.begin(), valid.end());
  set_backward(result, [=] {
    for (std::size_t p = 0; p < BL; ++p) {
      if (!keep[p]) continue;
      for (std::size_t i = 0; i < inner; ++i) xn->grad[p * inner + i] += self->grad[p * inner + i];
    }
  });
  return result;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: element count mismatch " + to_string(x.shape()) +
                                        " -> " + to_string(shape));
  Buffer<T> y(x.data().begin(), x.data().end());
  auto result = Tensor<T>::make_result(std::move(shape), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (std::size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
  });
  return result;
}

template <typename T>
Tensor<T> embedding(std::span<const int> ids, const Shape& ids_shape, const Tensor<T>& table) {
  require(table.rank() == 2, "embedding: table must be [V, d]");
  require(numel(ids_shape) == ids.size(), "embedding: id shape mismatch");
  const std::size_t V = table.dim(0), d = table.dim(1);
  Buffer<T> y(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range for vocab " +
                       std::to_string(V));
    }
    const T* row = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(row, row + d, y.begin() + i * d);
  }
  Shape shape = ids_shape;
  shape.push_back(d);
  auto result = Tensor<T>::make_result(std::move(shape), std::move(y), {table.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* tn = table.node();
  std::vector<int> idv(ids.begin(), ids.end());
  set_backward(result, [=] {
    for (std::size_t i = 0; i < idv.size(); ++i) {
      T* dst = tn->grad.data() + static_cast<std::size_t>(idv[i]) * d;
      const T* src = self->grad.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
  return result;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ShapeError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return x;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const T keep_scale = T(1.0 / (1.0 - p));
  auto mask = std::make_shared<Buffer<T>>(x.size());
  Buffer<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = uni(rng) >= p ? keep_scale : T(0);
    y[i] = x.data()[i] * (*mask)[i];
  }
  auto result = Tensor<T>::make_result(x.shape(), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (std::size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i] * (*mask)[i];
  });
  return result;
}

template <typename T>
Tensor<T> repeat_batch(const Tensor<T>& x, std::size_t batch) {
  const std::size_t n = x.size();
  Buffer<T> y(batch * n);
  for (std::size_t b = 0; b < batch; ++b) std::copy(x.data().begin(), x.data().end(), y.begin() + b * n);
  Shape shape{batch};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  auto result = Tensor<T>::make_result(std::move(shape), std::move(y), {x.node_ptr()});
  Node<T>* self = result.node();
  Node<T>* xn = x.node();
  set_backward(result, [=] {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += self->grad[b * n + i];
  });
  return result;
}

#define MSLU_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template Tensor<T> log_softmax(const Tensor<T>&);                                              \
  template AttentionResult<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&,           \
                                                   const Tensor<T>&, ValidMask, std::size_t);    \
  template Tensor<T> conv2d_3x3_s2(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> mask_time(const Tensor<T>&, ValidMask);                                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> embedding(std::span<const int>, const Shape&, const Tensor<T>&);            \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::mt19937_64&);                  \
  template Tensor<T> repeat_batch(const Tensor<T>&, std::size_t);

MSLU_INSTANTIATE_OPS(float)
MSLU_INSTANTIATE_OPS(double)

}  // namespace mslu::nn
