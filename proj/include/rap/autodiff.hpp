#pragma once

// reverse-mode autodiff on a flat tape. ops are free functions: they compute
// the output eagerly and, when any input is tracked, append a node holding
// (op kind, input node ids, saved tensors, attrs). backward() walks the node
// list once in reverse. all reductions accumulate in double regardless of the
// storage scalar; float is the production type, double exists so gradient
// checks can run the identical graph at full precision.

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "rap/tensor.hpp"

namespace rap {

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  scale,
  matmul,
  add_bias,
  rowwise_mad,
  rowwise_mul,
  layer_norm,
  softmax,
  gelu,
  tanh_fn,
  slice_rows,
  slice_cols,
  concat_rows,
  concat_cols,
  sum_all,
  mean_all,
  frame_delta,
  tokens_from_latent,
  latent_from_tokens,
  reshape,
};

namespace detail {

// C = op(A) * op(B) with optional transposes, double accumulators per output
// row. acc=true adds into existing C contents.
template <class T>
void mm(const T* A, const std::array<int, 2>& ash, bool ta, const T* B,
        const std::array<int, 2>& bsh, bool tb, T* C, bool acc) {
  int m = ta ? ash[1] : ash[0];
  int k = ta ? ash[0] : ash[1];
  int kb = tb ? bsh[1] : bsh[0];
  int n = tb ? bsh[0] : bsh[1];
  if (k != kb)
    throw ShapeError("matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(kb));
  std::vector<double> row(static_cast<size_t>(n));
  for (int i = 0; i < m; ++i) {
    if (acc)
      for (int j = 0; j < n; ++j) row[size_t(j)] = double(C[size_t(i) * n + j]);
    else
      std::fill(row.begin(), row.end(), 0.0);
    if (!tb) {
      for (int kk = 0; kk < k; ++kk) {
        double a = double(ta ? A[size_t(kk) * ash[1] + i] : A[size_t(i) * ash[1] + kk]);
        const T* brow = B + size_t(kk) * bsh[1];
        for (int j = 0; j < n; ++j) row[size_t(j)] += a * double(brow[j]);
      }
    } else {
      for (int j = 0; j < n; ++j) {
        const T* brow = B + size_t(j) * bsh[1];
        double s = row[size_t(j)];
        for (int kk = 0; kk < k; ++kk) {
          double a = double(ta ? A[size_t(kk) * ash[1] + i] : A[size_t(i) * ash[1] + kk]);
          s += a * double(brow[kk]);
        }
        row[size_t(j)] = s;
      }
    }
    for (int j = 0; j < n; ++j) C[size_t(i) * n + j] = T(row[size_t(j)]);
  }
}

inline double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); }

inline double gelu_dx(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  return cdf + x * pdf;
}

}  // namespace detail

template <class T>
class TapeT {
 public:
  struct Node {
    OpKind op;
    std::vector<int> in;          // node ids, -1 for untracked inputs
    std::vector<TensorT<T>> saved;
    std::vector<int> shape;       // output shape
    std::vector<int> ints;        // op-specific int payload
    double f0 = 0;
    bool t0 = false, t1 = false;  // matmul transpose flags
  };

  std::vector<Node> nodes;

  // registers a parameter (or input) for gradient tracking. watching the same
  // buffer twice returns the same node so gradients accumulate in one place.
  TensorT<T> watch(const TensorT<T>& t) {
    if (t.tape == this && t.node >= 0) return t;
    auto it = watched_.find(t.buf.get());
    if (it != watched_.end()) {
      TensorT<T> out = t;
      out.tape = this;
      out.node = it->second;
      return out;
    }
    Node n;
    n.op = OpKind::leaf;
    n.shape = t.shape;
    nodes.push_back(std::move(n));
    int id = int(nodes.size()) - 1;
    watched_[t.buf.get()] = id;
    TensorT<T> out = t;
    out.tape = this;
    out.node = id;
    return out;
  }

  void backward(const TensorT<T>& loss) {
    if (loss.tape != this || loss.node < 0)
      throw ContractError("backward: loss is not a tracked tensor on this tape");
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar");
    grads_.assign(nodes.size(), {});
    grad_at(loss.node).assign(1, T(1));
    for (int id = int(nodes.size()) - 1; id >= 0; --id) {
      if (grads_[size_t(id)].empty()) continue;
      step_back(id);
    }
  }

  // gradient for a watched tensor, by buffer identity
  TensorT<T> grad_for(const TensorT<T>& p) const {
    auto it = watched_.find(p.buf.get());
    if (it == watched_.end()) throw ContractError("grad_for: tensor was never watched");
    const auto& g = grads_[size_t(it->second)];
    TensorT<T> out(nodes[size_t(it->second)].shape);
    if (!g.empty()) std::copy(g.begin(), g.end(), out.data());
    return out;
  }

  bool has_grad(const TensorT<T>& p) const { return watched_.count(p.buf.get()) > 0; }

  // --- node construction used by the op functions ---

  int push(Node n) {
    nodes.push_back(std::move(n));
    return int(nodes.size()) - 1;
  }

 private:
  std::map<const void*, int> watched_;
  std::vector<std::vector<T>> grads_;

  std::vector<T>& grad_at(int id) {
    auto& g = grads_[size_t(id)];
    if (g.empty()) g.assign(shape_numel(nodes[size_t(id)].shape), T(0));
    return g;
  }

  void add_into(int id, const std::vector<T>& contrib) {
    if (id < 0) return;
    auto& g = grad_at(id);
    for (size_t i = 0; i < g.size(); ++i) g[i] += contrib[i];
  }

  void step_back(int id) {
    const Node& n = nodes[size_t(id)];
    const std::vector<T>& dy = grads_[size_t(id)];
    switch (n.op) {
      case OpKind::leaf:
        break;
      case OpKind::add: {
        add_into(n.in[0], dy);
        add_into(n.in[1], dy);
        break;
      }
      case OpKind::sub: {
        add_into(n.in[0], dy);
        if (n.in[1] >= 0) {
          auto& g = grad_at(n.in[1]);
          for (size_t i = 0; i < g.size(); ++i) g[i] -= dy[i];
        }
        break;
      }
      case OpKind::mul: {
        const auto& a = n.saved[0];
        const auto& b = n.saved[1];
        if (n.in[0] >= 0) {
          auto& g = grad_at(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * b[i];
        }
        if (n.in[1] >= 0) {
          auto& g = grad_at(n.in[1]);
          for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * a[i];
        }
        break;
      }
      case OpKind::scale: {
        if (n.in[0] >= 0) {
          auto& g = grad_at(n.in[0]);
          T c = T(n.f0);
          for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * c;
        }
        break;
      }
      case OpKind::matmul: {
        const auto& a = n.saved[0];
        const auto& b = n.saved[1];
        std::array<int, 2> ash{a.dim(0), a.dim(1)}, bsh{b.dim(0), b.dim(1)};
        std::array<int, 2> ysh{n.shape[0], n.shape[1]};
        if (n.in[0] >= 0) {
          auto& ga = grad_at(n.in[0]);
          if (!n.t0)
            detail::mm(dy.data(), ysh, false, b.data(), bsh, !n.t1, ga.data(), true);
          else
            detail::mm(b.data(), bsh, n.t1, dy.data(), ysh, true, ga.data(), true);
        }
        if (n.in[1] >= 0) {
          auto& gb = grad_at(n.in[1]);
          if (!n.t1)
            detail::mm(a.data(), ash, !n.t0, dy.data(), ysh, false, gb.data(), true);
          else
            detail::mm(dy.data(), ysh, true, a.data(), ash, n.t0, gb.data(), true);
        }
        break;
      }
      case OpKind::add_bias: {
        int R = n.shape[0], C = n.shape[1];
        add_into(n.in[0], dy);
        if (n.in[1] >= 0) {
          auto& gb = grad_at(n.in[1]);
          for (int c = 0; c < C; ++c) {
            double s = double(gb[size_t(c)]);
            for (int r = 0; r < R; ++r) s += double(dy[size_t(r) * C + c]);
            gb[size_t(c)] = T(s);
          }
        }
        break;
      }
      case OpKind::rowwise_mad: {
        // y = x*(1+s) + b
        int R = n.shape[0], C = n.shape[1];
        const auto& x = n.saved[0];
        const auto& s = n.saved[1];
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
              gx[size_t(r) * C + c] += dy[size_t(r) * C + c] * (T(1) + s[size_t(c)]);
        }
        if (n.in[1] >= 0) {
          auto& gs = grad_at(n.in[1]);
          for (int c = 0; c < C; ++c) {
            double acc = double(gs[size_t(c)]);
            for (int r = 0; r < R; ++r)
              acc += double(dy[size_t(r) * C + c]) * double(x[size_t(r) * C + c]);
            gs[size_t(c)] = T(acc);
          }
        }
        if (n.in[2] >= 0) {
          auto& gb = grad_at(n.in[2]);
          for (int c = 0; c < C; ++c) {
            double acc = double(gb[size_t(c)]);
            for (int r = 0; r < R; ++r) acc += double(dy[size_t(r) * C + c]);
            gb[size_t(c)] = T(acc);
          }
        }
        break;
      }
      case OpKind::rowwise_mul: {
        int R = n.shape[0], C = n.shape[1];
        const auto& x = n.saved[0];
        const auto& g = n.saved[1];
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) gx[size_t(r) * C + c] += dy[size_t(r) * C + c] * g[size_t(c)];
        }
        if (n.in[1] >= 0) {
          auto& gg = grad_at(n.in[1]);
          for (int c = 0; c < C; ++c) {
            double acc = double(gg[size_t(c)]);
            for (int r = 0; r < R; ++r)
              acc += double(dy[size_t(r) * C + c]) * double(x[size_t(r) * C + c]);
            gg[size_t(c)] = T(acc);
          }
        }
        break;
      }
      case OpKind::layer_norm: {
        int R = n.shape[0], C = n.shape[1];
        const auto& x = n.saved[0];
        const auto& gain = n.saved[1];
        const auto& mean = n.saved[2];
        const auto& rstd = n.saved[3];
        for (int r = 0; r < R; ++r) {
          const T* xr = x.data() + size_t(r) * C;
          const T* dyr = dy.data() + size_t(r) * C;
          double m = double(mean[size_t(r)]), rs = double(rstd[size_t(r)]);
          double sum_dn = 0, sum_dn_h = 0;
          for (int c = 0; c < C; ++c) {
            double h = (double(xr[c]) - m) * rs;
            double dn = double(dyr[c]) * double(gain[size_t(c)]);
            sum_dn += dn;
            sum_dn_h += dn * h;
          }
          sum_dn /= C;
          sum_dn_h /= C;
          if (n.in[0] >= 0) {
            auto& gx = grad_at(n.in[0]);
            for (int c = 0; c < C; ++c) {
              double h = (double(xr[c]) - m) * rs;
              double dn = double(dyr[c]) * double(gain[size_t(c)]);
              gx[size_t(r) * C + c] += T(rs * (dn - sum_dn - h * sum_dn_h));
            }
          }
        }
        if (n.in[1] >= 0) {
          auto& gg = grad_at(n.in[1]);
          for (int c = 0; c < C; ++c) {
            double acc = double(gg[size_t(c)]);
            for (int r = 0; r < R; ++r) {
              double h = (double(x[size_t(r) * C + c]) - double(mean[size_t(r)])) *
                         double(rstd[size_t(r)]);
              acc += double(dy[size_t(r) * C + c]) * h;
            }
            gg[size_t(c)] = T(acc);
          }
        }
        if (n.in[2] >= 0) {
          auto& gb = grad_at(n.in[2]);
          for (int c = 0; c < C; ++c) {
            double acc = double(gb[size_t(c)]);
            for (int r = 0; r < R; ++r) acc += double(dy[size_t(r) * C + c]);
            gb[size_t(c)] = T(acc);
          }
        }
        break;
      }
      case OpKind::softmax: {
        int R = n.shape[0], C = n.shape[1];
        const auto& y = n.saved[0];
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          for (int r = 0; r < R; ++r) {
            double dot = 0;
            for (int c = 0; c < C; ++c)
              dot += double(dy[size_t(r) * C + c]) * double(y[size_t(r) * C + c]);
            for (int c = 0; c < C; ++c)
              gx[size_t(r) * C + c] +=
                  T(double(y[size_t(r) * C + c]) * (double(dy[size_t(r) * C + c]) - dot));
          }
        }
        break;
      }
      case OpKind::gelu: {
        const auto& x = n.saved[0];
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          for (size_t i = 0; i < gx.size(); ++i)
            gx[i] += T(double(dy[i]) * detail::gelu_dx(double(x[i])));
        }
        break;
      }
      case OpKind::tanh_fn: {
        const auto& y = n.saved[0];
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          for (size_t i = 0; i < gx.size(); ++i)
            gx[i] += T(double(dy[i]) * (1.0 - double(y[i]) * double(y[i])));
        }
        break;
      }
      case OpKind::slice_rows: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          int C = n.shape[1], r0 = n.ints[0];
          for (int r = 0; r < n.shape[0]; ++r)
            for (int c = 0; c < C; ++c)
              gx[size_t(r0 + r) * C + c] += dy[size_t(r) * C + c];
        }
        break;
      }
      case OpKind::slice_cols: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          int c0 = n.ints[0], xc = n.ints[1];
          for (int r = 0; r < n.shape[0]; ++r)
            for (int c = 0; c < n.shape[1]; ++c)
              gx[size_t(r) * xc + c0 + c] += dy[size_t(r) * n.shape[1] + c];
        }
        break;
      }
      case OpKind::concat_rows: {
        int C = n.shape[1];
        int r0 = 0;
        for (size_t p = 0; p < n.in.size(); ++p) {
          int rows = n.ints[p];
          if (n.in[p] >= 0) {
            auto& gx = grad_at(n.in[p]);
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < C; ++c) gx[size_t(r) * C + c] += dy[size_t(r0 + r) * C + c];
          }
          r0 += rows;
        }
        break;
      }
      case OpKind::concat_cols: {
        int R = n.shape[0], C = n.shape[1];
        int c0 = 0;
        for (size_t p = 0; p < n.in.size(); ++p) {
          int cols = n.ints[p];
          if (n.in[p] >= 0) {
            auto& gx = grad_at(n.in[p]);
            for (int r = 0; r < R; ++r)
              for (int c = 0; c < cols; ++c) gx[size_t(r) * cols + c] += dy[size_t(r) * C + c0 + c];
          }
          c0 += cols;
        }
        break;
      }
      case OpKind::sum_all: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          for (auto& g : gx) g += dy[0];
        }
        break;
      }
      case OpKind::mean_all: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          T c = T(double(dy[0]) / n.f0);
          // f0 holds the element count; dividing the upstream grad once keeps
          // the backward a single broadcast
          for (auto& g : gx) g += c;
        }
        break;
      }
      case OpKind::frame_delta: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          int C = n.ints[0], F = n.ints[1], S = n.ints[2];  // S = H*W
          for (int c = 0; c < C; ++c)
            for (int f = 0; f + 1 < F; ++f)
              for (int s = 0; s < S; ++s) {
                T g = dy[(size_t(c) * (F - 1) + f) * S + s];
                gx[(size_t(c) * F + f + 1) * S + s] += g;
                gx[(size_t(c) * F + f) * S + s] -= g;
              }
        }
        break;
      }
      case OpKind::tokens_from_latent: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          int ch = n.shape[1];
          size_t ntok = size_t(n.shape[0]);
          for (size_t t = 0; t < ntok; ++t)
            for (int c = 0; c < ch; ++c) gx[size_t(c) * ntok + t] += dy[t * ch + c];
        }
        break;
      }
      case OpKind::latent_from_tokens: {
        if (n.in[0] >= 0) {
          auto& gx = grad_at(n.in[0]);
          int ch = n.shape[0];
          size_t ntok = shape_numel(n.shape) / size_t(ch);
          for (size_t t = 0; t < ntok; ++t)
            for (int c = 0; c < ch; ++c) gx[t * size_t(ch) + c] += dy[size_t(c) * ntok + t];
        }
        break;
      }
      case OpKind::reshape: {
        add_into(n.in[0], dy);
        break;
      }
    }
  }
};

using Tape = TapeT<float>;

namespace detail {

template <class T>
TapeT<T>* tape_of(std::initializer_list<const TensorT<T>*> ts) {
  TapeT<T>* tape = nullptr;
  for (auto* t : ts) {
    if (t->tape == nullptr) continue;
    if (tape == nullptr) tape = t->tape;
    if (t->tape != tape) throw ContractError("op inputs belong to different tapes");
  }
  return tape;
}

template <class T>
int node_of(const TensorT<T>& t, TapeT<T>* tape) {
  return (t.tape == tape && tape != nullptr) ? t.node : -1;
}

// attach a freshly computed output to the tape when tracking is active
template <class T>
TensorT<T> attach(TensorT<T> out, TapeT<T>* tape, typename TapeT<T>::Node n) {
  if (tape == nullptr) return out;
  n.shape = out.shape;
  out.tape = tape;
  out.node = tape->push(std::move(n));
  return out;
}

}  // namespace detail

// --- elementwise ---

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "add");
  TensorT<T> y(a.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = a[i] + b[i];
  auto* tape = detail::tape_of<T>({&a, &b});
  typename TapeT<T>::Node n;
  n.op = OpKind::add;
  n.in = {detail::node_of(a, tape), detail::node_of(b, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "sub");
  TensorT<T> y(a.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = a[i] - b[i];
  auto* tape = detail::tape_of<T>({&a, &b});
  typename TapeT<T>::Node n;
  n.op = OpKind::sub;
  n.in = {detail::node_of(a, tape), detail::node_of(b, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "mul");
  TensorT<T> y(a.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = a[i] * b[i];
  auto* tape = detail::tape_of<T>({&a, &b});
  typename TapeT<T>::Node n;
  n.op = OpKind::mul;
  n.in = {detail::node_of(a, tape), detail::node_of(b, tape)};
  n.saved = {a, b};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, double c) {
  TensorT<T> y(a.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = T(double(a[i]) * c);
  auto* tape = detail::tape_of<T>({&a});
  typename TapeT<T>::Node n;
  n.op = OpKind::scale;
  n.in = {detail::node_of(a, tape)};
  n.f0 = c;
  return detail::attach(std::move(y), tape, std::move(n));
}

// --- linear algebra ---

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b, bool ta = false, bool tb = false) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: need rank-2 tensors, got " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  std::array<int, 2> ash{a.dim(0), a.dim(1)}, bsh{b.dim(0), b.dim(1)};
  int m = ta ? ash[1] : ash[0];
  int n = tb ? bsh[0] : bsh[1];
  TensorT<T> y({m, n});
  detail::mm(a.data(), ash, ta, b.data(), bsh, tb, y.data(), false);
  auto* tape = detail::tape_of<T>({&a, &b});
  typename TapeT<T>::Node nd;
  nd.op = OpKind::matmul;
  nd.in = {detail::node_of(a, tape), detail::node_of(b, tape)};
  nd.saved = {a, b};
  nd.t0 = ta;
  nd.t1 = tb;
  return detail::attach(std::move(y), tape, std::move(nd));
}

template <class T>
TensorT<T> add_bias(const TensorT<T>& x, const TensorT<T>& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(1))
    throw ShapeError("add_bias: " + shape_str(x.shape) + " + " + shape_str(b.shape));
  int R = x.dim(0), C = x.dim(1);
  TensorT<T> y(x.shape);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) y[size_t(r) * C + c] = x[size_t(r) * C + c] + b[size_t(c)];
  auto* tape = detail::tape_of<T>({&x, &b});
  typename TapeT<T>::Node n;
  n.op = OpKind::add_bias;
  n.in = {detail::node_of(x, tape), detail::node_of(b, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

// y = x * (1 + s) + b, s and b broadcast over rows (timestep modulation)
template <class T>
TensorT<T> rowwise_mad(const TensorT<T>& x, const TensorT<T>& s, const TensorT<T>& b) {
  if (x.rank() != 2 || s.rank() != 1 || b.rank() != 1 || s.dim(0) != x.dim(1) ||
      b.dim(0) != x.dim(1))
    throw ShapeError("rowwise_mad: " + shape_str(x.shape) + " with " + shape_str(s.shape) + "," +
                     shape_str(b.shape));
  int R = x.dim(0), C = x.dim(1);
  TensorT<T> y(x.shape);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      y[size_t(r) * C + c] = x[size_t(r) * C + c] * (T(1) + s[size_t(c)]) + b[size_t(c)];
  auto* tape = detail::tape_of<T>({&x, &s, &b});
  typename TapeT<T>::Node n;
  n.op = OpKind::rowwise_mad;
  n.in = {detail::node_of(x, tape), detail::node_of(s, tape), detail::node_of(b, tape)};
  n.saved = {x, s};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> rowwise_mul(const TensorT<T>& x, const TensorT<T>& g) {
  if (x.rank() != 2 || g.rank() != 1 || g.dim(0) != x.dim(1))
    throw ShapeError("rowwise_mul: " + shape_str(x.shape) + " * " + shape_str(g.shape));
  int R = x.dim(0), C = x.dim(1);
  TensorT<T> y(x.shape);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) y[size_t(r) * C + c] = x[size_t(r) * C + c] * g[size_t(c)];
  auto* tape = detail::tape_of<T>({&x, &g});
  typename TapeT<T>::Node n;
  n.op = OpKind::rowwise_mul;
  n.in = {detail::node_of(x, tape), detail::node_of(g, tape)};
  n.saved = {x, g};
  return detail::attach(std::move(y), tape, std::move(n));
}

// --- normalization and activations ---

template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gain, const TensorT<T>& bias,
                      double eps = 1e-5) {
  if (x.rank() != 2 || gain.dim(0) != x.dim(1) || bias.dim(0) != x.dim(1))
    throw ShapeError("layer_norm: " + shape_str(x.shape) + " with " + shape_str(gain.shape));
  int R = x.dim(0), C = x.dim(1);
  TensorT<T> y(x.shape), mean({R}), rstd({R});
  for (int r = 0; r < R; ++r) {
    const T* xr = x.data() + size_t(r) * C;
    double m = 0;
    for (int c = 0; c < C; ++c) m += double(xr[c]);
    m /= C;
    double v = 0;
    for (int c = 0; c < C; ++c) {
      double d = double(xr[c]) - m;
      v += d * d;
    }
    v /= C;
    double rs = 1.0 / std::sqrt(v + eps);
    mean[size_t(r)] = T(m);
    rstd[size_t(r)] = T(rs);
    for (int c = 0; c < C; ++c)
      y[size_t(r) * C + c] =
          T((double(xr[c]) - m) * rs * double(gain[size_t(c)]) + double(bias[size_t(c)]));
  }
  auto* tape = detail::tape_of<T>({&x, &gain, &bias});
  typename TapeT<T>::Node n;
  n.op = OpKind::layer_norm;
  n.in = {detail::node_of(x, tape), detail::node_of(gain, tape), detail::node_of(bias, tape)};
  n.saved = {x, gain, mean, rstd};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> softmax_rows(const TensorT<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: need rank-2, got " + shape_str(x.shape));
  int R = x.dim(0), C = x.dim(1);
  TensorT<T> y(x.shape);
  for (int r = 0; r < R; ++r) {
    const T* xr = x.data() + size_t(r) * C;
    T m = xr[0];
    for (int c = 1; c < C; ++c) m = std::max(m, xr[c]);
    double s = 0;
    for (int c = 0; c < C; ++c) s += std::exp(double(xr[c]) - double(m));
    for (int c = 0; c < C; ++c)
      y[size_t(r) * C + c] = T(std::exp(double(xr[c]) - double(m)) / s);
  }
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::softmax;
  n.in = {detail::node_of(x, tape)};
  n.saved = {y};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> gelu(const TensorT<T>& x) {
  TensorT<T> y(x.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = T(detail::gelu_fwd(double(x[i])));
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::gelu;
  n.in = {detail::node_of(x, tape)};
  n.saved = {x};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> tanh_fn(const TensorT<T>& x) {
  TensorT<T> y(x.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = T(std::tanh(double(x[i])));
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::tanh_fn;
  n.in = {detail::node_of(x, tape)};
  n.saved = {y};
  return detail::attach(std::move(y), tape, std::move(n));
}

// --- slicing and concatenation (rank-2) ---

template <class T>
TensorT<T> slice_rows(const TensorT<T>& x, int r0, int r1) {
  if (x.rank() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1)
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) + ") of " +
                     shape_str(x.shape));
  int C = x.dim(1);
  TensorT<T> y({r1 - r0, C});
  std::copy(x.data() + size_t(r0) * C, x.data() + size_t(r1) * C, y.data());
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::slice_rows;
  n.in = {detail::node_of(x, tape)};
  n.ints = {r0};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> slice_cols(const TensorT<T>& x, int c0, int c1) {
  if (x.rank() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                     shape_str(x.shape));
  int R = x.dim(0), XC = x.dim(1), C = c1 - c0;
  TensorT<T> y({R, C});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) y[size_t(r) * C + c] = x[size_t(r) * XC + c0 + c];
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::slice_cols;
  n.in = {detail::node_of(x, tape)};
  n.ints = {c0, XC};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> concat_rows(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  int C = parts[0].dim(1), R = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != C) throw ShapeError("concat_rows: column mismatch");
    R += p.dim(0);
  }
  TensorT<T> y({R, C});
  TapeT<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.tape) continue;
    if (tape && p.tape != tape) throw ContractError("concat_rows: inputs on different tapes");
    tape = p.tape;
  }
  typename TapeT<T>::Node n;
  n.op = OpKind::concat_rows;
  int r0 = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), y.data() + size_t(r0) * C);
    n.in.push_back(detail::node_of(p, tape));
    n.ints.push_back(p.dim(0));
    r0 += p.dim(0);
  }
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  int R = parts[0].dim(0), C = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != R) throw ShapeError("concat_cols: row mismatch");
    C += p.dim(1);
  }
  TensorT<T> y({R, C});
  TapeT<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.tape) continue;
    if (tape && p.tape != tape) throw ContractError("concat_cols: inputs on different tapes");
    tape = p.tape;
  }
  typename TapeT<T>::Node n;
  n.op = OpKind::concat_cols;
  int c0 = 0;
  for (const auto& p : parts) {
    int pc = p.dim(1);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < pc; ++c) y[size_t(r) * C + c0 + c] = p[size_t(r) * pc + c];
    n.in.push_back(detail::node_of(p, tape));
    n.ints.push_back(pc);
    c0 += pc;
  }
  return detail::attach(std::move(y), tape, std::move(n));
}

// --- reductions ---

template <class T>
TensorT<T> sum_all(const TensorT<T>& x) {
  double s = 0;
  for (size_t i = 0; i < x.numel(); ++i) s += double(x[i]);
  TensorT<T> y({1});
  y[0] = T(s);
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::sum_all;
  n.in = {detail::node_of(x, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

template <class T>
TensorT<T> mean_all(const TensorT<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
  double s = 0;
  for (size_t i = 0; i < x.numel(); ++i) s += double(x[i]);
  TensorT<T> y({1});
  y[0] = T(s / double(x.numel()));
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::mean_all;
  n.in = {detail::node_of(x, tape)};
  n.f0 = double(x.numel());
  return detail::attach(std::move(y), tape, std::move(n));
}

// --- layout ops for [C,F,H,W] latents ---

// y[c,f,s] = x[c,f+1,s] - x[c,f,s]; the temporal difference behind the
// smoothness loss term
template <class T>
TensorT<T> frame_delta(const TensorT<T>& x) {
  if (x.rank() != 4) throw ShapeError("frame_delta: need [C,F,H,W], got " + shape_str(x.shape));
  int C = x.dim(0), F = x.dim(1), S = x.dim(2) * x.dim(3);
  if (F < 2) throw ShapeError("frame_delta: need at least 2 frames");
  TensorT<T> y({C, F - 1, x.dim(2), x.dim(3)});
  for (int c = 0; c < C; ++c)
    for (int f = 0; f + 1 < F; ++f)
      for (int s = 0; s < S; ++s)
        y[(size_t(c) * (F - 1) + f) * S + s] =
            x[(size_t(c) * F + f + 1) * S + s] - x[(size_t(c) * F + f) * S + s];
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::frame_delta;
  n.in = {detail::node_of(x, tape)};
  n.ints = {C, F, S};
  return detail::attach(std::move(y), tape, std::move(n));
}

// [ch,F,H,W] -> [F*H*W, ch], token order frame-major then row-major spatial
template <class T>
TensorT<T> tokens_from_latent(const TensorT<T>& x) {
  if (x.rank() != 4) throw ShapeError("tokens_from_latent: need rank-4, got " + shape_str(x.shape));
  int ch = x.dim(0);
  size_t ntok = x.numel() / size_t(ch);
  TensorT<T> y({int(ntok), ch});
  for (size_t t = 0; t < ntok; ++t)
    for (int c = 0; c < ch; ++c) y[t * size_t(ch) + c] = x[size_t(c) * ntok + t];
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::tokens_from_latent;
  n.in = {detail::node_of(x, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

// [F*H*W, ch] -> [ch,F,H,W]
template <class T>
TensorT<T> latent_from_tokens(const TensorT<T>& x, int F, int H, int W) {
  if (x.rank() != 2 || x.dim(0) != F * H * W)
    throw ShapeError("latent_from_tokens: " + shape_str(x.shape) + " vs F*H*W=" +
                     std::to_string(F * H * W));
  int ch = x.dim(1);
  size_t ntok = size_t(x.dim(0));
  TensorT<T> y({ch, F, H, W});
  for (size_t t = 0; t < ntok; ++t)
    for (int c = 0; c < ch; ++c) y[size_t(c) * ntok + t] = x[t * size_t(ch) + c];
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::latent_from_tokens;
  n.in = {detail::node_of(x, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

// same elements, new shape
template <class T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<int> sh) {
  if (shape_numel(sh) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape) + " to " + shape_str(sh));
  TensorT<T> y(std::move(sh));
  std::copy(x.data(), x.data() + x.numel(), y.data());
  auto* tape = detail::tape_of<T>({&x});
  typename TapeT<T>::Node n;
  n.op = OpKind::reshape;
  n.in = {detail::node_of(x, tape)};
  return detail::attach(std::move(y), tape, std::move(n));
}

}  // namespace rap
