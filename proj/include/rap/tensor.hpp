#pragma once

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rap/common.hpp"

namespace rap {

template <class T>
class TapeT;

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline size_t shape_numel(const std::vector<int>& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= size_t(d);
  }
  return n;
}

// dense row-major tensor. the buffer is shared; ops never mutate inputs, they
// allocate fresh outputs, so sharing is safe. `tape`/`node` tie a tensor to the
// autodiff tape that produced it (node -1 means constant, no gradient flows).
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::shared_ptr<std::vector<T>> buf;
  TapeT<T>* tape = nullptr;
  int node = -1;

  TensorT() = default;

  explicit TensorT(std::vector<int> sh)
      : shape(std::move(sh)), buf(std::make_shared<std::vector<T>>(shape_numel(shape), T(0))) {}

  TensorT(std::vector<int> sh, std::vector<T> vals) : shape(std::move(sh)) {
    if (vals.size() != shape_numel(shape))
      throw ShapeError("tensor init: " + std::to_string(vals.size()) + " values for shape " +
                       shape_str(shape));
    buf = std::make_shared<std::vector<T>>(std::move(vals));
  }

  size_t numel() const { return buf ? buf->size() : 0; }
  int dim(int i) const { return shape[size_t(i)]; }
  int rank() const { return int(shape.size()); }

  T* data() { return buf->data(); }
  const T* data() const { return buf->data(); }

  T& operator[](size_t i) { return (*buf)[i]; }
  const T& operator[](size_t i) const { return (*buf)[i]; }

  bool tracked() const { return tape != nullptr && node >= 0; }

  // deep copy of the buffer, drops tape linkage
  TensorT clone() const {
    TensorT out;
    out.shape = shape;
    out.buf = std::make_shared<std::vector<T>>(*buf);
    return out;
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.buf = std::make_shared<std::vector<U>>(numel());
    for (size_t i = 0; i < numel(); ++i) (*out.buf)[i] = U((*buf)[i]);
    return out;
  }

  static TensorT full(std::vector<int> sh, T v) {
    TensorT out(std::move(sh));
    for (auto& x : *out.buf) x = v;
    return out;
  }

  static TensorT randn(std::vector<int> sh, Rng& rng, double stddev = 1.0) {
    TensorT out(std::move(sh));
    for (auto& x : *out.buf) x = T(rng.normal() * stddev);
    return out;
  }

  static TensorT rand_uniform(std::vector<int> sh, Rng& rng, double lo, double hi) {
    TensorT out(std::move(sh));
    for (auto& x : *out.buf) x = T(rng.uniform(lo, hi));
    return out;
  }
};

using Tensor = TensorT<float>;

template <class T>
inline void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

template <class T>
inline bool bitwise_equal(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data(), b.data(), a.numel() * sizeof(T)) == 0;
}

template <class T>
inline double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0;
  for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace rap
