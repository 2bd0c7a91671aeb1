#pragma once

// central-difference gradient verification. run at T=double: float forward
// noise divided by 2h swamps a 1e-4 tolerance, which is exactly why the whole
// graph is templated on the scalar.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rap/autodiff.hpp"

namespace rap {

struct GradcheckReport {
  double max_rel = 0;
  int coords_checked = 0;
  int failures = 0;
  std::string worst;  // "param[idx] analytic=.. fd=.." for the worst coordinate
};

// f: (TapeT<T>* tape) -> scalar TensorT<T>. with a tape, f must route every
// listed param through tape->watch so analytic gradients exist; with nullptr
// it is a plain evaluation. params are perturbed in place and restored.
// relative error uses a floored denominator so dead coordinates compare
// absolutely: |fd-g| / max(|fd|, |g|, 1e-2).
template <class T, class F>
GradcheckReport check_gradients(F&& f, const std::vector<std::pair<std::string, TensorT<T>*>>& params,
                                double h, double tol, Rng rng, int max_coords_per_param = 0) {
  TensorT<T> e1 = f(static_cast<TapeT<T>*>(nullptr));
  TensorT<T> e2 = f(static_cast<TapeT<T>*>(nullptr));
  if (e1.numel() != 1) throw ContractError("check_gradients: f must return a scalar");
  if (!bitwise_equal(e1, e2))
    throw ContractError("check_gradients: f is not deterministic, re-evaluation differs");
  if (!std::isfinite(double(e1[0]))) throw NumericError("check_gradients: non-finite baseline");

  TapeT<T> tape;
  TensorT<T> loss = f(&tape);
  tape.backward(loss);

  GradcheckReport rep;
  for (const auto& [name, p] : params) {
    TensorT<T> g = tape.grad_for(*p);
    size_t n = p->numel();
    std::vector<size_t> coords;
    if (max_coords_per_param <= 0 || n <= size_t(max_coords_per_param)) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int i = 0; i < max_coords_per_param; ++i) coords.push_back(size_t(rng.below(n)));
    }
    for (size_t idx : coords) {
      T saved = (*p)[idx];
      (*p)[idx] = T(double(saved) + h);
      double fp = double(f(static_cast<TapeT<T>*>(nullptr))[0]);
      (*p)[idx] = T(double(saved) - h);
      double fm = double(f(static_cast<TapeT<T>*>(nullptr))[0]);
      (*p)[idx] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("check_gradients: non-finite perturbed evaluation at " + name);
      double fd = (fp - fm) / (2.0 * h);
      double an = double(g[idx]);
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-2});
      ++rep.coords_checked;
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = name + "[" + std::to_string(idx) + "] analytic=" + std::to_string(an) +
                    " fd=" + std::to_string(fd);
      }
      if (rel > tol) ++rep.failures;
    }
  }
  return rep;
}

}  // namespace rap
