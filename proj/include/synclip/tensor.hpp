#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "synclip/errors.hpp"

namespace synclip {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    check_contract(d > 0, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

// Plain dense buffer; the autodiff layer wraps these in graph nodes.
template <typename S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape sh) : shape(std::move(sh)), data(size_t(shape_numel(shape)), S(0)) {}
  Tensor(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
    check_contract(int64_t(data.size()) == shape_numel(shape), "tensor data length must equal product of shape");
  }

  static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
  static Tensor full(Shape sh, S v) {
    Tensor t(std::move(sh));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  int64_t numel() const { return int64_t(data.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    int64_t c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return int(c);
  }

  S& operator()(int r, int c) { return data[size_t(r) * size_t(cols()) + size_t(c)]; }
  S operator()(int r, int c) const { return data[size_t(r) * size_t(cols()) + size_t(c)]; }

  template <typename T2>
  Tensor<T2> cast() const {
    Tensor<T2> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = T2(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace synclip
