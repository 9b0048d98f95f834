#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace xlenc {

/// Dense row-major matrix.
template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Named view over one parameter tensor, used to walk a parameter set in
/// its fixed serialization order.
template <class T>
struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<T> values;
};

}  // namespace xlenc
