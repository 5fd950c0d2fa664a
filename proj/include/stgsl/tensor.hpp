/*
 * Copyright 2026 The stgsl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace stgsl {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned allocator. Eigen's vectorized kernels choose their
/// peeling by pointer alignment, so fixed alignment keeps results
/// bit-identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Row-major dense matrix used by the analysis-facing APIs.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with a runtime shape.
///
/// Activations inside the network use the layout [batch][time][node][channel]
/// so that every (batch, time) slice is a contiguous node-by-channel matrix.
struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::span<const double> values)
      : shape(std::move(s)), data(values.begin(), values.end()) {
    if (data.size() != shape_size(shape)) {
      throw std::invalid_argument("Tensor: " + std::to_string(data.size()) +
                                  " values do not fit shape " + shape_string(shape));
    }
  }

  Tensor(Shape s, std::initializer_list<double> values)
      : Tensor(std::move(s), std::span<const double>(values.begin(), values.size())) {}

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor from_matrix(const Matrix& m) {
    return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                  std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double item() const { return data.at(0); }

  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }
  std::vector<double> to_vector() const { return {data.begin(), data.end()}; }

  /// View of a rank-2 tensor (or a reshaped prefix) as an Eigen matrix.
  MatrixMap as_matrix(std::size_t rows, std::size_t cols) {
    return MatrixMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatrixMap as_matrix(std::size_t rows, std::size_t cols) const {
    return ConstMatrixMap(data.data(), static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(cols));
  }
  Matrix to_matrix() const {
    if (rank() != 2) throw std::invalid_argument("to_matrix: tensor of shape " + shape_string(shape));
    return as_matrix(shape[0], shape[1]);
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const;
};

}  // namespace stgsl
