#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

namespace dexfm {

// Dense row-major tensor of 64-bit reals. Scalars use shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor from_vector(std::vector<double> values);
  static Tensor from_matrix(std::size_t r, std::size_t c, std::initializer_list<double> values);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data[i]; }
  double& operator[](std::size_t i) { return data[i]; }
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j);
  const double* row_ptr(std::size_t i) const { return data.data() + i * shape.back(); }
  double* row_ptr(std::size_t i) { return data.data() + i * shape.back(); }

  double scalar_value() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;
};

std::size_t shape_numel(const std::vector<std::size_t>& extents);
std::string shape_text(const std::vector<std::size_t>& extents);

// Checkpoint wire format: rank then extents as little-endian 64-bit
// unsigned integers, followed by the row-major IEEE-754 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);

}  // namespace dexfm
