#include "dexfm/tensor.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dexfm {

Tensor::Tensor(std::vector<std::size_t> extents, double fill)
    : shape(std::move(extents)), data(shape_numel(shape), fill) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  for (std::size_t e : shape)
    if (e == 0) throw std::invalid_argument("tensor: zero extent in " + shape_text(shape));
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.data = std::move(values);
  if (t.data.empty()) throw std::invalid_argument("tensor: empty vector");
  return t;
}

Tensor Tensor::from_matrix(std::size_t r, std::size_t c, std::initializer_list<double> values) {
  if (values.size() != r * c) throw std::invalid_argument("tensor: matrix literal size mismatch");
  Tensor t({r, c});
  t.data.assign(values);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("tensor: rows() on rank-" + std::to_string(rank()));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()));
  return shape[1];
}

double Tensor::at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
double& Tensor::at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }

double Tensor::scalar_value() const {
  if (numel() != 1) throw std::invalid_argument("tensor: scalar_value() on " + shape_text(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::size_t shape_numel(const std::vector<std::size_t>& extents) {
  std::size_t n = 1;
  for (std::size_t e : extents) n *= e;
  return n;
}

std::string shape_text(const std::vector<std::size_t>& extents) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < extents.size(); ++i) os << (i ? "x" : "") << extents[i];
  os << ")";
  return os.str();
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t read_u64(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (!in) throw std::runtime_error("tensor read: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_u64(out, t.rank());
  for (std::size_t e : t.shape) write_u64(out, e);
  for (double d : t.data) write_u64(out, std::bit_cast<std::uint64_t>(d));
}

Tensor read_tensor(std::istream& in) {
  std::uint64_t rank = read_u64(in);
  if (rank == 0 || rank > 8) throw std::runtime_error("tensor read: bad rank " + std::to_string(rank));
  std::vector<std::size_t> extents(rank);
  for (auto& e : extents) {
    e = static_cast<std::size_t>(read_u64(in));
    if (e == 0) throw std::runtime_error("tensor read: zero extent");
  }
  Tensor t(extents);
  for (double& d : t.data) d = std::bit_cast<double>(read_u64(in));
  return t;
}

}  // namespace dexfm
