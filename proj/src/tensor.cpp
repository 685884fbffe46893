// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/tensor.hpp"

#include <cmath>
#include <numbers>

#include "patchfuse/errors.hpp"

namespace patchfuse {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::config: return "config";
    case ErrorCategory::label: return "label";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::lookup: return "lookup";
    case ErrorCategory::io: return "io";
    case ErrorCategory::transient_network: return "transient-network";
    case ErrorCategory::permanent_network: return "permanent-network";
    case ErrorCategory::data: return "data";
  }
  return "unknown";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  Tensor t({m, n});
  std::size_t i = 0;
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("ragged matrix literal");
    for (double v : r) t.data[i++] = v;
  }
  return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape));
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL))) {}

std::uint64_t CounterRng::next_u64() {
  // Two rounds keep consecutive counters decorrelated.
  return splitmix64(splitmix64(key_ + counter_++) ^ key_);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t CounterRng::below(std::size_t n) {
  if (n == 0) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace patchfuse
