#include "featinv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "featinv/error.hpp"

namespace featinv {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) {
    if (d < 0) throw_input("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return s.empty() ? 0 : n;
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor Tensor::from(Shape s, std::vector<double> values) {
  if (shape_numel(s) != static_cast<long>(values.size()))
    throw_input("value count " + std::to_string(values.size()) +
                " does not match shape " + shape_str(s));
  Tensor t;
  t.shape_ = std::move(s);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != size())
    throw_input("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
  Tensor t = *this;
  t.shape_ = std::move(s);
  return t;
}

Tensor& Tensor::fill_(double v) {
  std::fill(data_.begin(), data_.end(), v);
  return *this;
}

Tensor& Tensor::add_(const Tensor& o, double scale) {
  if (!same_shape(o))
    throw_input("shape mismatch in add: " + shape_str(shape_) + " vs " +
                shape_str(o.shape_));
  const double* p = o.data();
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * p[i];
  return *this;
}

Tensor& Tensor::scale_(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Tensor& Tensor::clamp_(double lo, double hi) {
  for (double& v : data_) v = std::min(hi, std::max(lo, v));
  return *this;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / size(); }

double Tensor::var_pop() const {
  if (data_.empty()) return 0.0;
  const double mu = mean();
  double acc = 0.0;
  for (double v : data_) acc += (v - mu) * (v - mu);
  return acc / size();
}

double Tensor::min() const {
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::dot(const Tensor& o) const {
  if (!same_shape(o)) throw_input("shape mismatch in dot");
  double s = 0.0;
  for (size_t i = 0; i < data_.size(); ++i) s += data_[i] * o.data_[i];
  return s;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw_input("shape mismatch in max_abs_diff");
  double m = 0.0;
  for (long i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t tensor_checksum(const Tensor& t) {
  std::uint64_t h = fnv1a64(t.data(), sizeof(double) * t.size());
  for (int d : t.shape()) h = fnv1a64(&d, sizeof(d), h);
  return h;
}

}  // namespace featinv
