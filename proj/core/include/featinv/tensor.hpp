#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace featinv {

// Dense shape, outermost dimension first. (C,H,W) for image-like data,
// (tokens, dim) for attention features.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
long shape_numel(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

// Contiguous row-major double tensor. All numeric state in the toolkit is
// kept in doubles so that finite-difference checks and reproducibility
// comparisons are not dominated by rounding noise.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor from(Shape s, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  const double& operator[](long i) const {
    return data_[static_cast<size_t>(i)];
  }

  // (C,H,W) accessor
  double& at(int c, int h, int w) {
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  const double& at(int c, int h, int w) const {
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  // (rows, cols) accessor
  double& at(int i, int j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  const double& at(int i, int j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }

  Tensor reshaped(Shape s) const;

  Tensor& fill_(double v);
  Tensor& add_(const Tensor& o, double scale = 1.0);
  Tensor& scale_(double a);
  Tensor& clamp_(double lo, double hi);

  double sum() const;
  double mean() const;
  double var_pop() const;  // population variance
  double min() const;
  double max() const;
  double dot(const Tensor& o) const;
  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_eq(shape_, o.shape_); }

 private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

// FNV-1a over raw bytes; used for config hashes and artifact checksums.
std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                      std::uint64_t seed = 1469598103934665603ull);
std::uint64_t tensor_checksum(const Tensor& t);

}  // namespace featinv
