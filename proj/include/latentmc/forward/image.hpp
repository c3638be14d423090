#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "latentmc/core.hpp"

namespace latentmc {

/// Dense row-major matrix of doubles; the payload of every image/sinogram file.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, Vector v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != r * c) throw ShapeError("Matrix: value count does not match dims");
  }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const Matrix&) const = default;
};

/// Square scalar image, row-major. Row 0 is the top of the image.
class ImageGrid {
public:
  ImageGrid() = default;
  explicit ImageGrid(std::size_t side, double fill = 0.0) : side_(side), values_(side * side, fill) {}
  ImageGrid(std::size_t side, Vector values) : side_(side), values_(std::move(values)) {
    if (values_.size() != side_ * side_)
      throw ShapeError("ImageGrid: expected " + std::to_string(side_ * side_) + " values, got " +
                       std::to_string(values_.size()));
  }

  static ImageGrid from_matrix(const Matrix& m) {
    if (m.rows != m.cols) throw ShapeError("ImageGrid: images must be square");
    return ImageGrid(m.rows, m.values);
  }
  Matrix to_matrix() const { return Matrix(side_, side_, values_); }

  std::size_t side() const { return side_; }
  std::size_t height() const { return side_; }
  std::size_t width() const { return side_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * side_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * side_ + c]; }

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  bool operator==(const ImageGrid&) const = default;

private:
  std::size_t side_ = 0;
  Vector values_;
};

}  // namespace latentmc
