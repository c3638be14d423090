#pragma once

#include <cstdint>
#include <string>

#include "latentmc/core.hpp"

namespace latentmc::nn {

/// Channel-major (C, H, W) activation shape. Vectors are (n, 1, 1).
struct Shape {
  std::uint32_t c = 0, h = 1, w = 1;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

struct Tensor {
  Shape shape;
  Vector data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}
  Tensor(Shape s, Vector v) : shape(s), data(std::move(v)) {
    if (data.size() != shape.size()) throw ShapeError("Tensor: data size does not match shape " + shape.str());
  }

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape.h + y) * shape.w + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * shape.h + y) * shape.w + x]; }
  std::size_t size() const { return data.size(); }
};

}  // namespace latentmc::nn
