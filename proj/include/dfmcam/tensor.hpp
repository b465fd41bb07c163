#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace dfmcam {

/// N, C, D, H, W. Dense activations use (N, F, 1, 1, 1).
using Shape5 = std::array<int, 5>;

inline std::size_t shape_size(const Shape5& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string to_string(const Shape5& s);

/// Batch of activations in NCDHW order.
template <typename Real>
struct Tensor {
  Shape5 shape{0, 0, 0, 0, 0};
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(const Shape5& s, Real fill = Real(0)) : shape(s), data(shape_size(s), fill) {}

  void reset(const Shape5& s) {
    shape = s;
    data.assign(shape_size(s), Real(0));
  }

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int d() const { return shape[2]; }
  int h() const { return shape[3]; }
  int w() const { return shape[4]; }
  std::size_t size() const { return data.size(); }
  std::size_t spatial() const { return static_cast<std::size_t>(shape[2]) * shape[3] * shape[4]; }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * spatial(); }

  std::size_t index(int n_, int c_, int z, int y, int x) const {
    return (((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + z) * shape[3] + y) * shape[4] + x;
  }
  Real& at(int n_, int c_, int z, int y, int x) { return data[index(n_, c_, z, y, x)]; }
  Real at(int n_, int c_, int z, int y, int x) const { return data[index(n_, c_, z, y, x)]; }

  Real* sample(int n_) { return data.data() + static_cast<std::size_t>(n_) * sample_size(); }
  const Real* sample(int n_) const { return data.data() + static_cast<std::size_t>(n_) * sample_size(); }
};

}  // namespace dfmcam
