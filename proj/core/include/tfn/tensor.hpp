#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfn/error.hpp"

namespace tfn {

#ifdef TFN_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape &shape);
std::string shape_string(const Shape &shape);

// Batch-of-images view of a rank-4 NHWC shape.
struct Shape4 {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  Shape4() = default;
  Shape4(std::size_t n_, std::size_t h_, std::size_t w_, std::size_t c_);

  std::size_t size() const { return n * h * w * c; }
  std::size_t pixels() const { return n * h * w; }
  Shape dims() const { return {n, h, w, c}; }
  bool operator==(const Shape4 &) const = default;
};

// Dense row-major tensor. Activations use NHWC, conv weights (kh, kw, Cin, Cout).
template <typename T>
class BasicTensor {
public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Shape4 shape4() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T> &vec() const { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  T &at(std::size_t n, std::size_t h, std::size_t w, std::size_t c);
  const T &at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const;

  // Same data under a new shape of equal element count.
  BasicTensor reshaped(Shape shape) const &;
  BasicTensor reshaped(Shape shape) &&;

  void fill(T value);
  bool all_finite() const;
  // Throws NumericError naming `where` when any element is NaN/Inf.
  void check_finite(std::string_view where) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor &) const = default;

private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<Real>;
using TensorF = BasicTensor<float>;
using TensorD = BasicTensor<double>;

#ifdef TFN_CHECK_NUMERICS
#define TFN_CHECK_FINITE(t, where) (t).check_finite(where)
#else
#define TFN_CHECK_FINITE(t, where) ((void)0)
#endif

template <typename T>
BasicTensor<T> create(Shape shape, T fill);
template <typename T>
BasicTensor<T> create(Shape shape, std::vector<T> data);

// c[i,j] = sum_k a[i,k] * b[k,j]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T> &a, const BasicTensor<T> &b);

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T> &a);

struct ConvGeometry {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  // Output extent along one axis; throws GeometryError when not integral.
  std::size_t out_extent(std::size_t in, std::size_t k) const;
  std::size_t out_h(std::size_t h) const { return out_extent(h, kh); }
  std::size_t out_w(std::size_t w) const { return out_extent(w, kw); }
};

// Rows are receptive fields flattened in (kh, kw, C) order; padding reads as 0.
template <typename T>
BasicTensor<T> im2col(const BasicTensor<T> &x, std::size_t kh, std::size_t kw,
                      std::size_t stride, std::size_t pad);

// Adjoint of im2col: scatters-and-adds column rows back into an image.
template <typename T>
BasicTensor<T> col2im(const BasicTensor<T> &cols, const Shape4 &image,
                      std::size_t kh, std::size_t kw, std::size_t stride,
                      std::size_t pad);

// Chunked forms used by the convolution layer. `rows` covers output rows
// [row_begin, row_begin + rows.size()/K) of the full im2col matrix.
template <typename T>
void im2col_rows(std::span<const T> x, const Shape4 &in, const ConvGeometry &g,
                 std::size_t row_begin, std::span<T> rows);
template <typename T>
void col2im_rows_add(std::span<const T> rows, const Shape4 &in,
                     const ConvGeometry &g, std::size_t row_begin,
                     std::span<T> x);

// out[n,h,w,c] = x[n,h,w,c] * map[n,h,w,0]
template <typename T>
BasicTensor<T> broadcast_mul(const BasicTensor<T> &x, const BasicTensor<T> &map);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T> *> &parts);
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>> &parts);

// Channels [begin, begin+count) of an NHWC tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T> &x, std::size_t begin,
                              std::size_t count);

template <typename T>
T dot(const BasicTensor<T> &a, const BasicTensor<T> &b);

} // namespace tfn
