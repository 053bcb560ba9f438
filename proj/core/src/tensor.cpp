#include "tfn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "tfn/kernels.hpp"

namespace tfn {

std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape &shape) {
  if (shape.empty())
    throw SizeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0)
      throw SizeError("tensor dimension must be positive, got " +
                      shape_string(shape));
}

} // namespace

Shape4::Shape4(std::size_t n_, std::size_t h_, std::size_t w_, std::size_t c_)
    : n(n_), h(h_), w(w_), c(c_) {
  if (n == 0 || h == 0 || w == 0 || c == 0)
    throw SizeError("Shape4 dimensions must all be positive");
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_size(shape_) != data_.size())
    throw SizeError("data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_string(shape_));
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw SizeError("axis " + std::to_string(axis) + " out of range for shape " +
                    shape_string(shape_));
  return shape_[axis];
}

template <typename T>
Shape4 BasicTensor<T>::shape4() const {
  if (shape_.size() != 4)
    throw SizeError("expected NHWC tensor, got shape " + shape_string(shape_));
  return {shape_[0], shape_[1], shape_[2], shape_[3]};
}

template <typename T>
T &BasicTensor<T>::at(std::size_t n, std::size_t h, std::size_t w,
                      std::size_t c) {
  return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}

template <typename T>
const T &BasicTensor<T>::at(std::size_t n, std::size_t h, std::size_t w,
                            std::size_t c) const {
  return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const & {
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
  return BasicTensor(std::move(shape), std::move(data_));
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicTensor<T>::check_finite(std::string_view where) const {
  if (!all_finite())
    throw NumericError("non-finite value in " + std::string(where));
}

template <typename T>
BasicTensor<T> create(Shape shape, T fill) {
  return BasicTensor<T>(std::move(shape), fill);
}

template <typename T>
BasicTensor<T> create(Shape shape, std::vector<T> data) {
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T> &a, const BasicTensor<T> &b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw SizeError("matmul expects rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw SizeError("matmul inner dimensions differ: " +
                    shape_string(a.shape()) + " x " + shape_string(b.shape()));
  BasicTensor<T> c({m, n});
  kernels::gemm_nn<T>(a.data(), b.data(), c.data(), m, k, n, false);
  return c;
}

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T> &a) {
  if (a.rank() != 2)
    throw SizeError("transpose2d expects a rank-2 tensor");
  BasicTensor<T> out({a.dim(1), a.dim(0)});
  kernels::transpose<T>(a.data(), out.data(), a.dim(0), a.dim(1));
  return out;
}

std::size_t ConvGeometry::out_extent(std::size_t in, std::size_t k) const {
  if (stride == 0)
    throw GeometryError("stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (k == 0 || padded < k)
    throw GeometryError("window " + std::to_string(k) +
                        " larger than padded input " + std::to_string(padded));
  if ((padded - k) % stride != 0)
    throw GeometryError("window " + std::to_string(k) + " with stride " +
                        std::to_string(stride) +
                        " does not tile padded input " +
                        std::to_string(padded));
  return (padded - k) / stride + 1;
}

namespace {

// Kernel columns [lo, hi) of an output column that land inside the image.
struct TapRange {
  std::size_t lo, hi;
};

inline TapRange valid_taps(std::size_t o, const ConvGeometry &g, std::size_t k,
                           std::size_t extent) {
  const auto start = static_cast<std::ptrdiff_t>(o * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -start);
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k),
                               static_cast<std::ptrdiff_t>(extent) - start);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

} // namespace

template <typename T>
void im2col_rows(std::span<const T> x, const Shape4 &in, const ConvGeometry &g,
                 std::size_t row_begin, std::span<T> rows) {
  const std::size_t ho = g.out_h(in.h), wo = g.out_w(in.w);
  const std::size_t C = in.c;
  const std::size_t K = g.kh * g.kw * C;
  const std::size_t nrows = rows.size() / K;
  for (std::size_t r = 0; r < nrows; ++r) {
    const std::size_t global = row_begin + r;
    const std::size_t n = global / (ho * wo);
    const std::size_t oh = (global / wo) % ho;
    const std::size_t ow = global % wo;
    const TapRange rh = valid_taps(oh, g, g.kh, in.h);
    const TapRange rw = valid_taps(ow, g, g.kw, in.w);
    T *dst = rows.data() + r * K;
    std::fill(dst, dst + rh.lo * g.kw * C, T(0));
    for (std::size_t ki = rh.lo; ki < rh.hi; ++ki) {
      T *drow = dst + ki * g.kw * C;
      const std::size_t ih = oh * g.stride + ki - g.pad;
      const std::size_t iw0 = ow * g.stride + rw.lo - g.pad;
      const T *src = x.data() + ((n * in.h + ih) * in.w + iw0) * C;
      std::fill(drow, drow + rw.lo * C, T(0));
      if (g.stride == 1) {
        std::copy(src, src + (rw.hi - rw.lo) * C, drow + rw.lo * C);
      } else {
        for (std::size_t kj = rw.lo; kj < rw.hi; ++kj)
          std::copy(src + (kj - rw.lo) * C, src + (kj - rw.lo + 1) * C, drow + kj * C);
      }
      std::fill(drow + rw.hi * C, drow + g.kw * C, T(0));
    }
    std::fill(dst + rh.hi * g.kw * C, dst + K, T(0));
  }
}

template <typename T>
void col2im_rows_add(std::span<const T> rows, const Shape4 &in,
                     const ConvGeometry &g, std::size_t row_begin,
                     std::span<T> x) {
  const std::size_t ho = g.out_h(in.h), wo = g.out_w(in.w);
  const std::size_t C = in.c;
  const std::size_t K = g.kh * g.kw * C;
  const std::size_t nrows = rows.size() / K;
  // Sequential: distinct rows scatter into overlapping pixels.
  for (std::size_t r = 0; r < nrows; ++r) {
    const std::size_t global = row_begin + r;
    const std::size_t n = global / (ho * wo);
    const std::size_t oh = (global / wo) % ho;
    const std::size_t ow = global % wo;
    const TapRange rh = valid_taps(oh, g, g.kh, in.h);
    const TapRange rw = valid_taps(ow, g, g.kw, in.w);
    const T *src = rows.data() + r * K;
    for (std::size_t ki = rh.lo; ki < rh.hi; ++ki) {
      const std::size_t ih = oh * g.stride + ki - g.pad;
      const T *srow = src + ki * g.kw * C;
      if (g.stride == 1) {
        const std::size_t iw0 = ow + rw.lo - g.pad;
        T *dst = x.data() + ((n * in.h + ih) * in.w + iw0) * C;
        const T *s0 = srow + rw.lo * C;
        const std::size_t len = (rw.hi - rw.lo) * C;
        for (std::size_t i = 0; i < len; ++i)
          dst[i] += s0[i];
      } else {
        for (std::size_t kj = rw.lo; kj < rw.hi; ++kj) {
          const std::size_t iw = ow * g.stride + kj - g.pad;
          T *dst = x.data() + ((n * in.h + ih) * in.w + iw) * C;
          for (std::size_t c = 0; c < C; ++c)
            dst[c] += srow[kj * C + c];
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> im2col(const BasicTensor<T> &x, std::size_t kh, std::size_t kw,
                      std::size_t stride, std::size_t pad) {
  const Shape4 in = x.shape4();
  const ConvGeometry g{kh, kw, stride, pad};
  const std::size_t rows = in.n * g.out_h(in.h) * g.out_w(in.w);
  BasicTensor<T> out({rows, kh * kw * in.c});
  im2col_rows<T>(x.data(), in, g, 0, out.data());
  return out;
}

template <typename T>
BasicTensor<T> col2im(const BasicTensor<T> &cols, const Shape4 &image,
                      std::size_t kh, std::size_t kw, std::size_t stride,
                      std::size_t pad) {
  const ConvGeometry g{kh, kw, stride, pad};
  const std::size_t rows = image.n * g.out_h(image.h) * g.out_w(image.w);
  if (cols.rank() != 2 || cols.dim(0) != rows || cols.dim(1) != kh * kw * image.c)
    throw SizeError("col2im: column matrix " + shape_string(cols.shape()) +
                    " does not match image " + shape_string(image.dims()));
  BasicTensor<T> out(image.dims());
  col2im_rows_add<T>(cols.data(), image, g, 0, out.data());
  return out;
}

template <typename T>
BasicTensor<T> broadcast_mul(const BasicTensor<T> &x,
                             const BasicTensor<T> &map) {
  const Shape4 xs = x.shape4();
  const Shape4 ms = map.shape4();
  if (ms.c != 1 || xs.n != ms.n || xs.h != ms.h || xs.w != ms.w)
    throw SizeError("broadcast_mul: map " + shape_string(map.shape()) +
                    " incompatible with " + shape_string(x.shape()));
  BasicTensor<T> out(x.shape());
  const std::size_t C = xs.c;
  const T *xp = x.data().data();
  const T *mp = map.data().data();
  T *op = out.data().data();
  for (std::size_t p = 0; p < xs.pixels(); ++p) {
    const T m = mp[p];
    for (std::size_t c = 0; c < C; ++c)
      op[p * C + c] = xp[p * C + c] * m;
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T> *> &parts) {
  if (parts.empty())
    throw SizeError("concat_channels needs at least one part");
  const Shape4 first = parts.front()->shape4();
  std::size_t total_c = 0;
  for (const auto *p : parts) {
    const Shape4 s = p->shape4();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw SizeError("concat_channels: spatial mismatch " +
                      shape_string(s.dims()) + " vs " +
                      shape_string(first.dims()));
    total_c += s.c;
  }
  BasicTensor<T> out({first.n, first.h, first.w, total_c});
  T *op = out.data().data();
  std::size_t offset = 0;
  for (const auto *p : parts) {
    const std::size_t c = p->dim(3);
    const T *src = p->data().data();
    for (std::size_t px = 0; px < first.pixels(); ++px)
      std::copy(src + px * c, src + (px + 1) * c, op + px * total_c + offset);
    offset += c;
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>> &parts) {
  std::vector<const BasicTensor<T> *> ptrs;
  ptrs.reserve(parts.size());
  for (const auto &p : parts)
    ptrs.push_back(&p);
  return concat_channels(ptrs);
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T> &x, std::size_t begin,
                              std::size_t count) {
  const Shape4 s = x.shape4();
  if (count == 0 || begin + count > s.c)
    throw SizeError("slice_channels: range out of bounds");
  BasicTensor<T> out({s.n, s.h, s.w, count});
  const T *src = x.data().data();
  T *dst = out.data().data();
  for (std::size_t px = 0; px < s.pixels(); ++px)
    std::copy(src + px * s.c + begin, src + px * s.c + begin + count,
              dst + px * count);
  return out;
}

template <typename T>
T dot(const BasicTensor<T> &a, const BasicTensor<T> &b) {
  if (a.size() != b.size())
    throw SizeError("dot: size mismatch");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

#define TFN_INSTANTIATE(T)                                                     \
  template class BasicTensor<T>;                                               \
  template BasicTensor<T> create<T>(Shape, T);                                 \
  template BasicTensor<T> create<T>(Shape, std::vector<T>);                    \
  template BasicTensor<T> matmul<T>(const BasicTensor<T> &,                    \
                                    const BasicTensor<T> &);                   \
  template BasicTensor<T> transpose2d<T>(const BasicTensor<T> &);              \
  template BasicTensor<T> im2col<T>(const BasicTensor<T> &, std::size_t,       \
                                    std::size_t, std::size_t, std::size_t);    \
  template BasicTensor<T> col2im<T>(const BasicTensor<T> &, const Shape4 &,    \
                                    std::size_t, std::size_t, std::size_t,     \
                                    std::size_t);                              \
  template void im2col_rows<T>(std::span<const T>, const Shape4 &,             \
                               const ConvGeometry &, std::size_t,              \
                               std::span<T>);                                  \
  template void col2im_rows_add<T>(std::span<const T>, const Shape4 &,         \
                                   const ConvGeometry &, std::size_t,          \
                                   std::span<T>);                              \
  template BasicTensor<T> broadcast_mul<T>(const BasicTensor<T> &,             \
                                           const BasicTensor<T> &);            \
  template BasicTensor<T> concat_channels<T>(                                  \
      const std::vector<const BasicTensor<T> *> &);                            \
  template BasicTensor<T> concat_channels<T>(                                  \
      const std::vector<BasicTensor<T>> &);                                    \
  template BasicTensor<T> slice_channels<T>(const BasicTensor<T> &,            \
                                            std::size_t, std::size_t);         \
  template T dot<T>(const BasicTensor<T> &, const BasicTensor<T> &);

TFN_INSTANTIATE(float)
TFN_INSTANTIATE(double)
#undef TFN_INSTANTIATE

} // namespace tfn
