#include "tfn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tfn/kernels.hpp"

namespace tfn {

namespace {

// Target im2col buffer elements per chunk (1 MiB of floats, L2-resident),
// but never fewer rows than kMinChunkRows.
constexpr std::size_t kChunkElements = std::size_t{1} << 18;
constexpr std::size_t kMinChunkRows = 64;

template <typename T>
void require_cache(const std::optional<BasicTensor<T>> &cache,
                   const std::string &kind) {
  if (!cache)
    throw StateError(kind + ": backward called without a Train-mode forward");
}

template <typename T>
void require_same_shape(const BasicTensor<T> &a, const Shape &expected,
                        const std::string &what) {
  if (a.shape() != expected)
    throw SizeError(what + ": expected shape " + shape_string(expected) +
                    ", got " + shape_string(a.shape()));
}

} // namespace

template <typename T>
void Layer<T>::zero_grad() {
  for (auto &p : parameters())
    if (p.grad)
      p.grad->fill(T(0));
}

// ---------------------------------------------------------------- Conv2D

template <typename T>
Conv2D<T>::Conv2D(std::size_t kh, std::size_t kw, std::size_t cin,
                  std::size_t cout, std::size_t stride, std::size_t pad)
    : geom_{kh, kw, stride, pad}, cin_(cin), cout_(cout),
      weight_({kh, kw, cin, cout}), bias_({cout}), dweight_({kh, kw, cin, cout}),
      dbias_({cout}) {
  if (stride == 0)
    throw GeometryError("conv2d: stride must be positive");
}

template <typename T>
Conv2D<T> Conv2D<T>::same(std::size_t k, std::size_t cin, std::size_t cout) {
  if (k % 2 == 0)
    throw GeometryError("same padding requires an odd kernel, got " +
                        std::to_string(k));
  return Conv2D(k, k, cin, cout, 1, (k - 1) / 2);
}

template <typename T>
std::size_t Conv2D<T>::chunk_rows() const {
  const std::size_t k = geom_.kh * geom_.kw * cin_;
  return std::max<std::size_t>(kMinChunkRows, kChunkElements / k);
}

template <typename T>
Shape Conv2D<T>::output_shape(const Shape &input) const {
  if (input.size() != 4 || input[3] != cin_)
    throw SizeError("conv2d: expected [N,H,W," + std::to_string(cin_) +
                    "] input, got " + shape_string(input));
  return {input[0], geom_.out_h(input[1]), geom_.out_w(input[2]), cout_};
}

template <typename T>
void Conv2D<T>::initialize(Rng &rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(geom_.kh * geom_.kw * cin_));
  for (auto &w : weight_.data())
    w = static_cast<T>(rng.normal() * std);
  bias_.fill(T(0));
}

template <typename T>
std::vector<ParamRef<T>> Conv2D<T>::parameters() {
  return {{"weight", &weight_, &dweight_}, {"bias", &bias_, &dbias_}};
}

template <typename T>
BasicTensor<T> Conv2D<T>::forward(const BasicTensor<T> &x, Mode mode) {
  const Shape out_shape = output_shape(x.shape());
  const Shape4 in = x.shape4();
  const std::size_t K = geom_.kh * geom_.kw * cin_;
  const std::size_t rows = out_shape[0] * out_shape[1] * out_shape[2];
  BasicTensor<T> out(out_shape);

  const std::size_t cr = std::min(chunk_rows(), rows);
  std::vector<T> col(cr * K);
  std::vector<T> wt(K * cout_);
  kernels::transpose<T>(weight_.data(), wt, K, cout_);
  std::span<T> out_span = out.data();
  for (std::size_t r0 = 0; r0 < rows; r0 += cr) {
    const std::size_t nr = std::min(cr, rows - r0);
    std::span<T> chunk(col.data(), nr * K);
    im2col_rows<T>(x.data(), in, geom_, r0, chunk);
    kernels::gemm_nt<T>(chunk, wt, out_span.subspan(r0 * cout_, nr * cout_), nr, K,
                        cout_, false);
  }
  const T *b = bias_.data().data();
  T *o = out_span.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cout_; ++c)
      o[r * cout_ + c] += b[c];

  if (mode == Mode::Train)
    input_ = x;
  return out;
}

template <typename T>
void Conv2D<T>::flipped_input_grad(const BasicTensor<T> &grad, BasicTensor<T> &dx) const {
  const std::size_t kh = geom_.kh, kw = geom_.kw;
  const ConvGeometry fg{kh, kw, 1, kh - 1 - geom_.pad};
  const Shape4 gs = grad.shape4();
  const std::size_t K = kh * kw * cout_;
  const std::size_t rows = dx.size() / cin_;
  // wf[(a,b,co), ci] = w[kh-1-a, kw-1-b, ci, co]
  std::vector<T> wf(K * cin_);
  const T *w = weight_.data().data();
  for (std::size_t a = 0; a < kh; ++a)
    for (std::size_t b = 0; b < kw; ++b)
      for (std::size_t ci = 0; ci < cin_; ++ci)
        for (std::size_t co = 0; co < cout_; ++co)
          wf[((a * kw + b) * cout_ + co) * cin_ + ci] =
              w[(((kh - 1 - a) * kw + (kw - 1 - b)) * cin_ + ci) * cout_ + co];
  const std::size_t cr =
      std::min(rows, std::max<std::size_t>(kMinChunkRows, kChunkElements / K));
  std::vector<T> col(cr * K);
  std::span<T> out = dx.data();
  for (std::size_t r0 = 0; r0 < rows; r0 += cr) {
    const std::size_t nr = std::min(cr, rows - r0);
    std::span<T> chunk(col.data(), nr * K);
    im2col_rows<T>(grad.data(), gs, fg, r0, chunk);
    kernels::gemm_nn<T>(chunk, wf, out.subspan(r0 * cin_, nr * cin_), nr, K, cin_, false);
  }
}

template <typename T>
BasicTensor<T> Conv2D<T>::backward(const BasicTensor<T> &grad) {
  require_cache(input_, kind());
  const BasicTensor<T> &x = *input_;
  const Shape4 in = x.shape4();
  require_same_shape(grad, output_shape(x.shape()), "conv2d backward");
  const std::size_t K = geom_.kh * geom_.kw * cin_;
  const std::size_t rows = grad.size() / cout_;

  dweight_.fill(T(0));
  // Stride-1 input gradients are a correlation of the output gradient with
  // the spatially flipped kernel; other strides scatter through col2im.
  const bool flipped = this->input_grad_ && geom_.stride == 1 &&
                       geom_.pad < geom_.kh && geom_.pad < geom_.kw &&
                       geom_.kh == geom_.kw;
  const bool scatter = this->input_grad_ && !flipped;
  BasicTensor<T> dx;
  if (this->input_grad_)
    dx = BasicTensor<T>(x.shape());

  const std::size_t cr = std::min(chunk_rows(), rows);
  std::vector<T> col(cr * K);
  std::vector<T> dcol(scatter ? cr * K : 0);
  std::vector<T> wt(scatter ? K * cout_ : 0);
  if (scatter)
    kernels::transpose<T>(weight_.data(), wt, K, cout_);
  std::span<const T> g = grad.data();
  for (std::size_t r0 = 0; r0 < rows; r0 += cr) {
    const std::size_t nr = std::min(cr, rows - r0);
    std::span<T> chunk(col.data(), nr * K);
    im2col_rows<T>(x.data(), in, geom_, r0, chunk);
    const auto g_chunk = g.subspan(r0 * cout_, nr * cout_);
    kernels::gemm_tn<T>(chunk, g_chunk, dweight_.data(), nr, K, cout_, true);
    if (scatter) {
      std::span<T> dchunk(dcol.data(), nr * K);
      kernels::gemm_nn<T>(g_chunk, wt, dchunk, nr, cout_, K, false);
      col2im_rows_add<T>(dchunk, in, geom_, r0, dx.data());
    }
  }
  if (flipped)
    flipped_input_grad(grad, dx);

  std::vector<double> db(cout_, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cout_; ++c)
      db[c] += static_cast<double>(g[r * cout_ + c]);
  for (std::size_t c = 0; c < cout_; ++c)
    dbias_[c] = static_cast<T>(db[c]);
  return dx;
}

// ----------------------------------------------------------- BatchNorm2D

template <typename T>
BatchNorm2D<T>::BatchNorm2D(std::size_t channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_({channels}, T(1)), beta_({channels}, T(0)), dgamma_({channels}),
      dbeta_({channels}), running_mean_({channels}, T(0)),
      running_var_({channels}, T(1)) {
  if (!(momentum > 0.0 && momentum < 1.0))
    throw ConfigError("batchnorm momentum must lie in (0,1)");
  if (!(eps > 0.0))
    throw ConfigError("batchnorm eps must be positive");
}

template <typename T>
std::vector<ParamRef<T>> BatchNorm2D<T>::parameters() {
  return {{"gamma", &gamma_, &dgamma_},
          {"beta", &beta_, &dbeta_},
          {"running_mean", &running_mean_, nullptr},
          {"running_var", &running_var_, nullptr}};
}

template <typename T>
BasicTensor<T> BatchNorm2D<T>::forward(const BasicTensor<T> &x, Mode mode) {
  const Shape4 s = x.shape4();
  if (s.c != channels_)
    throw SizeError("batchnorm: expected " + std::to_string(channels_) +
                    " channels, got " + std::to_string(s.c));
  const std::size_t C = channels_;
  const std::size_t m = s.pixels();
  const T *xp = x.data().data();
  BasicTensor<T> out(x.shape());
  T *op = out.data().data();

  if (mode == Mode::Infer) {
    std::vector<T> scale(C), shift(C);
    for (std::size_t c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
      scale[c] = static_cast<T>(static_cast<double>(gamma_[c]) * inv);
      shift[c] = static_cast<T>(static_cast<double>(beta_[c]) -
                                static_cast<double>(running_mean_[c]) *
                                    static_cast<double>(gamma_[c]) * inv);
    }
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t c = 0; c < C; ++c)
        op[p * C + c] = xp[p * C + c] * scale[c] + shift[c];
    return out;
  }

  if (m < 2)
    throw DegenerateBatchError(
        "batchnorm: Train mode needs at least two values per channel");

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t c = 0; c < C; ++c)
      mean[c] += static_cast<double>(xp[p * C + c]);
  for (auto &v : mean)
    v /= static_cast<double>(m);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t c = 0; c < C; ++c) {
      const double d = static_cast<double>(xp[p * C + c]) - mean[c];
      var[c] += d * d;
    }
  for (auto &v : var)
    v /= static_cast<double>(m);

  inv_std_.assign(C, T(0));
  std::vector<T> mean_t(C);
  for (std::size_t c = 0; c < C; ++c) {
    inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var[c] + eps_));
    mean_t[c] = static_cast<T>(mean[c]);
  }

  BasicTensor<T> xhat(x.shape());
  T *hp = xhat.data().data();
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xp[p * C + c] - mean_t[c]) * inv_std_[c];
      hp[p * C + c] = h;
      op[p * C + c] = gamma_[c] * h + beta_[c];
    }

  for (std::size_t c = 0; c < C; ++c) {
    running_mean_[c] = static_cast<T>(momentum_ * static_cast<double>(running_mean_[c]) +
                                      (1.0 - momentum_) * mean[c]);
    running_var_[c] = static_cast<T>(momentum_ * static_cast<double>(running_var_[c]) +
                                     (1.0 - momentum_) * var[c]);
  }
  xhat_ = std::move(xhat);
  mode_ = mode;
  return out;
}

template <typename T>
BasicTensor<T> BatchNorm2D<T>::backward(const BasicTensor<T> &grad) {
  require_cache(xhat_, kind());
  const BasicTensor<T> &xhat = *xhat_;
  require_same_shape(grad, xhat.shape(), "batchnorm backward");
  const std::size_t C = channels_;
  const std::size_t m = grad.size() / C;
  const T *g = grad.data().data();
  const T *h = xhat.data().data();

  std::vector<double> sum_g(C, 0.0), sum_gh(C, 0.0);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t c = 0; c < C; ++c) {
      sum_g[c] += static_cast<double>(g[p * C + c]);
      sum_gh[c] += static_cast<double>(g[p * C + c]) * static_cast<double>(h[p * C + c]);
    }
  for (std::size_t c = 0; c < C; ++c) {
    dgamma_[c] = static_cast<T>(sum_gh[c]);
    dbeta_[c] = static_cast<T>(sum_g[c]);
  }
  if (!this->input_grad_)
    return {};

  // dx = gamma * inv_std / m * (m * g - sum(g) - xhat * sum(g * xhat))
  BasicTensor<T> dx(grad.shape());
  T *dp = dx.data().data();
  std::vector<T> k(C), mean_g(C), mean_gh(C);
  for (std::size_t c = 0; c < C; ++c) {
    k[c] = gamma_[c] * inv_std_[c];
    mean_g[c] = static_cast<T>(sum_g[c] / static_cast<double>(m));
    mean_gh[c] = static_cast<T>(sum_gh[c] / static_cast<double>(m));
  }
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t c = 0; c < C; ++c)
      dp[p * C + c] =
          k[c] * (g[p * C + c] - mean_g[c] - h[p * C + c] * mean_gh[c]);
  return dx;
}

// ------------------------------------------------------------- MaxPool2D

template <typename T>
Shape MaxPool2D<T>::output_shape(const Shape &input) const {
  if (input.size() != 4)
    throw SizeError("maxpool: expected NHWC input, got " + shape_string(input));
  if (input[1] < window_ || input[2] < window_)
    throw GeometryError("maxpool: input " + shape_string(input) +
                        " smaller than window " + std::to_string(window_));
  return {input[0], input[1] / window_, input[2] / window_, input[3]};
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::forward(const BasicTensor<T> &x, Mode mode) {
  const Shape out_shape = output_shape(x.shape());
  const Shape4 s = x.shape4();
  const std::size_t ho = out_shape[1], wo = out_shape[2], C = s.c;
  BasicTensor<T> out(out_shape);
  std::vector<std::size_t> arg(mode == Mode::Train ? out.size() : 0);
  const T *xp = x.data().data();
  T *op = out.data().data();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = ((n * s.h + oh * window_) * s.w + ow * window_) * C + c;
          T best_v = xp[best];
          // Row-major window scan with strict '>' keeps the first maximum.
          for (std::size_t i = 0; i < window_; ++i)
            for (std::size_t j = 0; j < window_; ++j) {
              const std::size_t idx =
                  ((n * s.h + oh * window_ + i) * s.w + ow * window_ + j) * C + c;
              if (xp[idx] > best_v) {
                best_v = xp[idx];
                best = idx;
              }
            }
          const std::size_t o = ((n * ho + oh) * wo + ow) * C + c;
          op[o] = best_v;
          if (mode == Mode::Train)
            arg[o] = best;
        }
  if (mode == Mode::Train) {
    argmax_ = std::move(arg);
    input_shape_ = x.shape();
  }
  return out;
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::backward(const BasicTensor<T> &grad) {
  if (input_shape_.empty())
    throw StateError("maxpool: backward called without a Train-mode forward");
  if (grad.size() != argmax_.size())
    throw SizeError("maxpool backward: gradient size mismatch");
  BasicTensor<T> dx(input_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i)
    dx[argmax_[i]] += grad[i];
  return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::size_t din, std::size_t dout)
    : din_(din), dout_(dout), weight_({din, dout}), bias_({dout}),
      dweight_({din, dout}), dbias_({dout}) {}

template <typename T>
Shape Dense<T>::output_shape(const Shape &input) const {
  if (input.size() != 2 || input[1] != din_)
    throw SizeError("dense: expected [N," + std::to_string(din_) +
                    "] input, got " + shape_string(input));
  return {input[0], dout_};
}

template <typename T>
void Dense<T>::initialize(Rng &rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(din_));
  for (auto &w : weight_.data())
    w = static_cast<T>(rng.normal() * std);
  bias_.fill(T(0));
}

template <typename T>
std::vector<ParamRef<T>> Dense<T>::parameters() {
  return {{"weight", &weight_, &dweight_}, {"bias", &bias_, &dbias_}};
}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T> &x, Mode mode) {
  BasicTensor<T> out(output_shape(x.shape()));
  const std::size_t n = x.dim(0);
  kernels::gemm_nn<T>(x.data(), weight_.data(), out.data(), n, din_, dout_,
                      false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dout_; ++j)
      out[i * dout_ + j] += bias_[j];
  if (mode == Mode::Train)
    input_ = x;
  return out;
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T> &grad) {
  require_cache(input_, kind());
  const BasicTensor<T> &x = *input_;
  require_same_shape(grad, output_shape(x.shape()), "dense backward");
  const std::size_t n = x.dim(0);
  kernels::gemm_tn<T>(x.data(), grad.data(), dweight_.data(), n, din_, dout_,
                      false);
  std::vector<double> db(dout_, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dout_; ++j)
      db[j] += static_cast<double>(grad[i * dout_ + j]);
  for (std::size_t j = 0; j < dout_; ++j)
    dbias_[j] = static_cast<T>(db[j]);
  if (!this->input_grad_)
    return {};
  BasicTensor<T> dx(x.shape());
  kernels::gemm_nt<T>(grad.data(), weight_.data(), dx.data(), n, dout_, din_,
                      false);
  return dx;
}

// --------------------------------------------------------------- Flatten

template <typename T>
Shape Flatten<T>::output_shape(const Shape &input) const {
  if (input.empty())
    throw SizeError("flatten: empty shape");
  std::size_t rest = 1;
  for (std::size_t i = 1; i < input.size(); ++i)
    rest *= input[i];
  return {input[0], rest};
}

template <typename T>
BasicTensor<T> Flatten<T>::forward(const BasicTensor<T> &x, Mode mode) {
  if (mode == Mode::Train)
    input_shape_ = x.shape();
  return x.reshaped(output_shape(x.shape()));
}

template <typename T>
BasicTensor<T> Flatten<T>::backward(const BasicTensor<T> &grad) {
  if (input_shape_.empty())
    throw StateError("flatten: backward called without a Train-mode forward");
  return grad.reshaped(input_shape_);
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0,1), got " +
                      std::to_string(rate));
}

template <typename T>
BasicTensor<T> Dropout<T>::forward(const BasicTensor<T> &x, Mode mode) {
  if (mode == Mode::Infer)
    return x;
  BasicTensor<T> mask(x.shape(), T(1));
  if (rate_ > 0.0) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    for (auto &m : mask.data())
      m = rng_.uniform() < rate_ ? T(0) : keep_scale;
  }
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] * mask[i];
  mask_ = std::move(mask);
  return out;
}

template <typename T>
BasicTensor<T> Dropout<T>::backward(const BasicTensor<T> &grad) {
  require_cache(mask_, kind());
  require_same_shape(grad, mask_->shape(), "dropout backward");
  BasicTensor<T> dx(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    dx[i] = grad[i] * (*mask_)[i];
  return dx;
}

// ----------------------------------------------------------- Activations

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T> &x, Mode mode) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] > T(0) ? x[i] : T(0);
  if (mode == Mode::Train)
    input_ = x;
  return out;
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const BasicTensor<T> &grad) {
  require_cache(input_, kind());
  require_same_shape(grad, input_->shape(), "relu backward");
  BasicTensor<T> dx(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i)
    dx[i] = (*input_)[i] > T(0) ? grad[i] : T(0);
  return dx;
}

namespace {
template <typename T>
T sigmoid(T v) {
  if (v >= T(0))
    return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}
} // namespace

template <typename T>
BasicTensor<T> Sigmoid<T>::forward(const BasicTensor<T> &x, Mode mode) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = sigmoid(x[i]);
  if (mode == Mode::Train)
    output_ = out;
  return out;
}

template <typename T>
BasicTensor<T> Sigmoid<T>::backward(const BasicTensor<T> &grad) {
  require_cache(output_, kind());
  require_same_shape(grad, output_->shape(), "sigmoid backward");
  BasicTensor<T> dx(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T y = (*output_)[i];
    dx[i] = grad[i] * y * (T(1) - y);
  }
  return dx;
}

template <typename T>
BasicTensor<T> Softmax<T>::forward(const BasicTensor<T> &x, Mode mode) {
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.size() / k;
  BasicTensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T *xr = x.data().data() + r * k;
    T *yr = out.data().data() + r * k;
    const T mx = *std::max_element(xr, xr + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += static_cast<double>(yr[j]);
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < k; ++j)
      yr[j] = static_cast<T>(static_cast<double>(yr[j]) * inv);
  }
  if (mode == Mode::Train)
    output_ = out;
  return out;
}

template <typename T>
BasicTensor<T> Softmax<T>::backward(const BasicTensor<T> &grad) {
  require_cache(output_, kind());
  require_same_shape(grad, output_->shape(), "softmax backward");
  const std::size_t k = grad.shape().back();
  const std::size_t rows = grad.size() / k;
  BasicTensor<T> dx(grad.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T *y = output_->data().data() + r * k;
    const T *g = grad.data().data() + r * k;
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      s += static_cast<double>(g[j]) * static_cast<double>(y[j]);
    for (std::size_t j = 0; j < k; ++j)
      dx[r * k + j] = y[j] * (g[j] - static_cast<T>(s));
  }
  return dx;
}

template <typename T>
BasicTensor<T> activation_forward(ActivationKind kind, const BasicTensor<T> &x) {
  switch (kind) {
  case ActivationKind::ReLU:
    return ReLU<T>().forward(x, Mode::Infer);
  case ActivationKind::Sigmoid:
    return Sigmoid<T>().forward(x, Mode::Infer);
  case ActivationKind::Softmax:
    return Softmax<T>().forward(x, Mode::Infer);
  }
  throw ConfigError("unknown activation");
}

// ---------------------------------------------------------- ParallelConv

template <typename T>
ParallelConv<T>::ParallelConv(const std::vector<std::size_t> &kernels,
                              std::size_t cin, std::size_t cout_per_branch)
    : kernels_(kernels) {
  if (kernels.empty())
    throw ConfigError("parallel conv needs at least one kernel size");
  branches_.reserve(kernels.size());
  for (auto k : kernels)
    branches_.push_back(Conv2D<T>::same(k, cin, cout_per_branch));
}

template <typename T>
std::size_t ParallelConv<T>::out_channels() const {
  std::size_t c = 0;
  for (const auto &b : branches_)
    c += b.out_channels();
  return c;
}

template <typename T>
Shape ParallelConv<T>::output_shape(const Shape &input) const {
  Shape s = branches_.front().output_shape(input);
  s[3] = out_channels();
  return s;
}

template <typename T>
void ParallelConv<T>::set_input_grad(bool enabled) {
  Layer<T>::set_input_grad(enabled);
  for (auto &b : branches_)
    b.set_input_grad(enabled);
}

template <typename T>
void ParallelConv<T>::initialize(Rng &rng) {
  for (auto &b : branches_)
    b.initialize(rng);
}

template <typename T>
std::vector<ParamRef<T>> ParallelConv<T>::parameters() {
  std::vector<ParamRef<T>> out;
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    std::string prefix = "conv" + std::to_string(kernels_[i]);
    if (!seen.insert(kernels_[i]).second)
      prefix += "_" + std::to_string(i);
    for (auto &p : branches_[i].parameters()) {
      p.name = prefix + "." + p.name;
      out.push_back(p);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> ParallelConv<T>::forward(const BasicTensor<T> &x, Mode mode) {
  std::vector<BasicTensor<T>> outs;
  outs.reserve(branches_.size());
  for (auto &b : branches_)
    outs.push_back(b.forward(x, mode));
  if (outs.size() == 1)
    return std::move(outs.front());
  return concat_channels(outs);
}

template <typename T>
BasicTensor<T> ParallelConv<T>::backward(const BasicTensor<T> &grad) {
  BasicTensor<T> dx;
  std::size_t offset = 0;
  for (auto &b : branches_) {
    const std::size_t c = b.out_channels();
    BasicTensor<T> part = branches_.size() == 1 ? grad : slice_channels(grad, offset, c);
    offset += c;
    BasicTensor<T> d = b.backward(part);
    if (!this->input_grad_)
      continue;
    if (dx.empty()) {
      dx = std::move(d);
    } else {
      for (std::size_t i = 0; i < dx.size(); ++i)
        dx[i] += d[i];
    }
  }
  return dx;
}

// ------------------------------------------------------------------ Loss

template <typename T>
void validate_onehot(const BasicTensor<T> &onehot) {
  if (onehot.rank() != 2)
    throw SizeError("one-hot labels must be rank 2");
  const std::size_t k = onehot.dim(1);
  for (std::size_t r = 0; r < onehot.dim(0); ++r) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T v = onehot[r * k + j];
      if (v == T(1))
        ++ones;
      else if (v != T(0))
        throw LabelError("one-hot row " + std::to_string(r) +
                         " has a value other than 0 or 1");
    }
    if (ones != 1)
      throw LabelError("one-hot row " + std::to_string(r) + " has " +
                       std::to_string(ones) + " ones");
  }
}

template <typename T>
double cce_loss(const BasicTensor<T> &probs, const BasicTensor<T> &onehot) {
  if (probs.shape() != onehot.shape() || probs.rank() != 2)
    throw SizeError("cce_loss: probs " + shape_string(probs.shape()) +
                    " vs labels " + shape_string(onehot.shape()));
  validate_onehot(onehot);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      row_sum += static_cast<double>(probs[r * k + j]);
    if (std::abs(row_sum - 1.0) > 1e-4)
      throw NumericError("cce_loss: probability row " + std::to_string(r) +
                         " sums to " + std::to_string(row_sum));
    for (std::size_t j = 0; j < k; ++j)
      if (onehot[r * k + j] == T(1)) {
        const double p = std::clamp(static_cast<double>(probs[r * k + j]), 1e-12, 1.0);
        total -= std::log(p);
      }
  }
  return total / static_cast<double>(n);
}

template <typename T>
BasicTensor<T> softmax_cce_grad(const BasicTensor<T> &probs,
                                const BasicTensor<T> &onehot) {
  if (probs.shape() != onehot.shape() || probs.rank() != 2)
    throw SizeError("softmax_cce_grad: shape mismatch");
  const T inv_n = T(1) / static_cast<T>(probs.dim(0));
  BasicTensor<T> g(probs.shape());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = (probs[i] - onehot[i]) * inv_n;
  return g;
}

#define TFN_INSTANTIATE(T)                                                     \
  template class Layer<T>;                                                     \
  template class Conv2D<T>;                                                    \
  template class BatchNorm2D<T>;                                               \
  template class MaxPool2D<T>;                                                 \
  template class Dense<T>;                                                     \
  template class Flatten<T>;                                                   \
  template class Dropout<T>;                                                   \
  template class ReLU<T>;                                                      \
  template class Sigmoid<T>;                                                   \
  template class Softmax<T>;                                                   \
  template class ParallelConv<T>;                                              \
  template BasicTensor<T> activation_forward<T>(ActivationKind,                \
                                                const BasicTensor<T> &);       \
  template void validate_onehot<T>(const BasicTensor<T> &);                    \
  template double cce_loss<T>(const BasicTensor<T> &, const BasicTensor<T> &); \
  template BasicTensor<T> softmax_cce_grad<T>(const BasicTensor<T> &,          \
                                              const BasicTensor<T> &);

TFN_INSTANTIATE(float)
TFN_INSTANTIATE(double)
#undef TFN_INSTANTIATE

} // namespace tfn
