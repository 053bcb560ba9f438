#include "tfn/mlsam.hpp"

#include <algorithm>
#include <cmath>

#include "tfn/image.hpp"

namespace tfn {

template <typename T>
MlsamBlock<T>::MlsamBlock(std::size_t channels, std::vector<std::size_t> kernels)
    : channels_(channels), branches_(kernels, channels, kBranchChannels),
      fuse_(Conv2D<T>::same(kFuseKernel, kBranchChannels * kernels.size(), 1)) {}

template <typename T>
Shape MlsamBlock<T>::output_shape(const Shape &input) const {
  if (input.size() != 4 || input[3] != channels_)
    throw SizeError("mlsam: expected [N,H,W," + std::to_string(channels_) +
                    "] input, got " + shape_string(input));
  return input;
}

template <typename T>
void MlsamBlock<T>::initialize(Rng &rng) {
  branches_.initialize(rng);
  fuse_.initialize(rng);
}

template <typename T>
std::vector<ParamRef<T>> MlsamBlock<T>::parameters() {
  auto out = branches_.parameters();
  for (auto &p : fuse_.parameters()) {
    p.name = "fuse." + p.name;
    out.push_back(p);
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>>
MlsamBlock<T>::forward_with_attention(const BasicTensor<T> &x, Mode mode) {
  output_shape(x.shape());
  BasicTensor<T> features = branches_.forward(x, mode);
  BasicTensor<T> logits = fuse_.forward(features, mode);
  BasicTensor<T> attention = gate_.forward(logits, mode);
  BasicTensor<T> attended = broadcast_mul(x, attention);
  if (mode == Mode::Train) {
    input_ = x;
    attention_ = attention;
  }
  return {std::move(attended), std::move(attention)};
}

template <typename T>
BasicTensor<T> MlsamBlock<T>::forward(const BasicTensor<T> &x, Mode mode) {
  return forward_with_attention(x, mode).first;
}

template <typename T>
BasicTensor<T> MlsamBlock<T>::backward(const BasicTensor<T> &grad) {
  if (!input_ || !attention_)
    throw StateError("mlsam: backward called without a Train-mode forward");
  const BasicTensor<T> &x = *input_;
  const BasicTensor<T> &a = *attention_;
  if (grad.shape() != x.shape())
    throw SizeError("mlsam backward: gradient shape mismatch");

  const Shape4 s = x.shape4();
  const std::size_t C = s.c;
  // attended = x * a  =>  d/da = sum_c grad * x
  BasicTensor<T> da({s.n, s.h, s.w, 1});
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    T acc = 0;
    for (std::size_t c = 0; c < C; ++c)
      acc += grad[p * C + c] * x[p * C + c];
    da[p] = acc;
  }
  BasicTensor<T> dlogits = gate_.backward(da);
  BasicTensor<T> dfeatures = fuse_.backward(dlogits);
  BasicTensor<T> dx_branch = branches_.backward(dfeatures);
  if (!this->input_grad_)
    return {};

  BasicTensor<T> dx = broadcast_mul(grad, a);
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx[i] += dx_branch[i];
  return dx;
}

std::uint8_t quantize_unit(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
}

template <typename T>
void export_attention(const BasicTensor<T> &attention,
                      const std::filesystem::path &path) {
  const Shape4 s = attention.shape4();
  if (s.n != 1 || s.c != 1)
    throw SizeError("export_attention expects a [1,H,W,1] map, got " +
                    shape_string(attention.shape()));
  std::vector<std::uint8_t> pixels(s.h * s.w);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = quantize_unit(static_cast<double>(attention[i]));
  write_pgm(path, s.w, s.h, pixels);
}

template class MlsamBlock<float>;
template class MlsamBlock<double>;
template void export_attention<float>(const BasicTensor<float> &,
                                      const std::filesystem::path &);
template void export_attention<double>(const BasicTensor<double> &,
                                       const std::filesystem::path &);

} // namespace tfn
