#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "tfn/layers.hpp"

namespace tfn {

// Multiple-localization spatial attention: parallel same-padded convolutions
// (4 output channels each, kernels {3,5,7} by default) are concatenated, a
// 3x3 convolution fuses them to one channel, a sigmoid turns that into an
// attention map in (0,1), and the map gates the block input elementwise.
//
// The attention map is computed from and applied to the same tensor, so the
// block preserves its input shape.
template <typename T>
class MlsamBlock final : public Layer<T> {
public:
  static constexpr std::size_t kBranchChannels = 4;
  static constexpr std::size_t kFuseKernel = 3;

  explicit MlsamBlock(std::size_t channels,
                      std::vector<std::size_t> kernels = {3, 5, 7});

  std::string kind() const override { return "mlsam"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override;
  std::vector<ParamRef<T>> parameters() override;

  // Returns (attended, attention[N,H,W,1]).
  std::pair<BasicTensor<T>, BasicTensor<T>> forward_with_attention(
      const BasicTensor<T> &x, Mode mode);

  void initialize(Rng &rng) override;

  std::size_t channels() const { return channels_; }
  ParallelConv<T> &branches() { return branches_; }
  Conv2D<T> &fuse() { return fuse_; }

private:
  std::size_t channels_;
  ParallelConv<T> branches_;
  Conv2D<T> fuse_;
  Sigmoid<T> gate_;
  // Train-mode cache.
  std::optional<BasicTensor<T>> input_;
  std::optional<BasicTensor<T>> attention_;
};

// Writes a single-sample, single-channel map as an 8-bit binary PGM with
// pixel = round_half_up(255 * clamp(value, 0, 1)).
template <typename T>
void export_attention(const BasicTensor<T> &attention,
                      const std::filesystem::path &path);

// The 8-bit quantization used by export_attention.
std::uint8_t quantize_unit(double value);

} // namespace tfn
