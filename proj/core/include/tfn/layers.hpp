#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tfn/rng.hpp"
#include "tfn/tensor.hpp"

namespace tfn {

enum class Mode { Train, Infer };

// A named view of one parameter tensor. `grad` is null for buffers that are
// stored in checkpoints but not trained (BatchNorm running statistics).
template <typename T>
struct ParamRef {
  std::string name;
  BasicTensor<T> *value = nullptr;
  BasicTensor<T> *grad = nullptr;

  bool trainable() const { return grad != nullptr; }
};

// A differentiable unit with a hand-derived backward pass. backward() consumes
// the state cached by the most recent forward() and overwrites the parameter
// gradients.
template <typename T>
class Layer {
public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T> &grad) = 0;
  virtual Shape output_shape(const Shape &input) const = 0;
  virtual std::vector<ParamRef<T>> parameters() { return {}; }
  // Draws fresh weights; layers without weights ignore it.
  virtual void initialize(Rng &) {}

  // The first layer of a network never needs d(loss)/d(input).
  virtual void set_input_grad(bool enabled) { input_grad_ = enabled; }
  bool input_grad() const { return input_grad_; }

  void zero_grad();

protected:
  bool input_grad_ = true;
};

template <typename T>
class Conv2D final : public Layer<T> {
public:
  Conv2D(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
         std::size_t stride, std::size_t pad);

  // Odd square kernel, stride 1, pad (k-1)/2: output spatial size == input.
  static Conv2D same(std::size_t k, std::size_t cin, std::size_t cout);

  std::string kind() const override { return "conv2d"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override;
  std::vector<ParamRef<T>> parameters() override;

  // Zero-mean normal weights with std sqrt(2 / fan_in); zero bias.
  void initialize(Rng &rng) override;

  const ConvGeometry &geometry() const { return geom_; }
  std::size_t in_channels() const { return cin_; }
  std::size_t out_channels() const { return cout_; }
  BasicTensor<T> &weight() { return weight_; }
  BasicTensor<T> &bias() { return bias_; }
  const BasicTensor<T> &weight_grad() const { return dweight_; }
  const BasicTensor<T> &bias_grad() const { return dbias_; }

private:
  std::size_t chunk_rows() const;
  void flipped_input_grad(const BasicTensor<T> &grad, BasicTensor<T> &dx) const;

  ConvGeometry geom_;
  std::size_t cin_, cout_;
  BasicTensor<T> weight_, bias_, dweight_, dbias_;
  std::optional<BasicTensor<T>> input_;
};

template <typename T>
class BatchNorm2D final : public Layer<T> {
public:
  static constexpr double kDefaultMomentum = 0.9;
  static constexpr double kDefaultEps = 1e-5;

  explicit BatchNorm2D(std::size_t channels, double momentum = kDefaultMomentum,
                       double eps = kDefaultEps);

  std::string kind() const override { return "batchnorm"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override { return input; }
  std::vector<ParamRef<T>> parameters() override;

  BasicTensor<T> &gamma() { return gamma_; }
  BasicTensor<T> &beta() { return beta_; }
  BasicTensor<T> &running_mean() { return running_mean_; }
  BasicTensor<T> &running_var() { return running_var_; }

private:
  std::size_t channels_;
  double momentum_, eps_;
  BasicTensor<T> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
  // Cached by forward.
  std::optional<BasicTensor<T>> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::Infer;
};

template <typename T>
class MaxPool2D final : public Layer<T> {
public:
  explicit MaxPool2D(std::size_t window = 2) : window_(window) {}

  std::string kind() const override { return "maxpool"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override;

private:
  std::size_t window_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class Dense final : public Layer<T> {
public:
  Dense(std::size_t din, std::size_t dout);

  std::string kind() const override { return "dense"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override;
  std::vector<ParamRef<T>> parameters() override;

  void initialize(Rng &rng) override;

  BasicTensor<T> &weight() { return weight_; }
  BasicTensor<T> &bias() { return bias_; }

private:
  std::size_t din_, dout_;
  BasicTensor<T> weight_, bias_, dweight_, dbias_;
  std::optional<BasicTensor<T>> input_;
};

// [N, ...] -> [N, prod(...)]
template <typename T>
class Flatten final : public Layer<T> {
public:
  std::string kind() const override { return "flatten"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override;

private:
  Shape input_shape_;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) in Train mode and
// Infer mode is the identity.
template <typename T>
class Dropout final : public Layer<T> {
public:
  Dropout(double rate, std::uint64_t seed);

  std::string kind() const override { return "dropout"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override { return input; }

  double rate() const { return rate_; }
  void reseed(std::uint64_t seed) { rng_.reseed(seed); }

private:
  double rate_;
  Rng rng_;
  std::optional<BasicTensor<T>> mask_;
};

enum class ActivationKind { ReLU, Sigmoid, Softmax };

template <typename T>
class ReLU final : public Layer<T> {
public:
  std::string kind() const override { return "relu"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override { return input; }

private:
  std::optional<BasicTensor<T>> input_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
public:
  std::string kind() const override { return "sigmoid"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override { return input; }

private:
  std::optional<BasicTensor<T>> output_;
};

// Softmax over the last axis.
template <typename T>
class Softmax final : public Layer<T> {
public:
  std::string kind() const override { return "softmax"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override { return input; }

private:
  std::optional<BasicTensor<T>> output_;
};

template <typename T>
BasicTensor<T> activation_forward(ActivationKind kind, const BasicTensor<T> &x);

// Convolutions applied to the same input, outputs concatenated along
// channels in branch order.
template <typename T>
class ParallelConv final : public Layer<T> {
public:
  ParallelConv(const std::vector<std::size_t> &kernels, std::size_t cin,
               std::size_t cout_per_branch);

  std::string kind() const override { return "parallel_conv"; }
  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T> &grad) override;
  Shape output_shape(const Shape &input) const override;
  std::vector<ParamRef<T>> parameters() override;
  void set_input_grad(bool enabled) override;

  void initialize(Rng &rng) override;

  std::size_t branch_count() const { return branches_.size(); }
  Conv2D<T> &branch(std::size_t i) { return branches_[i]; }
  std::size_t out_channels() const;

private:
  std::vector<std::size_t> kernels_;
  std::vector<Conv2D<T>> branches_;
};

// Mean categorical cross-entropy; probabilities are clamped to [1e-12, 1].
template <typename T>
double cce_loss(const BasicTensor<T> &probs, const BasicTensor<T> &onehot);

// d(cce(softmax(z)))/dz = (probs - onehot) / N.
template <typename T>
BasicTensor<T> softmax_cce_grad(const BasicTensor<T> &probs,
                                const BasicTensor<T> &onehot);

// Throws LabelError unless every row has exactly one 1 and zeros elsewhere.
template <typename T>
void validate_onehot(const BasicTensor<T> &onehot);

} // namespace tfn
