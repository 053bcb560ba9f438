#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfn/config.hpp"
#include "tfn/mlsam.hpp"
#include "tfn/network.hpp"

namespace tfn {

// Declarative description of the network. Defaults are the full-size
// 224x224 two-class architecture.
struct ModelConfig {
  std::size_t input_h = 224;
  std::size_t input_w = 224;
  std::size_t input_c = 3;
  std::size_t branch_filters = 32;
  std::vector<std::size_t> block_filters{64, 128, 128, 256};
  std::size_t dense_units = 256;
  std::size_t num_classes = 2;
  double dropout_rate = 0.6;
  std::vector<std::size_t> mlsam_kernels{3, 5, 7};

  static constexpr std::size_t kPoolStages = 5;
  static inline const std::vector<std::size_t> kStemKernels{3, 5, 7};

  // 32x32 variant small enough to train on a CPU in minutes.
  static ModelConfig desk();

  void validate() const;
  std::size_t flatten_size() const;

  static const std::set<std::string> &keys();
  // Reads the model keys present in `kv`; other keys are ignored.
  static ModelConfig from_kv(const KeyValues &kv);
  KeyValues to_kv() const;

  bool operator==(const ModelConfig &) const = default;
};

// The assembled network:
//   parallel convs (3x3, 5x5, 7x7) -> concat -> BN -> ReLU -> MLSAM -> pool
//   -> 4 x (conv3x3 -> BN -> ReLU -> pool) -> flatten -> dense -> ReLU
//   -> dropout -> dense(num_classes) -> softmax
template <typename T>
class TFusionModel {
public:
  TFusionModel(const ModelConfig &config, std::uint64_t seed);

  TFusionModel(TFusionModel &&) noexcept = default;
  TFusionModel &operator=(TFusionModel &&) noexcept = default;

  const ModelConfig &config() const { return config_; }
  Network<T> &network() { return net_; }
  MlsamBlock<T> &mlsam();

  // Class probabilities [N, num_classes].
  BasicTensor<T> forward(const BasicTensor<T> &batch, Mode mode);
  // Backpropagates mean categorical cross-entropy from the probabilities of
  // the latest Train-mode forward, using the fused softmax+CCE gradient.
  void backward(const BasicTensor<T> &probs, const BasicTensor<T> &onehot);

  // Infer-mode pass up to the attention block; returns the map [N,H,W,1].
  BasicTensor<T> attention(const BasicTensor<T> &batch);

  std::vector<ParamRef<T>> parameters() { return net_.parameters(); }
  ParameterCount count_parameters() { return net_.count_parameters(); }
  std::vector<LayerSummary> summary();

  // Metadata carried in checkpoints.
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  std::uint64_t epochs_trained = 0;
  // Stratified split used for training, so evaluation can re-derive it.
  std::uint64_t split_seed = 0;
  double test_fraction = 0.2;

private:
  void check_input(const BasicTensor<T> &batch) const;

  ModelConfig config_;
  Network<T> net_;
  std::size_t mlsam_index_ = 0;
};

template <typename T>
TFusionModel<T> build_tfusion(const ModelConfig &config, std::uint64_t seed) {
  return TFusionModel<T>(config, seed);
}

} // namespace tfn
