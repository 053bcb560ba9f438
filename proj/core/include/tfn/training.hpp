#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "tfn/config.hpp"
#include "tfn/data.hpp"
#include "tfn/model.hpp"

namespace tfn {

// Adam moments, one pair per trainable parameter in ParamRef order. The
// moments are created (zeroed) by the first step.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
};

// One update of every trainable parameter in `params` from its gradient.
template <typename T>
void adam_step(const std::vector<ParamRef<T>> &params, AdamState<T> &state, double lr);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  void validate() const;

  static const std::set<std::string> &keys();
  static TrainConfig from_kv(const KeyValues &kv);
  KeyValues to_kv() const;
};

struct EpochStats {
  std::size_t epoch = 0; // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0; // NaN without a validation split
  double val_acc = 0.0;
};

using History = std::vector<EpochStats>;

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class, floor(test_fraction * n_c) seeded-shuffled members go to test.
// Both index lists are returned in ascending order.
Split stratified_split(const std::vector<std::size_t> &labels, double test_fraction,
                       std::uint64_t seed);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> truth;
  std::vector<std::size_t> predicted;
};

// Infer-mode pass over `indices` in the given order.
template <typename T>
Evaluation evaluate(TFusionModel<T> &model, const Dataset &ds,
                    const std::vector<std::size_t> &indices, std::size_t batch_size);

using EpochCallback = std::function<void(const EpochStats &)>;

// Trains on `train_idx` for cfg.max_epochs epochs and validates on `val_idx`
// (may be empty) after each one. Epoch e shuffles with the e-th draw of
// Rng(seed + shuffle offset).
template <typename T>
History train(TFusionModel<T> &model, const Dataset &ds,
              const std::vector<std::size_t> &train_idx,
              const std::vector<std::size_t> &val_idx, const TrainConfig &cfg,
              const EpochCallback &on_epoch = {});

// Stratified split with seed + split offset, held-out part used for validation.
template <typename T>
History train(TFusionModel<T> &model, const Dataset &ds, const TrainConfig &cfg,
              const EpochCallback &on_epoch = {});

std::string history_csv(const History &history);
void write_history_csv(const History &history, const std::filesystem::path &path);

// Converts a float batch to the engine scalar type (no copy for float).
template <typename T>
BasicTensor<T> to_scalar(TensorF x) {
  if constexpr (std::is_same_v<T, float>)
    return x;
  else
    return x.template cast<T>();
}

} // namespace tfn
