#pragma once

#include <vector>

#include "tfn/model.hpp"

namespace tfn {

// F = alpha * M + epsilon + bias, M the per-class elementwise maximum of the
// member probabilities. Scores are not renormalized and are computed in double
// whatever the member precision.
struct FusionParams {
  double alpha = 0.8;
  double epsilon = 1e-4;
  double bias = 20.0;

  void validate() const;
};

template <typename T>
BasicTensor<T> elementwise_max(const std::vector<BasicTensor<T>> &members);

template <typename T>
TensorD fuzzy_max_fuse(const std::vector<BasicTensor<T>> &members,
                       const FusionParams &params);

// Row-wise argmax, ties go to the lower index.
template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T> &scores);

struct Prediction {
  std::vector<std::size_t> labels;
  TensorD scores;
};

template <typename T>
class EnsembleModel {
public:
  EnsembleModel(std::vector<TFusionModel<T>> members, FusionParams params = {});

  std::size_t size() const { return members_.size(); }
  TFusionModel<T> &member(std::size_t i) { return members_.at(i); }
  const FusionParams &params() const { return params_; }
  std::size_t num_classes() const { return members_.front().config().num_classes; }

  // Infer-mode probabilities of every member.
  std::vector<BasicTensor<T>> member_probs(const BasicTensor<T> &batch);

private:
  std::vector<TFusionModel<T>> members_;
  FusionParams params_;
};

template <typename T>
Prediction ensemble_predict(EnsembleModel<T> &ens, const BasicTensor<T> &batch);

} // namespace tfn
