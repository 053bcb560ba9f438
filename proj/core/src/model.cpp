#include "tfn/model.hpp"

#include "tfn/rng.hpp"

namespace tfn {

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.input_h = 32;
  c.input_w = 32;
  c.branch_filters = 8;
  c.block_filters = {16, 32, 32, 64};
  c.dense_units = 32;
  return c;
}

void ModelConfig::validate() const {
  const std::size_t div = std::size_t{1} << kPoolStages;
  if (input_h == 0 || input_w == 0 || input_c == 0)
    throw ConfigError("input dimensions must be positive");
  if (input_h % div != 0 || input_w % div != 0)
    throw ConfigError("input size " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) + " is not divisible by " +
                      std::to_string(div) + " (five pooling stages)");
  if (num_classes < 2)
    throw ConfigError("num_classes must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout_rate must lie in [0,1)");
  if (block_filters.size() != 4)
    throw ConfigError("block_filters needs exactly 4 entries");
  if (branch_filters == 0 || dense_units == 0)
    throw ConfigError("filter and unit counts must be positive");
  for (auto f : block_filters)
    if (f == 0)
      throw ConfigError("block_filters entries must be positive");
  if (mlsam_kernels.empty())
    throw ConfigError("mlsam_kernels must not be empty");
  for (auto k : mlsam_kernels)
    if (k % 2 == 0)
      throw ConfigError("mlsam_kernels must be odd, got " + std::to_string(k));
}

std::size_t ModelConfig::flatten_size() const {
  const std::size_t div = std::size_t{1} << kPoolStages;
  return (input_h / div) * (input_w / div) * block_filters.back();
}

const std::set<std::string> &ModelConfig::keys() {
  static const std::set<std::string> k{
      "input_h",     "input_w",     "input_c",      "branch_filters",
      "block_filters", "dense_units", "num_classes", "dropout_rate",
      "mlsam_kernels"};
  return k;
}

ModelConfig ModelConfig::from_kv(const KeyValues &kv) {
  ModelConfig c;
  auto take = [&](const char *key, auto &&assign) {
    if (kv.contains(key))
      assign(kv.get(key));
  };
  take("input_h", [&](const std::string &v) { c.input_h = parse::positive_int("input_h", v); });
  take("input_w", [&](const std::string &v) { c.input_w = parse::positive_int("input_w", v); });
  take("input_c", [&](const std::string &v) { c.input_c = parse::positive_int("input_c", v); });
  take("branch_filters", [&](const std::string &v) {
    c.branch_filters = parse::positive_int("branch_filters", v);
  });
  take("block_filters", [&](const std::string &v) {
    c.block_filters = parse::int_list("block_filters", v);
  });
  take("dense_units", [&](const std::string &v) { c.dense_units = parse::positive_int("dense_units", v); });
  take("num_classes", [&](const std::string &v) { c.num_classes = parse::positive_int("num_classes", v); });
  take("dropout_rate", [&](const std::string &v) { c.dropout_rate = parse::real("dropout_rate", v); });
  take("mlsam_kernels", [&](const std::string &v) {
    c.mlsam_kernels = parse::int_list("mlsam_kernels", v);
  });
  return c;
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("input_h", std::to_string(input_h));
  kv.set("input_w", std::to_string(input_w));
  kv.set("input_c", std::to_string(input_c));
  kv.set("branch_filters", std::to_string(branch_filters));
  kv.set("block_filters", format_int_list(block_filters));
  kv.set("dense_units", std::to_string(dense_units));
  kv.set("num_classes", std::to_string(num_classes));
  kv.set("dropout_rate", format_real(dropout_rate));
  kv.set("mlsam_kernels", format_int_list(mlsam_kernels));
  return kv;
}

template <typename T>
TFusionModel<T>::TFusionModel(const ModelConfig &config, std::uint64_t seed_)
    : seed(seed_), config_(config) {
  config_.validate();
  const auto &c = config_;
  const std::size_t stem_channels = c.branch_filters * ModelConfig::kStemKernels.size();

  auto &stem = net_.template emplace<ParallelConv<T>>("stem", ModelConfig::kStemKernels,
                                                      c.input_c, c.branch_filters);
  stem.set_input_grad(false);
  net_.template emplace<BatchNorm2D<T>>("stem_bn", stem_channels);
  net_.template emplace<ReLU<T>>("stem_relu");
  net_.template emplace<MlsamBlock<T>>("mlsam", stem_channels, c.mlsam_kernels);
  mlsam_index_ = net_.size() - 1;
  net_.template emplace<MaxPool2D<T>>("pool1", 2);

  std::size_t channels = stem_channels;
  for (std::size_t b = 0; b < c.block_filters.size(); ++b) {
    const std::string id = "block" + std::to_string(b + 2);
    net_.add(id + "_conv", std::make_unique<Conv2D<T>>(
                               Conv2D<T>::same(3, channels, c.block_filters[b])));
    channels = c.block_filters[b];
    net_.template emplace<BatchNorm2D<T>>(id + "_bn", channels);
    net_.template emplace<ReLU<T>>(id + "_relu");
    net_.template emplace<MaxPool2D<T>>("pool" + std::to_string(b + 2), 2);
  }

  net_.template emplace<Flatten<T>>("flatten");
  net_.template emplace<Dense<T>>("fc", c.flatten_size(), c.dense_units);
  net_.template emplace<ReLU<T>>("fc_relu");
  net_.template emplace<Dropout<T>>("dropout", c.dropout_rate,
                                    seed_ + seed_offset::dropout);
  net_.template emplace<Dense<T>>("logits", c.dense_units, c.num_classes);
  net_.template emplace<Softmax<T>>("softmax");

  Rng rng(seed_ + seed_offset::init);
  net_.initialize(rng);
}

template <typename T>
MlsamBlock<T> &TFusionModel<T>::mlsam() {
  return static_cast<MlsamBlock<T> &>(net_.layer(mlsam_index_));
}

template <typename T>
void TFusionModel<T>::check_input(const BasicTensor<T> &batch) const {
  const Shape4 s = batch.shape4();
  if (s.h != config_.input_h || s.w != config_.input_w || s.c != config_.input_c)
    throw SizeError("model expects [N," + std::to_string(config_.input_h) + "," +
                    std::to_string(config_.input_w) + "," +
                    std::to_string(config_.input_c) + "] input, got " +
                    shape_string(batch.shape()));
}

template <typename T>
BasicTensor<T> TFusionModel<T>::forward(const BasicTensor<T> &batch, Mode mode) {
  check_input(batch);
  return net_.forward(batch, mode);
}

template <typename T>
void TFusionModel<T>::backward(const BasicTensor<T> &probs,
                               const BasicTensor<T> &onehot) {
  // The last layer is the softmax; its gradient is folded into the loss.
  net_.backward(softmax_cce_grad(probs, onehot), net_.size() - 1);
}

template <typename T>
BasicTensor<T> TFusionModel<T>::attention(const BasicTensor<T> &batch) {
  check_input(batch);
  BasicTensor<T> x = net_.forward_range(batch, Mode::Infer, 0, mlsam_index_);
  return mlsam().forward_with_attention(x, Mode::Infer).second;
}

template <typename T>
std::vector<LayerSummary> TFusionModel<T>::summary() {
  return net_.summary({1, config_.input_h, config_.input_w, config_.input_c});
}

template class TFusionModel<float>;
template class TFusionModel<double>;

} // namespace tfn
