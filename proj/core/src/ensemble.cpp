#include "tfn/ensemble.hpp"

#include <algorithm>

namespace tfn {

void FusionParams::validate() const {
  if (!(alpha > 0.0))
    throw ConfigError("fusion alpha must be positive");
}

namespace {

template <typename T>
void check_members(const std::vector<BasicTensor<T>> &members) {
  if (members.empty())
    throw ConfigError("fusion needs at least one member");
  const Shape &s = members.front().shape();
  if (s.size() != 2)
    throw SizeError("member scores must be [N,K], got " + shape_string(s));
  for (const auto &m : members)
    if (m.shape() != s)
      throw SizeError("member shapes differ: " + shape_string(s) + " vs " +
                      shape_string(m.shape()));
}

} // namespace

template <typename T>
BasicTensor<T> elementwise_max(const std::vector<BasicTensor<T>> &members) {
  check_members(members);
  BasicTensor<T> out = members.front();
  auto o = out.data();
  for (std::size_t m = 1; m < members.size(); ++m) {
    const auto d = members[m].data();
    for (std::size_t i = 0; i < o.size(); ++i)
      o[i] = std::max(o[i], d[i]);
  }
  return out;
}

template <typename T>
TensorD fuzzy_max_fuse(const std::vector<BasicTensor<T>> &members,
                       const FusionParams &params) {
  params.validate();
  const BasicTensor<T> m = elementwise_max(members);
  TensorD out(m.shape(), 0.0);
  auto o = out.data();
  const auto md = m.data();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = params.alpha * static_cast<double>(md[i]) + params.epsilon + params.bias;
  return out;
}

template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T> &scores) {
  if (scores.rank() != 2)
    throw SizeError("argmax expects [N,K], got " + shape_string(scores.shape()));
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  const auto d = scores.data();
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (d[r * k + c] > d[r * k + best])
        best = c;
    out[r] = best;
  }
  return out;
}

template <typename T>
EnsembleModel<T>::EnsembleModel(std::vector<TFusionModel<T>> members, FusionParams params)
    : members_(std::move(members)), params_(params) {
  params_.validate();
  if (members_.empty())
    throw ConfigError("ensemble needs at least one member");
  const ModelConfig &a = members_.front().config();
  for (std::size_t i = 1; i < members_.size(); ++i) {
    const ModelConfig &b = members_[i].config();
    if (a.num_classes != b.num_classes || a.input_h != b.input_h ||
        a.input_w != b.input_w || a.input_c != b.input_c)
      throw ConfigError("ensemble member " + std::to_string(i) +
                        " is incompatible with member 0 (classes or input shape)");
  }
}

template <typename T>
std::vector<BasicTensor<T>> EnsembleModel<T>::member_probs(const BasicTensor<T> &batch) {
  std::vector<BasicTensor<T>> out;
  out.reserve(members_.size());
  for (auto &m : members_)
    out.push_back(m.forward(batch, Mode::Infer));
  return out;
}

template <typename T>
Prediction ensemble_predict(EnsembleModel<T> &ens, const BasicTensor<T> &batch) {
  Prediction p;
  p.scores = fuzzy_max_fuse(ens.member_probs(batch), ens.params());
  p.labels = argmax_rows(p.scores);
  return p;
}

#define TFN_INSTANTIATE(T)                                                     \
  template BasicTensor<T> elementwise_max<T>(const std::vector<BasicTensor<T>> &); \
  template TensorD fuzzy_max_fuse<T>(const std::vector<BasicTensor<T>> &,      \
                                     const FusionParams &);                    \
  template std::vector<std::size_t> argmax_rows<T>(const BasicTensor<T> &);    \
  template class EnsembleModel<T>;                                             \
  template Prediction ensemble_predict<T>(EnsembleModel<T> &, const BasicTensor<T> &);

TFN_INSTANTIATE(float)
TFN_INSTANTIATE(double)
#undef TFN_INSTANTIATE

} // namespace tfn
