#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tfn/layers.hpp"

namespace tfn {

struct ParameterCount {
  std::size_t trainable = 0;
  // trainable plus non-trained buffers (BatchNorm running statistics)
  std::size_t total = 0;

  bool operator==(const ParameterCount &) const = default;
};

struct LayerSummary {
  std::string name;
  std::string kind;
  Shape output;
  ParameterCount params;
};

// An ordered chain of named layers.
template <typename T>
class Network {
public:
  template <typename L, typename... Args>
  L &emplace(std::string name, Args &&...args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L &ref = *layer;
    add(std::move(name), std::move(layer));
    return ref;
  }
  void add(std::string name, std::unique_ptr<Layer<T>> layer);

  std::size_t size() const { return layers_.size(); }
  Layer<T> &layer(std::size_t i) { return *layers_.at(i).layer; }
  const std::string &name(std::size_t i) const { return layers_.at(i).name; }
  // Index of the named layer; throws ConfigError when absent.
  std::size_t index_of(const std::string &name) const;

  BasicTensor<T> forward(const BasicTensor<T> &x, Mode mode);
  // Layers [begin, end).
  BasicTensor<T> forward_range(BasicTensor<T> x, Mode mode, std::size_t begin,
                               std::size_t end);
  // Propagates through layers end-1 down to 0.
  BasicTensor<T> backward(const BasicTensor<T> &grad, std::size_t end);
  BasicTensor<T> backward(const BasicTensor<T> &grad) { return backward(grad, size()); }

  // Names are "<layer>.<param>".
  std::vector<ParamRef<T>> parameters();
  void zero_grad();
  void initialize(Rng &rng);

  std::vector<LayerSummary> summary(const Shape &input);
  ParameterCount count_parameters();

private:
  struct Entry {
    std::string name;
    std::unique_ptr<Layer<T>> layer;
  };
  std::vector<Entry> layers_;
};

template <typename T>
ParameterCount count_parameters(Layer<T> &layer);

} // namespace tfn
