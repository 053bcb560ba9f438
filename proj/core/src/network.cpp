#include "tfn/network.hpp"

namespace tfn {

template <typename T>
ParameterCount count_parameters(Layer<T> &layer) {
  ParameterCount c;
  for (const auto &p : layer.parameters()) {
    c.total += p.value->size();
    if (p.trainable())
      c.trainable += p.value->size();
  }
  return c;
}

template <typename T>
void Network<T>::add(std::string name, std::unique_ptr<Layer<T>> layer) {
  for (const auto &e : layers_)
    if (e.name == name)
      throw ConfigError("duplicate layer name '" + name + "'");
  layers_.push_back({std::move(name), std::move(layer)});
}

template <typename T>
std::size_t Network<T>::index_of(const std::string &name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].name == name)
      return i;
  throw ConfigError("no layer named '" + name + "'");
}

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T> &x, Mode mode) {
  return forward_range(x, mode, 0, layers_.size());
}

template <typename T>
BasicTensor<T> Network<T>::forward_range(BasicTensor<T> x, Mode mode,
                                         std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    x = layers_[i].layer->forward(x, mode);
    TFN_CHECK_FINITE(x, layers_[i].name);
  }
  return x;
}

template <typename T>
BasicTensor<T> Network<T>::backward(const BasicTensor<T> &grad, std::size_t end) {
  BasicTensor<T> g = grad;
  for (std::size_t i = end; i-- > 0;) {
    g = layers_[i].layer->backward(g);
    if (g.empty() && i > 0)
      throw StateError("layer '" + layers_[i].name +
                       "' produced no input gradient but is not the first layer");
  }
  return g;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (auto &e : layers_)
    for (auto &p : e.layer->parameters()) {
      p.name = e.name + "." + p.name;
      out.push_back(std::move(p));
    }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto &e : layers_)
    e.layer->zero_grad();
}

template <typename T>
void Network<T>::initialize(Rng &rng) {
  for (auto &e : layers_)
    e.layer->initialize(rng);
}

template <typename T>
std::vector<LayerSummary> Network<T>::summary(const Shape &input) {
  std::vector<LayerSummary> out;
  Shape s = input;
  for (auto &e : layers_) {
    s = e.layer->output_shape(s);
    out.push_back({e.name, e.layer->kind(), s, tfn::count_parameters(*e.layer)});
  }
  return out;
}

template <typename T>
ParameterCount Network<T>::count_parameters() {
  ParameterCount c;
  for (auto &e : layers_) {
    const auto l = tfn::count_parameters(*e.layer);
    c.trainable += l.trainable;
    c.total += l.total;
  }
  return c;
}

template class Network<float>;
template class Network<double>;
template ParameterCount count_parameters<float>(Layer<float> &);
template ParameterCount count_parameters<double>(Layer<double> &);

} // namespace tfn
