#include "gradsuite.hpp"

#include <algorithm>
#include <functional>
#include <memory>

#include "tfn/data.hpp"
#include "tfn/mlsam.hpp"

namespace tfn::testing {

namespace {

std::size_t pick(Rng &rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

void merge(GradSuiteEntry &e, const GradCheckResult &r) {
  ++e.cases;
  e.coordinates += r.checked;
  if (r.max_rel_error >= e.max_rel_error) {
    e.max_rel_error = r.max_rel_error;
    e.worst = r.worst;
  }
}

// Randomizes every trainable parameter (biases and BN affine terms included,
// so nothing sits at a special value).
void randomize(Layer<double> &layer, Rng &rng) {
  layer.initialize(rng);
  for (auto &p : layer.parameters())
    if (p.trainable())
      for (auto &v : p.value->data())
        v += rng.uniform(-0.5, 0.5);
}

using Case = std::function<GradCheckResult(Rng &)>;

GradCheckResult conv_case(Rng &rng) {
  const std::size_t k = pick(rng, 1, 4);
  const std::size_t stride = pick(rng, 1, 2);
  const std::size_t pad = pick(rng, 0, k - 1);
  const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  std::size_t h = pick(rng, k, k + 4);
  h += (stride - (h + 2 * pad - k) % stride) % stride;
  const std::size_t w = h + stride * pick(rng, 0, 1);
  Conv2D<double> conv(k, k, cin, cout, stride, pad);
  randomize(conv, rng);
  return gradcheck_layer(conv, random_tensor({pick(rng, 1, 2), h, w, cin}, rng), rng);
}

GradCheckResult batchnorm_case(Rng &rng) {
  const std::size_t c = pick(rng, 1, 3);
  BatchNorm2D<double> bn(c);
  randomize(bn, rng);
  return gradcheck_layer(bn, random_tensor({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 2, 4), c}, rng, -2, 2),
                         rng);
}

GradCheckResult maxpool_case(Rng &rng) {
  MaxPool2D<double> pool(2);
  const Shape s{pick(rng, 1, 2), 2 * pick(rng, 1, 3) + pick(rng, 0, 1), 2 * pick(rng, 1, 3),
                pick(rng, 1, 3)};
  return gradcheck_layer(pool, spaced_tensor(s, rng), rng);
}

GradCheckResult dense_case(Rng &rng) {
  Dense<double> d(pick(rng, 1, 12), pick(rng, 1, 6));
  randomize(d, rng);
  const Shape in = {pick(rng, 1, 4), d.weight().dim(0)};
  return gradcheck_layer(d, random_tensor(in, rng), rng);
}

GradCheckResult relu_case(Rng &rng) {
  ReLU<double> r;
  return gradcheck_layer(r, spaced_tensor({pick(rng, 1, 3), pick(rng, 2, 5), pick(rng, 1, 4), 2}, rng),
                         rng);
}

GradCheckResult sigmoid_case(Rng &rng) {
  Sigmoid<double> s;
  return gradcheck_layer(s, random_tensor({pick(rng, 1, 3), pick(rng, 2, 6)}, rng, -4, 4), rng);
}

GradCheckResult softmax_case(Rng &rng) {
  Softmax<double> s;
  return gradcheck_layer(s, random_tensor({pick(rng, 1, 4), pick(rng, 2, 6)}, rng, -3, 3), rng);
}

// d cce(softmax(z)) / dz via softmax_cce_grad against central differences.
GradCheckResult softmax_cce_case(Rng &rng) {
  const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 5);
  TensorD z = random_tensor({n, k}, rng, -3, 3);
  std::vector<std::size_t> labels(n);
  for (auto &l : labels)
    l = static_cast<std::size_t>(rng.below(k));
  const TensorD y = onehot(labels, k).cast<double>();
  auto loss = [&] { return cce_loss(activation_forward(ActivationKind::Softmax, z), y); };
  const TensorD g = softmax_cce_grad(activation_forward(ActivationKind::Softmax, z), y);
  GradCheckResult res;
  const double h = 1e-5;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double saved = z[i];
    z[i] = saved + h;
    const double lp = loss();
    z[i] = saved - h;
    const double lm = loss();
    z[i] = saved;
    const double err = rel_error(g[i], (lp - lm) / (2 * h));
    ++res.checked;
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst = "logit[" + std::to_string(i) + "]";
    }
  }
  return res;
}

GradCheckResult dropout_case(Rng &rng) {
  const std::uint64_t seed = rng.next_u64();
  Dropout<double> d(rng.uniform(0.1, 0.7), seed);
  return gradcheck_layer(d, random_tensor({pick(rng, 1, 3), pick(rng, 4, 12)}, rng), rng, 1e-5,
                         [&] { d.reseed(seed); });
}

GradCheckResult parallel_conv_case(Rng &rng) {
  const std::size_t cin = pick(rng, 1, 2);
  ParallelConv<double> pc({1, 3, 5}, cin, pick(rng, 1, 2));
  randomize(pc, rng);
  return gradcheck_layer(pc, random_tensor({1, pick(rng, 3, 5), pick(rng, 3, 5), cin}, rng), rng);
}

GradCheckResult mlsam_case(Rng &rng) {
  const std::size_t c = pick(rng, 1, 3);
  MlsamBlock<double> block(c);
  randomize(block, rng);
  return gradcheck_layer(block, random_tensor({pick(rng, 1, 2), pick(rng, 3, 6), pick(rng, 3, 6), c}, rng),
                         rng);
}

} // namespace

std::vector<GradSuiteEntry> run_layer_gradcheck_suite(std::uint64_t seed,
                                                      std::size_t cases_per_kind) {
  const std::vector<std::pair<std::string, Case>> kinds = {
      {"conv2d", conv_case},   {"batchnorm", batchnorm_case},   {"maxpool", maxpool_case},
      {"dense", dense_case},   {"relu", relu_case},             {"sigmoid", sigmoid_case},
      {"softmax", softmax_case}, {"softmax_cce", softmax_cce_case}, {"dropout", dropout_case},
      {"parallel_conv", parallel_conv_case}, {"mlsam", mlsam_case}};
  std::vector<GradSuiteEntry> out;
  Rng rng(seed);
  for (const auto &[name, fn] : kinds) {
    GradSuiteEntry e;
    e.kind = name;
    for (std::size_t i = 0; i < cases_per_kind; ++i)
      merge(e, fn(rng));
    out.push_back(e);
  }
  return out;
}

GradCheckResult run_model_gradcheck(std::uint64_t seed, std::size_t samples_per_tensor) {
  ModelConfig cfg = ModelConfig::desk();
  cfg.dropout_rate = 0.0;
  TFusionModel<double> model(cfg, seed);
  Rng rng(seed + 17);
  // Move BN affine terms off their (1, 0) initial values.
  for (auto &p : model.parameters())
    if (p.trainable() && p.name.find("_bn.") != std::string::npos)
      for (auto &v : p.value->data())
        v += rng.uniform(-0.3, 0.3);
  const TensorD x = random_tensor({2, cfg.input_h, cfg.input_w, cfg.input_c}, rng, 0.0, 1.0);
  const TensorD y = onehot({0, 1}, 2).cast<double>();
  return gradcheck_model(model, x, y, rng, samples_per_tensor);
}

} // namespace tfn::testing
