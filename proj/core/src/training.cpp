#include "tfn/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "tfn/ensemble.hpp"
#include "tfn/rng.hpp"

namespace tfn {

template <typename T>
void adam_step(const std::vector<ParamRef<T>> &params, AdamState<T> &state, double lr) {
  std::vector<const ParamRef<T> *> trainable;
  for (const auto &p : params)
    if (p.trainable())
      trainable.push_back(&p);

  if (state.t == 0 && state.m.empty()) {
    for (const auto *p : trainable) {
      state.m.emplace_back(p->value->shape());
      state.v.emplace_back(p->value->shape());
    }
  }
  if (state.m.size() != trainable.size())
    throw SizeError("adam: state holds " + std::to_string(state.m.size()) +
                    " moments for " + std::to_string(trainable.size()) + " parameters");
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    const auto &p = *trainable[i];
    if (p.grad->shape() != p.value->shape() || state.m[i].shape() != p.value->shape())
      throw SizeError("adam: shape mismatch for '" + p.name + "'");
  }

  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    auto w = trainable[i]->value->data();
    const auto g = trainable[i]->grad->data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double step = lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - step);
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ConfigError("learning_rate must be positive");
  if (batch_size < 1)
    throw ConfigError("batch_size must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0,1)");
}

const std::set<std::string> &TrainConfig::keys() {
  static const std::set<std::string> k{"learning_rate", "batch_size", "max_epochs", "seed",
                                       "test_fraction"};
  return k;
}

TrainConfig TrainConfig::from_kv(const KeyValues &kv) {
  TrainConfig c;
  if (kv.contains("learning_rate"))
    c.learning_rate = parse::real("learning_rate", kv.get("learning_rate"));
  if (kv.contains("batch_size"))
    c.batch_size = parse::positive_int("batch_size", kv.get("batch_size"));
  if (kv.contains("max_epochs"))
    c.max_epochs = parse::uint64("max_epochs", kv.get("max_epochs"));
  if (kv.contains("seed"))
    c.seed = parse::uint64("seed", kv.get("seed"));
  if (kv.contains("test_fraction"))
    c.test_fraction = parse::real("test_fraction", kv.get("test_fraction"));
  return c;
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("learning_rate", format_real(learning_rate));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("max_epochs", std::to_string(max_epochs));
  kv.set("seed", std::to_string(seed));
  kv.set("test_fraction", format_real(test_fraction));
  return kv;
}

Split stratified_split(const std::vector<std::size_t> &labels, double test_fraction,
                       std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0,1)");
  std::size_t k = 0;
  for (auto l : labels)
    k = std::max(k, l + 1);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);

  Rng rng(seed);
  std::vector<char> is_test(labels.size(), 0);
  for (std::size_t c = 0; c < k; ++c) {
    auto &idx = by_class[c];
    if (idx.size() < 2)
      throw StratificationError("class " + std::to_string(c) + " has " +
                                std::to_string(idx.size()) +
                                " samples; stratification needs at least 2");
    // The small slack keeps products such as 0.29 * 100 from rounding down.
    const auto n_test =
        static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(idx.size()) + 1e-9));
    rng.shuffle(idx);
    for (std::size_t j = 0; j < n_test; ++j)
      is_test[idx[j]] = 1;
  }
  Split s;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (is_test[i] ? s.test : s.train).push_back(i);
  return s;
}

template <typename T>
Evaluation evaluate(TFusionModel<T> &model, const Dataset &ds,
                    const std::vector<std::size_t> &indices, std::size_t batch_size) {
  Evaluation e;
  if (indices.empty()) {
    e.loss = e.accuracy = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  const auto &cfg = model.config();
  const auto batches = make_batches(ds, indices, batch_size, false, 0, cfg.input_h, cfg.input_w);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Batch batch = batches[b];
    const auto probs = model.forward(to_scalar<T>(batch.images), Mode::Infer);
    loss_sum += cce_loss(probs, to_scalar<T>(batch.onehot)) * static_cast<double>(batch.size());
    const auto pred = argmax_rows(probs);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      correct += pred[i] == batch.labels[i];
      e.truth.push_back(batch.labels[i]);
      e.predicted.push_back(pred[i]);
    }
  }
  e.loss = loss_sum / static_cast<double>(indices.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  return e;
}

template <typename T>
History train(TFusionModel<T> &model, const Dataset &ds,
              const std::vector<std::size_t> &train_idx,
              const std::vector<std::size_t> &val_idx, const TrainConfig &cfg,
              const EpochCallback &on_epoch) {
  cfg.validate();
  if (ds.empty() || train_idx.empty())
    throw DataError("training set is empty");
  const auto &mc = model.config();
  if (ds.num_classes() != mc.num_classes)
    throw DataError("dataset has " + std::to_string(ds.num_classes()) +
                    " classes, model expects " + std::to_string(mc.num_classes));
  if (model.class_names.empty())
    model.class_names = ds.class_names();

  AdamState<T> adam;
  Rng shuffle_rng(cfg.seed + seed_offset::shuffle);
  History history;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(ds, train_idx, cfg.batch_size, true,
                                      shuffle_rng.next_u64(), mc.input_h, mc.input_w);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch batch = batches[b];
      const auto onehot = to_scalar<T>(batch.onehot);
      const auto probs = model.forward(to_scalar<T>(batch.images), Mode::Train);
      loss_sum += cce_loss(probs, onehot) * static_cast<double>(batch.size());
      const auto pred = argmax_rows(probs);
      for (std::size_t i = 0; i < pred.size(); ++i)
        correct += pred[i] == batch.labels[i];
      model.backward(probs, onehot);
      adam_step(model.parameters(), adam, cfg.learning_rate);
    }
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = loss_sum / static_cast<double>(train_idx.size());
    s.train_acc = static_cast<double>(correct) / static_cast<double>(train_idx.size());
    const auto val = evaluate(model, ds, val_idx, cfg.batch_size);
    s.val_loss = val.loss;
    s.val_acc = val.accuracy;
    history.push_back(s);
    model.epochs_trained += 1;
    if (on_epoch)
      on_epoch(s);
  }
  return history;
}

template <typename T>
History train(TFusionModel<T> &model, const Dataset &ds, const TrainConfig &cfg,
              const EpochCallback &on_epoch) {
  if (ds.empty())
    throw DataError("training set is empty");
  cfg.validate();
  const Split split = stratified_split(ds.labels(), cfg.test_fraction,
                                       cfg.seed + seed_offset::split);
  return train(model, ds, split.train, split.test, cfg, on_epoch);
}

std::string history_csv(const History &history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto &s : history) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f\n", s.epoch, s.train_loss,
                  s.train_acc, s.val_loss, s.val_acc);
    out += line;
  }
  return out;
}

void write_history_csv(const History &history, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing");
  out << history_csv(history);
  if (!out)
    throw IoError("failed writing '" + path.string() + "'");
}

#define TFN_INSTANTIATE(T)                                                     \
  template void adam_step<T>(const std::vector<ParamRef<T>> &, AdamState<T> &, double); \
  template Evaluation evaluate<T>(TFusionModel<T> &, const Dataset &,          \
                                  const std::vector<std::size_t> &, std::size_t); \
  template History train<T>(TFusionModel<T> &, const Dataset &,                \
                            const std::vector<std::size_t> &,                  \
                            const std::vector<std::size_t> &, const TrainConfig &, \
                            const EpochCallback &);                            \
  template History train<T>(TFusionModel<T> &, const Dataset &, const TrainConfig &, \
                            const EpochCallback &);

TFN_INSTANTIATE(float)
TFN_INSTANTIATE(double)
#undef TFN_INSTANTIATE

} // namespace tfn
