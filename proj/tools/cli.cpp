#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <thread>

#include "tfn/checkpoint.hpp"
#include "tfn/data.hpp"
#include "tfn/image.hpp"
#include "tfn/kernels.hpp"
#include "tfn/metrics.hpp"
#include "tfn/rng.hpp"

namespace tfn::cli {

namespace fs = std::filesystem;
using Model = TFusionModel<Real>;

const std::set<std::string> &run_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = ModelConfig::keys();
    k.insert(TrainConfig::keys().begin(), TrainConfig::keys().end());
    k.insert({"alpha", "epsilon", "bias"});
    return k;
  }();
  return keys;
}

RunConfig load_run_config(const std::string &file, const std::vector<std::string> &overrides) {
  KeyValues kv;
  if (!file.empty())
    kv = KeyValues::parse_file(file);
  for (const auto &o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + o + "' is not key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  kv.require_known(run_config_keys());

  RunConfig rc;
  rc.model = ModelConfig::from_kv(kv);
  rc.train = TrainConfig::from_kv(kv);
  if (kv.contains("alpha"))
    rc.fusion.alpha = parse::real("alpha", kv.get("alpha"));
  if (kv.contains("epsilon"))
    rc.fusion.epsilon = parse::real("epsilon", kv.get("epsilon"));
  if (kv.contains("bias"))
    rc.fusion.bias = parse::real("bias", kv.get("bias"));
  rc.model.validate();
  rc.train.validate();
  rc.fusion.validate();
  return rc;
}

std::string seed_suffixed(const std::string &path, std::uint64_t seed) {
  fs::path p(path);
  const std::string ext = p.extension().string();
  p.replace_extension();
  return p.string() + ".s" + std::to_string(seed) + ext;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Resizes/normalizes one image file into a [1,H,W,3] batch for `model`.
BasicTensor<Real> image_batch(const Model &model, const std::string &path) {
  const auto &c = model.config();
  if (c.input_c != 3)
    throw DataError("images are decoded to 3 channels but the model expects " +
                    std::to_string(c.input_c));
  TensorF img = normalize(resize_bilinear(load_image(path), c.input_h, c.input_w));
  return to_scalar<Real>(std::move(img).reshaped({1, c.input_h, c.input_w, 3}));
}

Dataset load_dataset(const std::string &dir, const ModelConfig &c) {
  Dataset ds = Dataset::from_directory(dir);
  if (ds.num_classes() != c.num_classes)
    throw DataError("dataset '" + dir + "' has " + std::to_string(ds.num_classes()) +
                    " classes but the model has num_classes=" + std::to_string(c.num_classes));
  if (c.input_c != 3)
    throw DataError("images are decoded to 3 channels but input_c=" + std::to_string(c.input_c));
  // Keep preprocessed images resident when they fit comfortably.
  const double bytes = static_cast<double>(ds.size()) * static_cast<double>(c.input_h) *
                       static_cast<double>(c.input_w) * 3.0 * sizeof(float);
  if (bytes <= 1024.0 * 1024.0 * 1024.0)
    ds.preload(c.input_h, c.input_w);
  return ds;
}

std::vector<std::size_t> subset_indices(const Dataset &ds, const std::string &subset,
                                        std::uint64_t split_seed, double test_fraction) {
  if (subset == "all") {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      all[i] = i;
    return all;
  }
  Split s = stratified_split(ds.labels(), test_fraction, split_seed);
  return subset == "train" ? s.train : s.test;
}

int guarded(std::ostream &err, const std::function<int()> &fn) {
  try {
    return fn();
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError &e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const IoError &e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError &e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kFormat;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

struct TrainArgs {
  std::string data, config, out, history;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 1;
  std::size_t jobs = 1;
  bool quiet = false;
};

int cmd_train(const TrainArgs &a, std::ostream &out, std::ostream &err) {
  RunConfig rc = load_run_config(a.config, a.overrides);
  if (a.seed)
    rc.train.seed = *a.seed;
  if (a.seeds == 0 || a.jobs == 0)
    throw ConfigError("--seeds and --jobs must be positive");
  const Dataset ds = load_dataset(a.data, rc.model);
  const std::uint64_t split_seed = rc.train.seed + seed_offset::split;
  const Split split = stratified_split(ds.labels(), rc.train.test_fraction, split_seed);

  struct Result {
    std::string model_path, history_path;
    double val_acc = 0.0;
    std::exception_ptr error;
  };
  std::vector<Result> results(a.seeds);
  std::mutex log_mu;

  auto run_member = [&](std::size_t i) {
    Result &r = results[i];
    try {
      TrainConfig tc = rc.train;
      tc.seed = rc.train.seed + i;
      Model model(rc.model, tc.seed);
      model.class_names = ds.class_names();
      model.split_seed = split_seed;
      model.test_fraction = tc.test_fraction;
      const History h = train(model, ds, split.train, split.test, tc, [&](const EpochStats &s) {
        if (a.quiet)
          return;
        std::lock_guard lock(log_mu);
        err << "[seed " << tc.seed << "] epoch " << s.epoch << '/' << tc.max_epochs
            << " train_loss=" << fixed4(s.train_loss) << " train_acc=" << fixed4(s.train_acc)
            << " val_loss=" << fixed4(s.val_loss) << " val_acc=" << fixed4(s.val_acc) << '\n';
      });
      r.model_path = a.seeds == 1 ? a.out : seed_suffixed(a.out, tc.seed);
      save_checkpoint(model, r.model_path);
      if (!a.history.empty()) {
        r.history_path = a.seeds == 1 ? a.history : seed_suffixed(a.history, tc.seed);
        write_history_csv(h, r.history_path);
      }
      r.val_acc = h.empty() ? 0.0 : h.back().val_acc;
    } catch (...) {
      r.error = std::current_exception();
    }
  };

  const std::size_t jobs = std::min(a.jobs, a.seeds);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < a.seeds; i += jobs)
        run_member(i);
    });
  for (auto &t : workers)
    t.join();

  for (const auto &r : results)
    if (r.error)
      std::rethrow_exception(r.error);
  for (const auto &r : results)
    out << "model=" << r.model_path << " val_acc=" << fixed4(r.val_acc) << '\n';
  return kOk;
}

struct EvalArgs {
  std::vector<std::string> models;
  std::string data, metrics, config, subset = "all";
  std::optional<std::uint64_t> seed;
  std::optional<double> test_fraction, alpha, epsilon, bias;
  std::size_t batch_size = 16;
};

std::vector<std::size_t> eval_indices(const EvalArgs &a, const Model &first, const Dataset &ds) {
  const std::uint64_t split_seed = a.seed ? *a.seed + seed_offset::split : first.split_seed;
  const double tf = a.test_fraction.value_or(first.test_fraction);
  auto idx = subset_indices(ds, a.subset, split_seed, tf);
  if (idx.empty())
    throw DataError("subset '" + a.subset + "' is empty");
  return idx;
}

void report(const MetricsReport &rep, const std::vector<std::string> &names, const EvalArgs &a,
            std::ostream &out) {
  if (!a.metrics.empty())
    write_metrics_json(rep, names, a.metrics);
  out << "accuracy=" << fixed4(rep.accuracy) << '\n';
}

int cmd_eval(const EvalArgs &a, std::ostream &out) {
  Model model = load_checkpoint<Real>(a.models.front());
  const Dataset ds = load_dataset(a.data, model.config());
  const auto idx = eval_indices(a, model, ds);
  const Evaluation e = evaluate(model, ds, idx, a.batch_size);
  const auto cm = confusion_matrix(e.truth, e.predicted, ds.num_classes());
  report(classification_metrics(cm), ds.class_names(), a, out);
  return kOk;
}

int cmd_ensemble_eval(const EvalArgs &a, std::ostream &out, std::ostream &err) {
  FusionParams fp = load_run_config(a.config, {}).fusion;
  if (a.alpha)
    fp.alpha = *a.alpha;
  if (a.epsilon)
    fp.epsilon = *a.epsilon;
  if (a.bias)
    fp.bias = *a.bias;

  std::vector<Model> members;
  for (const auto &p : a.models)
    members.push_back(load_checkpoint<Real>(p));
  EnsembleModel<Real> ens(std::move(members), fp);
  const ModelConfig &c = ens.member(0).config();
  const Dataset ds = load_dataset(a.data, c);
  const auto idx = eval_indices(a, ens.member(0), ds);

  ConfusionMatrix fused(ds.num_classes());
  std::vector<ConfusionMatrix> single(ens.size(), ConfusionMatrix(ds.num_classes()));
  const auto batches = make_batches(ds, idx, a.batch_size, false, 0, c.input_h, c.input_w);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Batch batch = batches[b];
    const auto probs = ens.member_probs(to_scalar<Real>(batch.images));
    const auto labels = argmax_rows(fuzzy_max_fuse(probs, fp));
    for (std::size_t i = 0; i < labels.size(); ++i)
      fused.add(batch.labels[i], labels[i]);
    for (std::size_t m = 0; m < probs.size(); ++m) {
      const auto ml = argmax_rows(probs[m]);
      for (std::size_t i = 0; i < ml.size(); ++i)
        single[m].add(batch.labels[i], ml[i]);
    }
  }
  for (std::size_t m = 0; m < single.size(); ++m)
    err << "member=" << a.models[m]
        << " accuracy=" << fixed4(classification_metrics(single[m]).accuracy) << '\n';
  report(classification_metrics(fused), ds.class_names(), a, out);
  return kOk;
}

int cmd_predict(const std::string &model_path, const std::string &image, std::ostream &out) {
  Model model = load_checkpoint<Real>(model_path);
  const auto probs = model.forward(image_batch(model, image), Mode::Infer);
  const std::size_t k = argmax_rows(probs).front();
  const std::string name =
      k < model.class_names.size() ? model.class_names[k] : std::to_string(k);
  out << "class=" << name << " prob=" << fixed4(static_cast<double>(probs[k])) << '\n';
  return kOk;
}

int cmd_export_attention(const std::string &model_path, const std::string &image,
                         const std::string &dest, std::ostream &out) {
  Model model = load_checkpoint<Real>(model_path);
  const auto att = model.attention(image_batch(model, image));
  export_attention(att, dest);
  const Shape4 s = att.shape4();
  out << "attention=" << dest << " width=" << s.w << " height=" << s.h << '\n';
  return kOk;
}

int cmd_count_params(const std::string &config, const std::vector<std::string> &overrides,
                     std::ostream &out) {
  const RunConfig rc = load_run_config(config, overrides);
  Model model(rc.model, 0);
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-12s %-20s %12s %12s\n", "layer", "kind", "output",
                "trainable", "total");
  out << line;
  for (const auto &l : model.summary()) {
    std::snprintf(line, sizeof line, "%-12s %-12s %-20s %12zu %12zu\n", l.name.c_str(),
                  l.kind.c_str(), shape_string(l.output).c_str(), l.params.trainable,
                  l.params.total);
    out << line;
  }
  const ParameterCount c = model.count_parameters();
  out << "trainable=" << c.trainable << " total=" << c.total << '\n';
  return kOk;
}

} // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"tfn: train, evaluate and inspect multi-kernel attention CNN classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tfn 0.1.0");
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Kernel threads (default: OpenMP default)")
      ->check(CLI::PositiveNumber);

  TrainArgs ta;
  auto *train_cmd = app.add_subcommand("train", "Train on a dataset directory");
  train_cmd->add_option("--data", ta.data, "Dataset root (<root>/<class>/*.ppm|*.pgm)")
      ->required();
  train_cmd->add_option("--config", ta.config, "key = value config file");
  train_cmd->add_option("--set", ta.overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--seed", ta.seed, "Run seed (overrides the config)");
  train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
  train_cmd->add_option("--history", ta.history, "Per-epoch history CSV");
  train_cmd->add_option("--seeds", ta.seeds,
                        "Train this many models with seeds seed..seed+K-1 (outputs get .s<seed>)");
  train_cmd->add_option("--jobs", ta.jobs, "Models trained concurrently");
  train_cmd->add_flag("--quiet", ta.quiet, "No per-epoch log");

  auto add_eval_common = [](CLI::App *cmd, EvalArgs &ea) {
    cmd->add_option("--data", ea.data, "Dataset root")->required();
    cmd->add_option("--metrics", ea.metrics, "Write the metrics report as JSON");
    cmd->add_option("--subset", ea.subset, "Samples to evaluate")
        ->check(CLI::IsMember({"all", "train", "test"}));
    cmd->add_option("--seed", ea.seed,
                    "Training seed defining the split (default: stored in the checkpoint)");
    cmd->add_option("--test-fraction", ea.test_fraction,
                    "Held-out fraction (default: stored in the checkpoint)");
    cmd->add_option("--batch-size", ea.batch_size, "Inference batch size")
        ->check(CLI::PositiveNumber);
  };

  EvalArgs ea;
  auto *eval_cmd = app.add_subcommand("eval", "Evaluate one model");
  eval_cmd->add_option("--model", ea.models, "Checkpoint")->required()->expected(1);
  add_eval_common(eval_cmd, ea);

  EvalArgs ee;
  auto *ens_cmd = app.add_subcommand("ensemble-eval", "Evaluate a fuzzy-max fused ensemble");
  ens_cmd->add_option("--models", ee.models, "Member checkpoints")->required()->expected(1, -1);
  add_eval_common(ens_cmd, ee);
  ens_cmd->add_option("--config", ee.config, "Config file supplying alpha/epsilon/bias");
  ens_cmd->add_option("--alpha", ee.alpha, "Fusion weight (default 0.8)");
  ens_cmd->add_option("--epsilon", ee.epsilon, "Fusion constant (default 0.0001)");
  ens_cmd->add_option("--bias", ee.bias, "Fusion offset (default 20)");

  std::string model_path, image, dest, cp_config;
  std::vector<std::string> cp_overrides;
  auto *pred_cmd = app.add_subcommand("predict", "Classify one image");
  pred_cmd->add_option("--model", model_path, "Checkpoint")->required();
  pred_cmd->add_option("--image", image, "PPM/PGM image")->required();

  auto *att_cmd = app.add_subcommand("export-attention", "Write the attention map as PGM");
  att_cmd->add_option("--model", model_path, "Checkpoint")->required();
  att_cmd->add_option("--image", image, "PPM/PGM image")->required();
  att_cmd->add_option("--out", dest, "Output PGM")->required();

  auto *count_cmd = app.add_subcommand("count-params", "Per-layer parameter table");
  count_cmd->add_option("--config", cp_config, "key = value config file");
  count_cmd->add_option("--set", cp_overrides, "Config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success &e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError &e) {
    app.exit(e, out, err);
    return kConfig;
  }

  if (threads > 0)
    kernels::set_threads(static_cast<int>(threads));

  return guarded(err, [&]() -> int {
    if (*train_cmd)
      return cmd_train(ta, out, err);
    if (*eval_cmd)
      return cmd_eval(ea, out);
    if (*ens_cmd)
      return cmd_ensemble_eval(ee, out, err);
    if (*pred_cmd)
      return cmd_predict(model_path, image, out);
    if (*att_cmd)
      return cmd_export_attention(model_path, image, dest, out);
    return cmd_count_params(cp_config, cp_overrides, out);
  });
}

} // namespace tfn::cli
