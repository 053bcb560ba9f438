#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "tfn/training.hpp"

using namespace tfn;
using tfn::testing::random_tensor;

namespace {

std::filesystem::path synthetic_root(std::size_t per_class) {
  const auto root = std::filesystem::temp_directory_path() /
                    ("tfn_unit_train_" + std::to_string(per_class));
  if (!std::filesystem::exists(root)) {
    // Built aside and renamed so concurrent test processes never see a partial tree.
    auto staging = root;
    staging += "." + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "." +
               std::to_string(std::hash<std::string>{}(
                   ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    tfn::testing::SyntheticOptions o;
    o.per_class = per_class;
    tfn::testing::write_synthetic_dataset(staging, o);
    std::error_code ec;
    std::filesystem::rename(staging, root, ec);
    if (ec)
      std::filesystem::remove_all(staging);
  }
  return root;
}

// A single scalar parameter with an externally set gradient.
struct Scalar {
  TensorD w = create<double>({1}, 0.0);
  TensorD g = create<double>({1}, 0.0);
  std::vector<ParamRef<double>> refs() { return {{"w", &w, &g}}; }
};

} // namespace

TEST(Adam, ZeroGradientLeavesWeightsUnchanged) {
  Scalar s;
  s.w[0] = 0.37;
  AdamState<double> st;
  adam_step(s.refs(), st, 0.1);
  EXPECT_EQ(s.w[0], 0.37);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Scalar s;
  s.g[0] = 4.0;
  AdamState<double> st;
  adam_step(s.refs(), st, 0.1);
  // m_hat = 4, v_hat = 16: step = 0.1 * 4 / (4 + 1e-8).
  EXPECT_NEAR(s.w[0], -0.1, 1e-9);
  EXPECT_NEAR(st.m[0][0], 0.4, 1e-15);
  EXPECT_NEAR(st.v[0][0], 0.016, 1e-15);
}

TEST(Adam, TwoStepsMatchHandRecurrence) {
  Scalar s;
  s.w[0] = 1.0;
  AdamState<double> st;
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 0.5;
    s.g[0] = g;
    adam_step(s.refs(), st, 1e-3);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(s.w[0], 0.998, 1e-6);
  EXPECT_NEAR(s.w[0], w, 1e-15);
  EXPECT_EQ(st.t, 2u);
}

TEST(Adam, SecondMomentStaysNonNegative) {
  Rng rng(1);
  TensorD w = random_tensor({20}, rng), g({20});
  std::vector<ParamRef<double>> refs = {{"w", &w, &g}};
  AdamState<double> st;
  for (int step = 0; step < 50; ++step) {
    g = random_tensor({20}, rng, -5, 5);
    adam_step(refs, st, 1e-2);
    for (double v : st.v[0].data())
      ASSERT_GE(v, 0.0);
  }
  EXPECT_EQ(st.t, 50u);
}

TEST(Adam, SkipsNonTrainableAndChecksShapes) {
  TensorD w = create<double>({2}, 1.0), g = create<double>({2}, 1.0), stat = create<double>({2}, 3.0);
  std::vector<ParamRef<double>> refs = {{"w", &w, &g}, {"stat", &stat, nullptr}};
  AdamState<double> st;
  adam_step(refs, st, 0.1);
  EXPECT_EQ(st.m.size(), 1u);
  EXPECT_EQ(stat[0], 3.0);
  TensorD w2 = create<double>({3}, 1.0), g2 = create<double>({3}, 1.0);
  std::vector<ParamRef<double>> other = {{"w", &w2, &g2}};
  EXPECT_THROW(adam_step(other, st, 0.1), SizeError);
  TensorD bad = create<double>({5}, 1.0);
  std::vector<ParamRef<double>> mismatched = {{"w", &w, &bad}};
  AdamState<double> fresh;
  EXPECT_THROW(adam_step(mismatched, fresh, 0.1), SizeError);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.max_epochs, 50u);
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<std::function<void(TrainConfig &)>>{
           [](TrainConfig &t) { t.learning_rate = 0; },
           [](TrainConfig &t) { t.learning_rate = -1; },
           [](TrainConfig &t) { t.batch_size = 0; },
           [](TrainConfig &t) { t.test_fraction = 0; },
           [](TrainConfig &t) { t.test_fraction = 1; }}) {
    TrainConfig t;
    mutate(t);
    EXPECT_THROW(t.validate(), ConfigError);
  }
  TrainConfig t;
  t.learning_rate = 3e-4;
  t.seed = 9;
  EXPECT_EQ(TrainConfig::from_kv(t.to_kv()).learning_rate, 3e-4);
  EXPECT_EQ(TrainConfig::from_kv(t.to_kv()).seed, 9u);
}

TEST(StratifiedSplit, PublishedClassSizes) {
  std::vector<std::size_t> labels(1252, 0);
  labels.resize(1252 + 1230, 1);
  const Split s = stratified_split(labels, 0.2, 3);
  std::size_t test0 = 0, test1 = 0;
  for (auto i : s.test)
    (labels[i] == 0 ? test0 : test1) += 1;
  EXPECT_EQ(test0, 250u);
  EXPECT_EQ(test1, 246u);
  EXPECT_EQ(s.train.size(), 2482u - 496u);
}

TEST(StratifiedSplit, SmallClasses) {
  const Split s = stratified_split({0, 0, 0, 0, 1, 1, 1, 1}, 0.5, 1);
  EXPECT_EQ(s.test.size(), 4u);
  EXPECT_EQ(s.train.size(), 4u);
  EXPECT_THROW(stratified_split({0, 0, 1}, 0.5, 1), StratificationError);
  EXPECT_THROW(stratified_split({0, 0, 1, 1}, 0.0, 1), ConfigError);
}

TEST(StratifiedSplit, PartitionDeterminismAndProportion) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    std::vector<std::size_t> labels;
    std::vector<std::size_t> per(k);
    for (std::size_t c = 0; c < k; ++c) {
      per[c] = 2 + rng.below(40);
      labels.insert(labels.end(), per[c], c);
    }
    Rng(rng.next_u64()).shuffle(labels);
    const double f = rng.uniform(0.05, 0.95);
    const std::uint64_t seed = rng.next_u64();
    const Split s = stratified_split(labels, f, seed);
    const Split again = stratified_split(labels, f, seed);
    EXPECT_EQ(s.train, again.train);
    EXPECT_EQ(s.test, again.test);
    EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
    EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), labels.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      ASSERT_EQ(all[i], i);
    std::vector<std::size_t> test_per(k);
    for (auto i : s.test)
      test_per[labels[i]] += 1;
    for (std::size_t c = 0; c < k; ++c)
      EXPECT_EQ(test_per[c], static_cast<std::size_t>(std::floor(f * static_cast<double>(per[c]) + 1e-9)));
  }
}

TEST(StratifiedSplit, SeedChangesTheSplit) {
  std::vector<std::size_t> labels(100, 0);
  labels.resize(200, 1);
  EXPECT_NE(stratified_split(labels, 0.2, 1).test, stratified_split(labels, 0.2, 2).test);
}

TEST(Train, StepsHistoryAndEpochCounter) {
  const Dataset ds = Dataset::from_directory(synthetic_root(16));
  ASSERT_EQ(ds.size(), 32u);
  TFusionModel<float> m(ModelConfig::desk(), 0);
  std::vector<std::size_t> all(32);
  for (std::size_t i = 0; i < 32; ++i)
    all[i] = i;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 3;
  std::size_t callbacks = 0;
  const History h = train(m, ds, all, {}, tc, [&](const EpochStats &s) {
    ++callbacks;
    EXPECT_EQ(s.epoch, callbacks);
  });
  EXPECT_EQ(h.size(), 3u);
  EXPECT_EQ(callbacks, 3u);
  EXPECT_EQ(m.epochs_trained, 3u);
  EXPECT_EQ(m.class_names, (std::vector<std::string>{"blob", "ring"}));
  EXPECT_EQ(make_batches(ds, all, 16, true, 0, 32, 32).size(), 2u);
  for (const auto &s : h) {
    EXPECT_TRUE(std::isnan(s.val_loss));
    EXPECT_GE(s.train_acc, 0.0);
    EXPECT_LE(s.train_acc, 1.0);
  }
}

TEST(Train, DeterministicForASeed) {
  const Dataset ds = Dataset::from_directory(synthetic_root(16));
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.test_fraction = 0.25;
  TFusionModel<float> a(ModelConfig::desk(), 4), b(ModelConfig::desk(), 4);
  const History ha = train(a, ds, tc), hb = train(b, ds, tc);
  EXPECT_EQ(ha[0].train_loss, hb[0].train_loss);
  EXPECT_EQ(ha[0].val_loss, hb[0].val_loss);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_EQ(*pa[i].value, *pb[i].value) << pa[i].name;
}

TEST(Train, EmptyInputs) {
  TFusionModel<float> m(ModelConfig::desk(), 0);
  EXPECT_THROW(train(m, Dataset(), TrainConfig{}), DataError);
  const Dataset ds = Dataset::from_directory(synthetic_root(16));
  EXPECT_THROW(train(m, ds, {}, {}, TrainConfig{}), DataError);
  ModelConfig three = ModelConfig::desk();
  three.num_classes = 3;
  TFusionModel<float> m3(three, 0);
  EXPECT_THROW(train(m3, ds, TrainConfig{}), DataError);
}

TEST(Train, EvaluateCountsEverySample) {
  const Dataset ds = Dataset::from_directory(synthetic_root(16));
  TFusionModel<float> m(ModelConfig::desk(), 1);
  const Evaluation e = evaluate(m, ds, {3, 1, 30}, 2);
  EXPECT_EQ(e.truth, (std::vector<std::size_t>{0, 0, 1}));
  EXPECT_EQ(e.predicted.size(), 3u);
  EXPECT_TRUE(std::isnan(evaluate(m, ds, {}, 2).loss));
}

// Fifty Adam steps on one fixed batch bring the loss down for nearly every seed.
TEST(Train, FiftyStepsReduceLossOnAFixedBatch) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TFusionModel<float> m(ModelConfig::desk(), seed);
    Rng rng(seed + 50);
    const TensorF x = random_tensor({8, 32, 32, 3}, rng, 0, 1).cast<float>();
    const TensorF y = onehot({0, 1, 1, 0, 1, 0, 0, 1}, 2);
    const double before = cce_loss(m.forward(x, Mode::Infer), y);
    AdamState<float> st;
    for (int step = 0; step < 50; ++step) {
      const TensorF p = m.forward(x, Mode::Train);
      m.backward(p, y);
      adam_step(m.parameters(), st, 1e-4);
    }
    improved += cce_loss(m.forward(x, Mode::Infer), y) < before;
  }
  EXPECT_GE(improved, 9);
}

TEST(History, CsvFormat) {
  History h = {{1, 0.5, 0.25, 0.75, 0.125}, {2, 0.25, 0.5, 0.5, 0.625}};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,train_acc,val_loss,val_acc\n"
                            "1,0.500000,0.250000,0.750000,0.125000\n"
                            "2,0.250000,0.500000,0.500000,0.625000\n");
  EXPECT_THROW(write_history_csv(h, "/nonexistent-dir/h.csv"), IoError);
}
