#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "synthetic.hpp"
#include "tfn/data.hpp"
#include "tfn/error.hpp"
#include "tfn/image.hpp"
#include "tfn/rng.hpp"

using namespace tfn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string &name) {
  const auto dir = fs::temp_directory_path() / "tfn_unit_data" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> bytes_of(const std::string &s) { return {s.begin(), s.end()}; }

// Two classes with deliberately unsorted directory creation order.
fs::path small_dataset(std::size_t per_class) {
  const auto root = temp_dir("set" + std::to_string(per_class));
  for (const char *cls : {"zeta", "Alpha", "beta"}) {
    fs::create_directories(root / cls);
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<std::uint8_t> px(4 * 6, static_cast<std::uint8_t>(10 * i));
      write_pgm(root / cls / ("img" + std::to_string(i) + ".pgm"), 6, 4, px);
    }
  }
  return root;
}

} // namespace

TEST(Image, DecodePpmAndPgm) {
  auto ppm = bytes_of("P6\n# comment\n2 1\n255\n");
  for (std::uint8_t b : {1, 2, 3, 4, 5, 6})
    ppm.push_back(b);
  const TensorF a = decode_image(ppm);
  EXPECT_EQ(a.shape(), (Shape{1, 2, 3}));
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_EQ(a[i], static_cast<float>(i + 1));

  auto pgm = bytes_of("P5 2 2 200 ");
  for (std::uint8_t b : {0, 50, 100, 200})
    pgm.push_back(b);
  const TensorF g = decode_image(pgm);
  EXPECT_EQ(g.shape(), (Shape{2, 2, 3}));
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_EQ(g[p * 3 + c], static_cast<float>(pgm[pgm.size() - 4 + p]));
}

TEST(Image, RejectsUnsupportedAndBroken) {
  EXPECT_THROW(decode_image(bytes_of("P4\n2 2\n\x01\x02")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("P3\n1 1\n255\n1 2 3\n")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("P6\n2 2\n255\n\x01\x02\x03")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("P6\n2 2\n65535\n")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("P6\n0 2\n255\n")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("P6\n2 x\n255\n")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("P6\n2")), ImageFormatError);
  EXPECT_THROW(decode_image(bytes_of("")), ImageFormatError);
  EXPECT_THROW(load_image(temp_dir("missing") / "none.ppm"), ImageFormatError);
  // ImageFormatError is a DataError for the CLI's exit-code mapping.
  EXPECT_THROW(decode_image(bytes_of("JPEG")), DataError);
}

TEST(Image, WriteReadRoundTrip) {
  const auto dir = temp_dir("rt");
  std::vector<std::uint8_t> rgb(3 * 5 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i)
    rgb[i] = static_cast<std::uint8_t>(i * 5);
  write_ppm(dir / "a.ppm", 3, 5, rgb);
  const TensorF img = load_image(dir / "a.ppm");
  EXPECT_EQ(img.shape(), (Shape{5, 3, 3}));
  for (std::size_t i = 0; i < rgb.size(); ++i)
    EXPECT_EQ(img[i], rgb[i]);
  EXPECT_THROW(write_ppm(dir / "b.ppm", 3, 5, std::vector<std::uint8_t>(4)), SizeError);
  EXPECT_THROW(write_pgm("/nonexistent-dir/x.pgm", 1, 1, std::vector<std::uint8_t>(1)), IoError);
}

TEST(Resize, HalfPixelExample) {
  const TensorF row = create<float>({1, 2, 1}, std::vector<float>{0, 255});
  const TensorF out = resize_bilinear(row, 1, 4);
  const float want[] = {0.0f, 63.75f, 191.25f, 255.0f};
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(out[i], want[i]);
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(1);
  TensorF img({5, 7, 3});
  for (auto &v : img.data())
    v = static_cast<float>(rng.below(256));
  EXPECT_EQ(resize_bilinear(img, 5, 7), img);
}

TEST(Resize, ConstantStaysConstantAndBoundsHold) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 1 + rng.below(20), w = 1 + rng.below(20);
    const std::size_t oh = 1 + rng.below(40), ow = 1 + rng.below(40);
    const auto c = static_cast<float>(rng.below(256));
    const TensorF flat = resize_bilinear(create<float>({h, w, 3}, c), oh, ow);
    for (float v : flat.data())
      ASSERT_EQ(v, c);
    TensorF img({h, w, 3});
    for (auto &v : img.data())
      v = static_cast<float>(rng.below(256));
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const TensorF out = resize_bilinear(img, oh, ow);
    EXPECT_EQ(out.shape(), (Shape{oh, ow, 3}));
    for (float v : out.data()) {
      ASSERT_GE(v, *lo);
      ASSERT_LE(v, *hi);
    }
  }
  EXPECT_THROW(resize_bilinear(create<float>({2, 2}, 0.0f), 4, 4), SizeError);
  EXPECT_THROW(resize_bilinear(create<float>({2, 2, 3}, 0.0f), 0, 4), SizeError);
}

TEST(Resize, DoublingReproducesHandInterpolation) {
  // 2x2 -> 4x4: source coordinates -0.25, 0.25, 0.75, 1.25 on both axes.
  const TensorF img = create<float>({2, 2, 1}, std::vector<float>{0, 100, 200, 40});
  const TensorF out = resize_bilinear(img, 4, 4);
  const double f[] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const double top = 0 * (1 - f[x]) + 100 * f[x];
      const double bot = 200 * (1 - f[x]) + 40 * f[x];
      EXPECT_NEAR(out[y * 4 + x], top * (1 - f[y]) + bot * f[y], 1e-4);
    }
}

TEST(Normalize, DividesBy255) {
  const TensorF n = normalize(create<float>({1, 1, 3}, std::vector<float>{0, 51, 255}));
  EXPECT_EQ(n[0], 0.0f);
  EXPECT_EQ(n[1], 0.2f);
  EXPECT_EQ(n[2], 1.0f);
}

TEST(Dataset, LexicographicClassesAndSamples) {
  const Dataset ds = Dataset::from_directory(small_dataset(3));
  EXPECT_EQ(ds.class_names(), (std::vector<std::string>{"Alpha", "beta", "zeta"}));
  EXPECT_EQ(ds.size(), 9u);
  EXPECT_EQ(ds.labels(), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2, 2}));
  EXPECT_EQ(ds.samples()[1].path.filename(), "img1.pgm");
}

TEST(Dataset, ImagesAreResizedAndInUnitRange) {
  const auto root = temp_dir("synthetic");
  tfn::testing::SyntheticOptions o;
  o.per_class = 4;
  o.size = 20;
  tfn::testing::write_synthetic_dataset(root, o);
  Dataset ds = Dataset::from_directory(root);
  EXPECT_EQ(ds.class_names(), (std::vector<std::string>{"blob", "ring"}));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const TensorF img = ds.image(i, 32, 32);
    ASSERT_EQ(img.shape(), (Shape{32, 32, 3}));
    for (float v : img.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  const TensorF before = ds.image(5, 32, 32);
  ds.preload(32, 32);
  EXPECT_EQ(ds.image(5, 32, 32), before);
  EXPECT_EQ(ds.image(5, 16, 16).shape(), (Shape{16, 16, 3}));
  EXPECT_THROW(ds.image(8, 32, 32), IndexError);
}

TEST(Dataset, DirectoryErrors) {
  EXPECT_THROW(Dataset::from_directory(temp_dir("none") / "missing"), DataError);
  EXPECT_THROW(Dataset::from_directory(temp_dir("empty")), DataError);
  const auto root = temp_dir("noimages");
  fs::create_directories(root / "a");
  std::ofstream(root / "a" / "notes.txt") << "x";
  EXPECT_THROW(Dataset::from_directory(root), DataError);
  EXPECT_THROW(Dataset({"a"}, {{"x.ppm", 1}}), LabelError);
}

TEST(Batches, ChunkingOrderAndRemainder) {
  const Dataset ds = Dataset::from_directory(small_dataset(11));
  std::vector<std::size_t> idx(33);
  for (std::size_t i = 0; i < 33; ++i)
    idx[i] = i;
  const auto seq = make_batches(ds, idx, 16, false, 0, 4, 6);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq.plan()[0].size(), 16u);
  EXPECT_EQ(seq.plan()[1].size(), 16u);
  EXPECT_EQ(seq.plan()[2].size(), 1u);
  std::vector<std::size_t> flat;
  for (const auto &b : seq.plan())
    flat.insert(flat.end(), b.begin(), b.end());
  EXPECT_EQ(flat, idx);

  const Batch b = seq[2];
  EXPECT_EQ(b.images.shape(), (Shape{1, 4, 6, 3}));
  EXPECT_EQ(b.onehot.shape(), (Shape{1, 3}));
  EXPECT_EQ(b.labels, std::vector<std::size_t>{2});
  EXPECT_EQ(b.onehot[2], 1.0f);
  EXPECT_EQ(b.indices, std::vector<std::size_t>{32});
}

TEST(Batches, ShuffleIsSeededPermutation) {
  const Dataset ds = Dataset::from_directory(small_dataset(11));
  std::vector<std::size_t> idx(33);
  for (std::size_t i = 0; i < 33; ++i)
    idx[i] = i;
  auto flat = [&](std::uint64_t seed) {
    std::vector<std::size_t> out;
    const auto seq = make_batches(ds, idx, 5, true, seed, 4, 6);
    for (const auto &b : seq.plan())
      out.insert(out.end(), b.begin(), b.end());
    return out;
  };
  EXPECT_EQ(flat(3), flat(3));
  EXPECT_NE(flat(3), flat(4));
  auto sorted = flat(3);
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, idx);
  EXPECT_THROW(make_batches(ds, {0, 33}, 4, false, 0, 4, 6), IndexError);
  EXPECT_THROW(make_batches(ds, {0}, 0, false, 0, 4, 6), ConfigError);
}

TEST(OneHot, RowsAndErrors) {
  const TensorF y = onehot({1, 0, 2}, 3);
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 1.0f);
  EXPECT_EQ(y.data()[3], 1.0f);
  EXPECT_EQ(y.data()[8], 1.0f);
  EXPECT_THROW(onehot({3}, 3), LabelError);
  EXPECT_THROW(onehot({}, 3), SizeError);
}
