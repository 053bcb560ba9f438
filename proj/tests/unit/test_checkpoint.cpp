#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tfn/checkpoint.hpp"

using namespace tfn;
using tfn::testing::random_tensor;

namespace {

std::filesystem::path temp_path(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / "tfn_unit_ckpt";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// A desk model whose BN running statistics have moved off their defaults.
TFusionModel<float> trained_looking_model(std::uint64_t seed) {
  TFusionModel<float> m(ModelConfig::desk(), seed);
  Rng rng(seed);
  m.forward(random_tensor({4, 32, 32, 3}, rng, 0, 1).cast<float>(), Mode::Train);
  m.class_names = {"blob", "ring"};
  m.epochs_trained = 7;
  m.split_seed = 42;
  m.test_fraction = 0.25;
  return m;
}

// Offset of the first tensor's data: header, config text, count, then the
// first name/rank/dims.
std::size_t first_tensor_data_offset(const std::vector<std::uint8_t> &b, std::string *name,
                                     std::size_t *elements) {
  auto u32 = [&](std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, b.data() + at, 4);
    return v;
  };
  std::size_t pos = 8;
  pos += 4 + u32(pos);
  pos += 4; // count
  std::uint16_t nlen;
  std::memcpy(&nlen, b.data() + pos, 2);
  pos += 2;
  *name = std::string(reinterpret_cast<const char *>(b.data() + pos), nlen);
  pos += nlen;
  const std::uint8_t nd = b[pos++];
  *elements = 1;
  for (std::uint8_t d = 0; d < nd; ++d, pos += 4)
    *elements *= u32(pos);
  return pos;
}

} // namespace

TEST(Checkpoint, RoundTripPreservesInferOutputsBitwise) {
  auto m = trained_looking_model(1);
  const auto path = temp_path("rt.tfn");
  save_checkpoint(m, path);
  auto back = load_checkpoint<float>(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.class_names, m.class_names);
  EXPECT_EQ(back.seed, 1u);
  EXPECT_EQ(back.epochs_trained, 7u);
  EXPECT_EQ(back.split_seed, 42u);
  EXPECT_EQ(back.test_fraction, 0.25);
  auto pa = m.parameters(), pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(*pa[i].value, *pb[i].value) << pa[i].name;
  }
  Rng rng(9);
  const TensorF x = random_tensor({3, 32, 32, 3}, rng, 0, 1).cast<float>();
  EXPECT_EQ(m.forward(x, Mode::Infer), back.forward(x, Mode::Infer));
}

TEST(Checkpoint, EncodingIsDeterministic) {
  auto a = trained_looking_model(2), b = trained_looking_model(2);
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
}

TEST(Checkpoint, HeaderLayout) {
  auto m = trained_looking_model(3);
  const auto bytes = encode_checkpoint(m);
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TFN1");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
}

TEST(Checkpoint, NonDefaultConfigRoundTrip) {
  ModelConfig c = ModelConfig::desk();
  c.num_classes = 3;
  c.mlsam_kernels = {3, 5};
  c.dense_units = 12;
  TFusionModel<double> m(c, 11);
  const auto back = decode_checkpoint<double>(encode_checkpoint(m));
  EXPECT_EQ(back.config(), c);
}

TEST(Checkpoint, BadMagic) {
  auto m = trained_looking_model(4);
  auto bytes = encode_checkpoint(m);
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint<float>(bytes), FormatError);
}

TEST(Checkpoint, WrongVersion) {
  auto m = trained_looking_model(5);
  auto bytes = encode_checkpoint(m);
  bytes[4] = 2;
  EXPECT_THROW(decode_checkpoint<float>(bytes), VersionError);
}

TEST(Checkpoint, TruncatedMidTensorNamesTheTensor) {
  auto m = trained_looking_model(6);
  auto bytes = encode_checkpoint(m);
  std::string name;
  std::size_t elements = 0;
  const std::size_t data = first_tensor_data_offset(bytes, &name, &elements);
  bytes.resize(data + elements * 2);
  try {
    decode_checkpoint<float>(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  auto m = trained_looking_model(7);
  const auto bytes = encode_checkpoint(m);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, bytes.size() / 3,
                          bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(decode_checkpoint<float>(b), FormatError) << "cut at " << cut;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint<float>(longer), FormatError);
}

TEST(Checkpoint, CorruptConfigIsFormatError) {
  auto m = trained_looking_model(8);
  auto bytes = encode_checkpoint(m);
  // Replace the first config character so the text no longer parses.
  bytes[12] = '=';
  EXPECT_THROW(decode_checkpoint<float>(bytes), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint<float>(temp_path("does-not-exist.tfn")), IoError);
  auto m = trained_looking_model(9);
  EXPECT_THROW(save_checkpoint(m, "/nonexistent-dir/m.tfn"), IoError);
}

TEST(Checkpoint, CrossPrecisionLoad) {
  auto m = trained_looking_model(10);
  const auto path = temp_path("cross.tfn");
  save_checkpoint(m, path);
  auto d = load_checkpoint<double>(path);
  auto pf = m.parameters();
  auto pd = d.parameters();
  for (std::size_t i = 0; i < pf.size(); ++i)
    for (std::size_t j = 0; j < pf[i].value->size(); ++j)
      ASSERT_EQ(static_cast<double>((*pf[i].value)[j]), (*pd[i].value)[j]);
}
