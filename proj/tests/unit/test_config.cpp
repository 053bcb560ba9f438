#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tfn/config.hpp"
#include "tfn/error.hpp"

using namespace tfn;

TEST(KeyValues, Grammar) {
  const auto kv = KeyValues::parse("# header\n\n  learning_rate = 0.001  \n"
                                   "batch_size=8 # trailing comment\r\n"
                                   "mlsam_kernels = 3, 5,7\n");
  EXPECT_EQ(kv.values().size(), 3u);
  EXPECT_EQ(kv.get("learning_rate"), "0.001");
  EXPECT_EQ(kv.get("batch_size"), "8");
  EXPECT_EQ(kv.get("mlsam_kernels"), "3, 5,7");
  EXPECT_EQ(KeyValues::parse("").values().size(), 0u);
  EXPECT_EQ(KeyValues::parse("a =").get("a"), "");
}

TEST(KeyValues, MalformedLines) {
  EXPECT_THROW(KeyValues::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValues::parse("just words\n"), ConfigError);
  EXPECT_THROW(KeyValues::parse(" = 3\n"), ConfigError);
  try {
    KeyValues::parse("a = 1\n\nb\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(KeyValues, UnknownKeysAreNamed) {
  const auto kv = KeyValues::parse("alpha = 1\nlearning_rte = 2\n");
  try {
    kv.require_known({"alpha", "learning_rate"});
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("learning_rte"), std::string::npos);
  }
  EXPECT_NO_THROW(kv.require_known({"alpha", "learning_rte"}));
  EXPECT_THROW(kv.get("beta"), ConfigError);
}

TEST(KeyValues, MergeSetAndRoundTrip) {
  auto kv = KeyValues::parse("a = 1\nb = 2\n");
  kv.merge(KeyValues::parse("b = 3\nc = 4\n"));
  kv.set("d", "5");
  EXPECT_EQ(kv.get("b"), "3");
  EXPECT_EQ(kv.get("c"), "4");
  EXPECT_EQ(KeyValues::parse(kv.to_string()).values(), kv.values());
}

TEST(KeyValues, Files) {
  const auto path = std::filesystem::temp_directory_path() / "tfn_unit_config.cfg";
  std::ofstream(path) << "seed = 4\n";
  EXPECT_EQ(KeyValues::parse_file(path.string()).get("seed"), "4");
  EXPECT_THROW(KeyValues::parse_file("/nonexistent/x.cfg"), ConfigError);
}

TEST(Parse, Values) {
  EXPECT_EQ(parse::positive_int("k", "12"), 12u);
  EXPECT_THROW(parse::positive_int("k", "0"), ConfigError);
  EXPECT_THROW(parse::positive_int("k", "-1"), ConfigError);
  EXPECT_THROW(parse::positive_int("k", "3x"), ConfigError);
  EXPECT_EQ(parse::uint64("k", "0"), 0u);
  EXPECT_EQ(parse::real("k", "1e-4"), 1e-4);
  EXPECT_THROW(parse::real("k", "fast"), ConfigError);
  EXPECT_EQ(parse::int_list("k", "3, 5 ,7"), (std::vector<std::size_t>{3, 5, 7}));
  EXPECT_THROW(parse::int_list("k", ""), ConfigError);
  EXPECT_THROW(parse::int_list("k", "3,a"), ConfigError);
  EXPECT_EQ(parse::name_list(" a, b ,,c"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Format, RoundTrips) {
  for (double v : {1e-4, 0.1, 0.8, 20.0, 1.0 / 3.0})
    EXPECT_EQ(parse::real("k", format_real(v)), v);
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_EQ(format_int_list({3, 5, 7}), "3,5,7");
}
