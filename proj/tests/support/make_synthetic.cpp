// Writes the synthetic two-class dataset: make_synthetic <root> [per_class] [seed]
#include <cstdio>
#include <cstdlib>
#include <exception>

#include "synthetic.hpp"

int main(int argc, char **argv) {
  if (argc < 2 || argv[1][0] == '-') {
    std::fprintf(stderr, "usage: %s <root> [per_class=500] [seed=7]\n", argv[0]);
    return 2;
  }
  tfn::testing::SyntheticOptions opts;
  if (argc > 2)
    opts.per_class = std::strtoull(argv[2], nullptr, 10);
  if (argc > 3)
    opts.seed = std::strtoull(argv[3], nullptr, 10);
  try {
    tfn::testing::write_synthetic_dataset(argv[1], opts);
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
