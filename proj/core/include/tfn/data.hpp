#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tfn/tensor.hpp"

namespace tfn {

struct Sample {
  std::filesystem::path path;
  std::size_t label = 0;
};

// Labeled image collection. Directory layout: <root>/<class_name>/*.ppm|*.pgm,
// class indices assigned in lexicographic (byte-wise) order of the
// subdirectory names.
class Dataset {
public:
  Dataset() = default;
  Dataset(std::vector<std::string> class_names, std::vector<Sample> samples);

  static Dataset from_directory(const std::filesystem::path &root);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t num_classes() const { return class_names_.size(); }
  const std::vector<std::string> &class_names() const { return class_names_; }
  const std::vector<Sample> &samples() const { return samples_; }
  std::vector<std::size_t> labels() const;

  // Decode, resize to h x w and scale to [0,1]: one [h,w,3] tensor.
  TensorF image(std::size_t index, std::size_t h, std::size_t w) const;

  // Decode every image once and keep the preprocessed tensors in memory.
  void preload(std::size_t h, std::size_t w);

private:
  std::vector<std::string> class_names_;
  std::vector<Sample> samples_;
  std::vector<TensorF> cache_;
  std::size_t cache_h_ = 0, cache_w_ = 0;
};

struct Batch {
  TensorF images; // [N,H,W,3], values in [0,1]
  TensorF onehot; // [N,K]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;

  std::size_t size() const { return labels.size(); }
};

// Deterministic chunking of an index list into batches; images are
// materialized on demand so large datasets are never resident at once.
class BatchSequence {
public:
  BatchSequence(const Dataset &ds, std::vector<std::vector<std::size_t>> plan,
                std::size_t h, std::size_t w);

  std::size_t size() const { return plan_.size(); }
  const std::vector<std::vector<std::size_t>> &plan() const { return plan_; }
  Batch operator[](std::size_t i) const;

private:
  const Dataset *ds_;
  std::vector<std::vector<std::size_t>> plan_;
  std::size_t h_, w_;
};

// shuffle=true permutes `indices` with the seeded RNG before chunking; the
// last batch keeps the remainder.
BatchSequence make_batches(const Dataset &ds, std::vector<std::size_t> indices,
                           std::size_t batch_size, bool shuffle,
                           std::uint64_t seed, std::size_t h, std::size_t w);

TensorF onehot(const std::vector<std::size_t> &labels, std::size_t k);

} // namespace tfn
