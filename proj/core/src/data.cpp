#include "tfn/data.hpp"

#include <algorithm>
#include <cctype>

#include "tfn/image.hpp"
#include "tfn/rng.hpp"

namespace tfn {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path &p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".ppm" || ext == ".pgm";
}

} // namespace

Dataset::Dataset(std::vector<std::string> class_names, std::vector<Sample> samples)
    : class_names_(std::move(class_names)), samples_(std::move(samples)) {
  for (const auto &s : samples_)
    if (s.label >= class_names_.size())
      throw LabelError("sample label " + std::to_string(s.label) +
                       " outside [0," + std::to_string(class_names_.size()) + ")");
}

Dataset Dataset::from_directory(const fs::path &root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw DataError("dataset root '" + root.string() + "' is not a directory");

  std::vector<std::string> names;
  for (const auto &entry : fs::directory_iterator(root))
    if (entry.is_directory())
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw DataError("dataset root '" + root.string() + "' has no class subdirectories");

  std::vector<Sample> samples;
  for (std::size_t label = 0; label < names.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto &entry : fs::directory_iterator(root / names[label]))
      if (entry.is_regular_file() && is_image_file(entry.path()))
        files.push_back(entry.path());
    if (files.empty())
      throw DataError("class directory '" + names[label] + "' contains no .ppm/.pgm images");
    std::sort(files.begin(), files.end());
    for (auto &f : files)
      samples.push_back({std::move(f), label});
  }
  return Dataset(std::move(names), std::move(samples));
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples_.size());
  for (const auto &s : samples_)
    out.push_back(s.label);
  return out;
}

TensorF Dataset::image(std::size_t index, std::size_t h, std::size_t w) const {
  if (index >= samples_.size())
    throw IndexError("sample index " + std::to_string(index) +
                     " out of range (dataset has " + std::to_string(samples_.size()) + ")");
  if (!cache_.empty() && h == cache_h_ && w == cache_w_)
    return cache_[index];
  return normalize(resize_bilinear(load_image(samples_[index].path), h, w));
}

void Dataset::preload(std::size_t h, std::size_t w) {
  std::vector<TensorF> cache(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i)
    cache[i] = normalize(resize_bilinear(load_image(samples_[i].path), h, w));
  cache_ = std::move(cache);
  cache_h_ = h;
  cache_w_ = w;
}

TensorF onehot(const std::vector<std::size_t> &labels, std::size_t k) {
  if (labels.empty())
    throw SizeError("onehot: no labels");
  TensorF out({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k)
      throw LabelError("label " + std::to_string(labels[i]) + " outside [0," +
                       std::to_string(k) + ")");
    out[i * k + labels[i]] = 1.0f;
  }
  return out;
}

BatchSequence::BatchSequence(const Dataset &ds,
                             std::vector<std::vector<std::size_t>> plan,
                             std::size_t h, std::size_t w)
    : ds_(&ds), plan_(std::move(plan)), h_(h), w_(w) {}

Batch BatchSequence::operator[](std::size_t i) const {
  const auto &idx = plan_.at(i);
  Batch b;
  b.indices = idx;
  b.images = TensorF({idx.size(), h_, w_, 3});
  const std::size_t per = h_ * w_ * 3;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const TensorF img = ds_->image(idx[j], h_, w_);
    std::copy(img.data().begin(), img.data().end(),
              b.images.data().begin() + static_cast<std::ptrdiff_t>(j * per));
    b.labels.push_back(ds_->samples()[idx[j]].label);
  }
  b.onehot = onehot(b.labels, ds_->num_classes());
  return b;
}

BatchSequence make_batches(const Dataset &ds, std::vector<std::size_t> indices,
                           std::size_t batch_size, bool shuffle,
                           std::uint64_t seed, std::size_t h, std::size_t w) {
  if (batch_size == 0)
    throw ConfigError("batch_size must be at least 1");
  for (auto i : indices)
    if (i >= ds.size())
      throw IndexError("sample index " + std::to_string(i) +
                       " out of range (dataset has " + std::to_string(ds.size()) + ")");
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(indices);
  }
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t b = 0; b < indices.size(); b += batch_size) {
    const std::size_t e = std::min(indices.size(), b + batch_size);
    plan.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(b),
                      indices.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return BatchSequence(ds, std::move(plan), h, w);
}

} // namespace tfn
