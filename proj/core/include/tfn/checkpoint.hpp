#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tfn/model.hpp"

namespace tfn {

// Binary checkpoint, little-endian:
//   "TFN1" | u32 version | u32 config length | config text (key = value)
//   | u32 tensor count | per tensor: u16 name length, name, u8 ndim,
//   u32 dims[ndim], f32 data[prod(dims)]
// The config text holds the model keys plus class_names, seed,
// epochs_trained, split_seed and test_fraction, so a checkpoint is
// self-describing.
inline constexpr char kCheckpointMagic[4] = {'T', 'F', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

const std::set<std::string> &checkpoint_config_keys();

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(TFusionModel<T> &model);
template <typename T>
TFusionModel<T> decode_checkpoint(const std::vector<std::uint8_t> &bytes);

template <typename T>
void save_checkpoint(TFusionModel<T> &model, const std::filesystem::path &path);
// IoError when the file cannot be read; FormatError/VersionError otherwise.
template <typename T>
TFusionModel<T> load_checkpoint(const std::filesystem::path &path);

} // namespace tfn
