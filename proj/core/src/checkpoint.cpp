#include "tfn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace tfn {

namespace {

class Writer {
public:
  void bytes(const void *p, std::size_t n) {
    const auto *b = static_cast<const std::uint8_t *>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i)
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t> &in) : in_(in) {}

  // `what` names the field for error messages.
  template <typename U>
  U le(const std::string &what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  float f32(const std::string &what) {
    return std::bit_cast<float>(le<std::uint32_t>(what));
  }
  std::string str(std::size_t n, const std::string &what) {
    need(n, what);
    std::string s(reinterpret_cast<const char *>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const std::string &what) const {
    if (in_.size() - pos_ < n)
      throw FormatError("checkpoint truncated while reading " + what);
  }
  bool done() const { return pos_ == in_.size(); }

private:
  const std::vector<std::uint8_t> &in_;
  std::size_t pos_ = 0;
};

} // namespace

const std::set<std::string> &checkpoint_config_keys() {
  static const std::set<std::string> keys = [] {
    auto k = ModelConfig::keys();
    k.insert({"class_names", "seed", "epochs_trained", "split_seed", "test_fraction"});
    return k;
  }();
  return keys;
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(TFusionModel<T> &model) {
  KeyValues kv = model.config().to_kv();
  std::string names;
  for (std::size_t i = 0; i < model.class_names.size(); ++i)
    names += (i ? "," : "") + model.class_names[i];
  if (!names.empty())
    kv.set("class_names", names);
  kv.set("seed", std::to_string(model.seed));
  kv.set("epochs_trained", std::to_string(model.epochs_trained));
  kv.set("split_seed", std::to_string(model.split_seed));
  kv.set("test_fraction", format_real(model.test_fraction));
  const std::string text = kv.to_string();

  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  const auto params = model.parameters();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto &p : params) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    const Shape &s = p.value->shape();
    w.le<std::uint8_t>(static_cast<std::uint8_t>(s.size()));
    for (auto d : s)
      w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (const T v : p.value->data())
      w.f32(static_cast<float>(v));
  }
  return w.take();
}

template <typename T>
TFusionModel<T> decode_checkpoint(const std::vector<std::uint8_t> &bytes) {
  Reader r(bytes);
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto text_len = r.le<std::uint32_t>("config length");
  const std::string text = r.str(text_len, "config text");

  ModelConfig config;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0, epochs = 0, split_seed = 0;
  double test_fraction = 0.2;
  try {
    const KeyValues kv = KeyValues::parse(text);
    kv.require_known(checkpoint_config_keys());
    config = ModelConfig::from_kv(kv);
    config.validate();
    if (kv.contains("class_names"))
      class_names = parse::name_list(kv.get("class_names"));
    if (kv.contains("seed"))
      seed = parse::uint64("seed", kv.get("seed"));
    if (kv.contains("epochs_trained"))
      epochs = parse::uint64("epochs_trained", kv.get("epochs_trained"));
    if (kv.contains("split_seed"))
      split_seed = parse::uint64("split_seed", kv.get("split_seed"));
    if (kv.contains("test_fraction"))
      test_fraction = parse::real("test_fraction", kv.get("test_fraction"));
  } catch (const ConfigError &e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what());
  }
  TFusionModel<T> model(config, seed);
  model.class_names = std::move(class_names);
  model.epochs_trained = epochs;
  model.split_seed = split_seed;
  model.test_fraction = test_fraction;

  std::map<std::string, BasicTensor<T> *> targets;
  for (auto &p : model.parameters())
    targets[p.name] = p.value;

  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint16_t>("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const std::string ctx = "tensor '" + name + "'";
    const auto ndim = r.le<std::uint8_t>(ctx + " rank");
    Shape shape(ndim);
    for (auto &d : shape)
      d = r.le<std::uint32_t>(ctx + " dims");
    const auto it = targets.find(name);
    if (it == targets.end())
      throw FormatError("checkpoint has unexpected " + ctx);
    if (shape != it->second->shape())
      throw FormatError(ctx + " has shape " + shape_string(shape) + ", model expects " +
                        shape_string(it->second->shape()));
    r.need(shape_size(shape) * 4, ctx + " data");
    for (auto &v : it->second->data())
      v = static_cast<T>(r.f32(ctx + " data"));
    targets.erase(it);
  }
  if (!targets.empty())
    throw FormatError("checkpoint is missing tensor '" + targets.begin()->first + "'");
  if (!r.done())
    throw FormatError("trailing bytes after the last tensor");
  return model;
}

template <typename T>
void save_checkpoint(TFusionModel<T> &model, const std::filesystem::path &path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("failed writing '" + path.string() + "'");
}

template <typename T>
TFusionModel<T> load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint<T>(bytes);
}

#define TFN_INSTANTIATE(T)                                                     \
  template std::vector<std::uint8_t> encode_checkpoint<T>(TFusionModel<T> &);  \
  template TFusionModel<T> decode_checkpoint<T>(                               \
      const std::vector<std::uint8_t> &);                                      \
  template void save_checkpoint<T>(TFusionModel<T> &,                          \
                                   const std::filesystem::path &);             \
  template TFusionModel<T> load_checkpoint<T>(const std::filesystem::path &);

TFN_INSTANTIATE(float)
TFN_INSTANTIATE(double)
#undef TFN_INSTANTIATE

} // namespace tfn
