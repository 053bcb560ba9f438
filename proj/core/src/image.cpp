#include "tfn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace tfn {

namespace {

class HeaderReader {
public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]))
      out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty())
      throw ImageFormatError("truncated image header");
    return out;
  }

  std::size_t number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw ImageFormatError("malformed number '" + t + "' in image header");
    return std::stoul(t);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw ImageFormatError("missing separator after image header");
    return pos_ + 1;
  }

private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
          ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_netpbm(const std::filesystem::path &path, const char *magic,
                  std::size_t width, std::size_t height,
                  std::span<const std::uint8_t> payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing");
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char *>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out)
    throw IoError("failed writing '" + path.string() + "'");
}

} // namespace

TensorF decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ImageFormatError("unsupported image magic (expected P5 or P6)");
  const bool rgb = bytes[1] == '6';
  HeaderReader header(bytes.subspan(2));
  const std::size_t w = header.number();
  const std::size_t h = header.number();
  const std::size_t maxval = header.number();
  if (w == 0 || h == 0)
    throw ImageFormatError("image has zero width or height");
  if (maxval == 0 || maxval > 255)
    throw ImageFormatError("only 8-bit images are supported (maxval " +
                           std::to_string(maxval) + ")");
  const std::size_t offset = 2 + header.raster_offset();
  const std::size_t channels = rgb ? 3 : 1;
  const std::size_t need = w * h * channels;
  if (bytes.size() < offset + need)
    throw ImageFormatError("truncated image payload: expected " +
                           std::to_string(need) + " bytes, found " +
                           std::to_string(bytes.size() - std::min(bytes.size(), offset)));

  TensorF img({h, w, 3});
  const std::uint8_t *src = bytes.data() + offset;
  for (std::size_t p = 0; p < w * h; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      img[p * 3 + c] = static_cast<float>(src[p * channels + (rgb ? c : 0)]);
  return img;
}

TensorF load_image(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ImageFormatError("cannot open image '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const ImageFormatError &e) {
    throw ImageFormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path &path, std::size_t width,
               std::size_t height, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != width * height)
    throw SizeError("write_pgm: pixel count does not match dimensions");
  write_netpbm(path, "P5", width, height, pixels);
}

void write_ppm(const std::filesystem::path &path, std::size_t width,
               std::size_t height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != width * height * 3)
    throw SizeError("write_ppm: byte count does not match dimensions");
  write_netpbm(path, "P6", width, height, rgb);
}

TensorF resize_bilinear(const TensorF &img, std::size_t out_h,
                        std::size_t out_w) {
  if (img.rank() != 3)
    throw SizeError("resize_bilinear expects an [H,W,C] image");
  if (out_h == 0 || out_w == 0)
    throw SizeError("resize_bilinear: target size must be positive");
  const std::size_t in_h = img.dim(0), in_w = img.dim(1), C = img.dim(2);
  if (in_h == out_h && in_w == out_w)
    return img;

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[d] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(in_h, out_h);
  const auto tx = taps(in_w, out_w);

  TensorF out({out_h, out_w, C});
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        auto px = [&](std::size_t r, std::size_t q) {
          return static_cast<double>(img[(r * in_w + q) * C + c]);
        };
        const double top = px(ty[y].i0, tx[x].i0) * (1.0 - tx[x].frac) +
                           px(ty[y].i0, tx[x].i1) * tx[x].frac;
        const double bot = px(ty[y].i1, tx[x].i0) * (1.0 - tx[x].frac) +
                           px(ty[y].i1, tx[x].i1) * tx[x].frac;
        out[(y * out_w + x) * C + c] =
            static_cast<float>(top * (1.0 - ty[y].frac) + bot * ty[y].frac);
      }
  return out;
}

TensorF normalize(const TensorF &img) {
  TensorF out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i)
    out[i] = img[i] / 255.0f;
  return out;
}

} // namespace tfn
