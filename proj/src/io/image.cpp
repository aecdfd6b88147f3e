#include "dssa/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace dssa::io {

namespace {

std::string extension(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

// Next header token of a netpbm file, skipping whitespace and comments.
std::string netpbm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string magic = netpbm_token(in);
  if (magic != "P5" && magic != "P6") {
    throw FormatError(path.string() + ": only binary PGM (P5) / PPM (P6) are supported");
  }
  Image img;
  img.channels = magic == "P5" ? 1 : 3;
  try {
    img.width = std::stoul(netpbm_token(in));
    img.height = std::stoul(netpbm_token(in));
    const unsigned long maxval = std::stoul(netpbm_token(in));
    if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": only 8-bit images");
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed netpbm header");
  }
  if (img.width == 0 || img.height == 0) throw FormatError(path.string() + ": empty image");
  img.pixels.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (!in) throw FormatError(path.string() + ": truncated pixel data");
  return img;
}

void write_netpbm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw FormatError(path.string() + ": " + png.message);
  }
  Image img;
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  img.width = png.width;
  img.height = png.height;
  img.channels = color ? 3 : 1;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw FormatError(path.string() + ": " + msg);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(img.width);
  png.height = png_uint_32(img.height);
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw DataError(path.string() + ": " + png.message);
  }
}

}  // namespace

Image Image::to_gray() const {
  if (channels == 1) return *this;
  Image g{width, height, 1, std::vector<std::uint8_t>(width * height)};
  for (std::size_t i = 0; i < width * height; ++i) {
    const double v = 0.299 * pixels[3 * i] + 0.587 * pixels[3 * i + 1] + 0.114 * pixels[3 * i + 2];
    g.pixels[i] = std::uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  return g;
}

Image read_image(const std::filesystem::path& path) {
  const std::string ext = extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_netpbm(path);
  throw FormatError(path.string() + ": unsupported image extension");
}

void write_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("images need 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw FormatError("image buffer does not match its extents");
  }
  const std::string ext = extension(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return write_netpbm(path, img);
  throw FormatError(path.string() + ": unsupported image extension");
}

LabelMask read_mask(const std::filesystem::path& path, double spacing) {
  Image img = read_image(path);
  if (img.channels != 1) throw DataError(path.string() + ": masks must be single-channel");
  LabelMask m;
  m.width = img.width;
  m.height = img.height;
  m.labels = std::move(img.pixels);
  m.spacing = spacing;
  m.validate();
  return m;
}

void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  write_image(path, Image{mask.width, mask.height, 1, mask.labels});
}

Image resize_image(const Image& img, std::size_t width, std::size_t height) {
  if (img.width == width && img.height == height) return img;
  Image out{width, height, img.channels, std::vector<std::uint8_t>(width * height * img.channels)};
  auto axis = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& i0,
                 std::size_t& i1, double& f) {
    double s = (double(dst) + 0.5) * double(in) / double(outn) - 0.5;
    s = std::clamp(s, 0.0, double(in - 1));
    i0 = std::size_t(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    f = s - double(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    axis(y, img.height, height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      axis(x, img.width, width, x0, x1, fx);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = (1 - fy) * ((1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c)) +
                         fy * ((1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c));
        out.pixels[(y * width + x) * img.channels + c] =
            std::uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

LabelMask resize_mask(const LabelMask& mask, std::size_t width, std::size_t height) {
  if (mask.width == width && mask.height == height) return mask;
  LabelMask out(width, height, kBackground, mask.spacing * double(mask.width) / double(width));
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(mask.height - 1, (2 * y + 1) * mask.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(mask.width - 1, (2 * x + 1) * mask.width / (2 * width));
      out.at(x, y) = mask.at(sx, sy);
    }
  }
  return out;
}

}  // namespace dssa::io
