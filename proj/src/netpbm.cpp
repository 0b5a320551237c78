#include <cctype>
#include <charconv>
#include <cstring>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "cytofuse/dataset_io.hpp"
#include "cytofuse/error.hpp"

namespace cytofuse {

namespace {

struct NetpbmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t raster_offset = 0;
};

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t next_number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) throw ParseError(fmt::format("{} is implausibly large", what), start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(fmt::format("expected {} in netpbm header", what), start);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError("expected whitespace before raster data", pos_);
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

NetpbmHeader decode_netpbm_header(std::span<const std::uint8_t> bytes, char binary_kind,
                                  char ascii_kind, std::size_t channels) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("bad magic: not a netpbm file", 0);
  if (bytes[1] == static_cast<std::uint8_t>(ascii_kind)) {
    throw FormatError(fmt::format("ASCII P{} netpbm files are not supported; use binary P{}",
                                  ascii_kind, binary_kind));
  }
  if (bytes[1] != static_cast<std::uint8_t>(binary_kind)) {
    throw ParseError(fmt::format("bad magic: expected P{}", binary_kind), 0);
  }
  HeaderReader reader(bytes);
  NetpbmHeader header;
  header.width = reader.next_number("width");
  header.height = reader.next_number("height");
  const std::size_t maxval = reader.next_number("maxval");
  if (maxval != 255) throw FormatError(fmt::format("maxval must be 255, got {}", maxval));
  header.raster_offset = reader.raster_start();
  const std::size_t expected = header.width * header.height * channels;
  const std::size_t actual = bytes.size() >= header.raster_offset ? bytes.size() - header.raster_offset : 0;
  if (actual != expected) {
    throw ParseError(fmt::format("raster has {} bytes, expected {} for {}x{}", actual, expected,
                                 header.width, header.height),
                     header.raster_offset);
  }
  return header;
}

std::vector<std::uint8_t> encode_netpbm(char kind, std::size_t width, std::size_t height,
                                        std::span<const std::uint8_t> raster) {
  const std::string header = fmt::format("P{}\n{} {}\n255\n", kind, width, height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

template <typename Decode>
auto with_path_context(const std::filesystem::path& path, Decode decode) {
  try {
    return decode();
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()), e.offset());
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const LabelMask& mask) {
  return encode_netpbm('5', mask.width(), mask.height(), mask.labels());
}

LabelMask decode_pgm(std::span<const std::uint8_t> bytes, std::optional<std::size_t> num_classes) {
  const NetpbmHeader header = decode_netpbm_header(bytes, '5', '2', 1);
  std::vector<std::uint8_t> labels(bytes.begin() + static_cast<std::ptrdiff_t>(header.raster_offset),
                                   bytes.end());
  if (num_classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= *num_classes) {
        throw ValidationError(fmt::format("label {} at pixel ({}, {}) is >= {} classes", labels[i],
                                          i / header.width, i % header.width, *num_classes));
      }
    }
  }
  return LabelMask(header.height, header.width, std::move(labels));
}

void write_mask(const LabelMask& mask, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(mask));
}

LabelMask read_mask(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  const auto bytes = read_file(path);
  return with_path_context(path, [&] { return decode_pgm(bytes, num_classes); });
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.data.size() != image.width * image.height * 3) {
    throw ValidationError(fmt::format("RGB image of {}x{} needs {} bytes, got {}", image.width,
                                      image.height, image.width * image.height * 3,
                                      image.data.size()));
  }
  return encode_netpbm('6', image.width, image.height, image.data);
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  const NetpbmHeader header = decode_netpbm_header(bytes, '6', '3', 3);
  RgbImage image;
  image.height = header.height;
  image.width = header.width;
  image.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header.raster_offset), bytes.end());
  return image;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_ppm(image));
}

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return with_path_context(path, [&] { return decode_ppm(bytes); });
}

RgbImage render_mask(const LabelMask& mask, const ClassSet& classes) {
  if (!classes.palette()) throw ValidationError("cannot render mask: class set has no palette");
  const auto& palette = *classes.palette();
  RgbImage image;
  image.height = mask.height();
  image.width = mask.width();
  image.data.resize(mask.pixel_count() * 3);
  const auto labels = mask.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= palette.size()) {
      throw ValidationError(fmt::format("cannot render label {} with a {}-color palette", labels[i],
                                        palette.size()));
    }
    const Rgb color = palette[labels[i]];
    image.data[i * 3] = color.r;
    image.data[i * 3 + 1] = color.g;
    image.data[i * 3 + 2] = color.b;
  }
  return image;
}

LabelMask mask_from_colors(const RgbImage& image, const ClassSet& classes) {
  if (!classes.palette()) throw ValidationError("cannot map colors: class set has no palette");
  const auto& palette = *classes.palette();
  std::vector<std::uint8_t> labels(image.width * image.height);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Rgb color{image.data[i * 3], image.data[i * 3 + 1], image.data[i * 3 + 2]};
    std::size_t k = 0;
    while (k < palette.size() && !(palette[k] == color)) ++k;
    if (k == palette.size()) {
      throw ValidationError(fmt::format("pixel ({}, {}) has color ({}, {}, {}) not in the palette",
                                        i / image.width, i % image.width, color.r, color.g,
                                        color.b));
    }
    labels[i] = static_cast<std::uint8_t>(k);
  }
  return LabelMask(image.height, image.width, std::move(labels));
}

ClassSet parse_palette(std::string_view text) {
  std::vector<std::string> names;
  std::vector<Rgb> colors;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    int r = -1, g = -1, b = -1;
    std::string extra;
    if (!(fields >> r >> g >> b) || (fields >> extra)) {
      throw ValidationError(
          fmt::format("palette line {}: expected '<name> <r> <g> <b>'", line_no));
    }
    for (int v : {r, g, b}) {
      if (v < 0 || v > 255) {
        throw ValidationError(fmt::format("palette line {}: channel value {} outside 0-255",
                                          line_no, v));
      }
    }
    names.push_back(name);
    colors.push_back(Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                         static_cast<std::uint8_t>(b)});
  }
  return ClassSet(std::move(names), std::move(colors));
}

ClassSet load_palette(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return with_path_context(path, [&] { return parse_palette(text); });
}

}  // namespace cytofuse
