#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <system_error>
#include <unistd.h>

#include <fmt/core.h>

#include "cytofuse/dataset_io.hpp"
#include "cytofuse/error.hpp"

namespace cytofuse {

namespace {

constexpr std::string_view kMagic = "\x93NUMPY";
constexpr std::size_t kPreambleSize = 10;  // magic(6) + version(2) + header length(2)
constexpr std::size_t kAlignment = 64;

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(std::begin(bytes), std::end(bytes));
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

std::size_t checked_volume(const std::vector<std::size_t>& shape, std::size_t elem,
                           std::size_t offset) {
  std::size_t volume = elem;
  for (std::size_t d : shape) {
    if (d != 0 && volume > std::numeric_limits<std::size_t>::max() / d) {
      throw ParseError("declared shape overflows the addressable size", offset);
    }
    volume *= d;
  }
  return volume;
}

// Minimal reader for the Python dict literal in an npy header.
class HeaderParser {
 public:
  HeaderParser(std::string_view text, std::size_t base) : text_(text), base_(base) {}

  struct Value {
    enum class Kind { kString, kBool, kTuple } kind;
    std::string text;
    bool flag = false;
    std::vector<std::size_t> dims;
  };

  std::map<std::string, Value> parse_dict() {
    std::map<std::string, Value> out;
    skip_space();
    expect('{');
    for (;;) {
      skip_space();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::size_t key_at = pos_;
      std::string key = parse_string();
      skip_space();
      expect(':');
      skip_space();
      Value value = parse_value();
      if (!out.emplace(key, std::move(value)).second) {
        throw ParseError(fmt::format("duplicate header key '{}'", key), base_ + key_at);
      }
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_space();
      expect('}');
      break;
    }
    return out;
  }

  std::size_t position() const { return pos_; }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  void expect(char c) {
    if (peek() != c) {
      throw ParseError(fmt::format("malformed npy header: expected '{}'", c), base_ + pos_);
    }
    ++pos_;
  }

  std::string parse_string() {
    const char quote = peek();
    if (quote != '\'' && quote != '"') {
      throw ParseError("malformed npy header: expected a quoted string", base_ + pos_);
    }
    ++pos_;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != quote) ++pos_;
    if (pos_ >= text_.size()) {
      throw ParseError("malformed npy header: unterminated string", base_ + start);
    }
    std::string out(text_.substr(start, pos_ - start));
    ++pos_;
    return out;
  }

  Value parse_value() {
    const char c = peek();
    if (c == '\'' || c == '"') return Value{Value::Kind::kString, parse_string(), false, {}};
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return Value{Value::Kind::kBool, {}, true, {}};
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return Value{Value::Kind::kBool, {}, false, {}};
    }
    if (c == '(') return parse_tuple();
    throw ParseError("malformed npy header: unsupported value", base_ + pos_);
  }

  Value parse_tuple() {
    Value v{Value::Kind::kTuple, {}, false, {}};
    expect('(');
    for (;;) {
      skip_space();
      if (peek() == ')') {
        ++pos_;
        return v;
      }
      const std::size_t start = pos_;
      std::size_t dim = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        const std::size_t digit = static_cast<std::size_t>(peek() - '0');
        if (dim > (std::numeric_limits<std::size_t>::max() - digit) / 10) {
          throw ParseError("malformed npy header: dimension overflows", base_ + start);
        }
        dim = dim * 10 + digit;
        ++pos_;
      }
      if (pos_ == start) {
        throw ParseError("malformed npy header: expected a dimension", base_ + pos_);
      }
      v.dims.push_back(dim);
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      return v;
    }
  }

  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

struct DecodedHeader {
  std::array<std::size_t, 3> shape{};
  std::size_t payload_offset = 0;
};

DecodedHeader decode_header(std::span<const std::uint8_t> bytes, std::string_view descr) {
  if (bytes.size() < kPreambleSize) {
    throw ParseError(fmt::format("file of {} bytes is too short for an npy preamble", bytes.size()),
                     bytes.size());
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw ParseError("bad magic: not an npy file", 0);
  }
  if (bytes[6] != 1 || bytes[7] != 0) {
    throw FormatError(fmt::format("unsupported npy version {}.{}; only 1.0 is accepted",
                                  bytes[6], bytes[7]));
  }
  const std::size_t header_len = static_cast<std::size_t>(bytes[8]) |
                                 (static_cast<std::size_t>(bytes[9]) << 8);
  const std::size_t payload_offset = kPreambleSize + header_len;
  if (payload_offset > bytes.size()) {
    throw ParseError(fmt::format("header length {} runs past the end of a {}-byte file",
                                 header_len, bytes.size()),
                     8);
  }
  if (header_len == 0 || bytes[payload_offset - 1] != '\n') {
    throw ParseError("npy header is not newline-terminated", payload_offset == 0 ? 0 : payload_offset - 1);
  }
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()) + kPreambleSize,
                              header_len - 1);
  HeaderParser parser(text, kPreambleSize);
  const auto dict = parser.parse_dict();
  for (std::size_t i = parser.position(); i < text.size(); ++i) {
    if (text[i] != ' ') throw ParseError("unexpected bytes after npy header dict", kPreambleSize + i);
  }

  for (const auto& [key, value] : dict) {
    if (key != "descr" && key != "fortran_order" && key != "shape") {
      throw FormatError(fmt::format("unsupported npy header key '{}'", key));
    }
  }
  const auto field = [&](const char* key, HeaderParser::Value::Kind kind) -> const auto& {
    const auto it = dict.find(key);
    if (it == dict.end()) throw ParseError(fmt::format("npy header lacks '{}'", key), kPreambleSize);
    if (it->second.kind != kind) {
      throw ParseError(fmt::format("npy header key '{}' has the wrong type", key), kPreambleSize);
    }
    return it->second;
  };
  const auto& dtype = field("descr", HeaderParser::Value::Kind::kString);
  if (dtype.text != descr) {
    throw FormatError(fmt::format("unsupported dtype '{}'; expected '{}'", dtype.text, descr));
  }
  if (field("fortran_order", HeaderParser::Value::Kind::kBool).flag) {
    throw FormatError("fortran-ordered arrays are not supported");
  }
  const auto& dims = field("shape", HeaderParser::Value::Kind::kTuple).dims;
  if (dims.size() != 3) {
    throw FormatError(fmt::format("expected a rank-3 (H, W, C) array, got rank {}", dims.size()));
  }

  DecodedHeader out;
  std::copy(dims.begin(), dims.end(), out.shape.begin());
  out.payload_offset = payload_offset;

  const std::string canonical = canonical_npy_header(descr, out.shape);
  const std::size_t common = std::min(canonical.size(), payload_offset);
  for (std::size_t i = 0; i < common; ++i) {
    if (static_cast<std::uint8_t>(canonical[i]) != bytes[i]) {
      throw ParseError("npy header is not in canonical form", i);
    }
  }
  if (canonical.size() != payload_offset) {
    throw ParseError(fmt::format("npy header is {} bytes; canonical form is {}", payload_offset,
                                 canonical.size()),
                     common);
  }

  const std::size_t elem = descr == "<f8" ? 8 : 4;
  const std::size_t expected =
      checked_volume({dims[0], dims[1], dims[2]}, elem, kPreambleSize);
  const std::size_t actual = bytes.size() - payload_offset;
  if (actual != expected) {
    throw ParseError(fmt::format("payload has {} bytes, expected {} for shape ({}, {}, {})", actual,
                                 expected, dims[0], dims[1], dims[2]),
                     payload_offset);
  }
  return out;
}

template <typename T>
std::vector<std::uint8_t> encode_tensor(std::string_view descr, std::array<std::size_t, 3> shape,
                                        std::span<const T> values) {
  const std::string header = canonical_npy_header(descr, shape);
  std::vector<std::uint8_t> out(header.size() + values.size() * sizeof(T));
  std::memcpy(out.data(), header.data(), header.size());
  std::uint8_t* cursor = out.data() + header.size();
  for (T v : values) {
    const T le = to_little_endian(v);
    std::memcpy(cursor, &le, sizeof(T));
    cursor += sizeof(T);
  }
  return out;
}

template <typename T>
std::vector<T> decode_payload(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::vector<T> out((bytes.size() - offset) / sizeof(T));
  const std::uint8_t* cursor = bytes.data() + offset;
  for (T& v : out) {
    std::memcpy(&v, cursor, sizeof(T));
    v = to_little_endian(v);
    cursor += sizeof(T);
  }
  return out;
}

}  // namespace

std::string canonical_npy_header(std::string_view descr, std::array<std::size_t, 3> shape) {
  std::string dict = fmt::format("{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}, {}), }}",
                                 descr, shape[0], shape[1], shape[2]);
  const std::size_t unpadded = kPreambleSize + dict.size() + 1;
  const std::size_t total = (unpadded + kAlignment - 1) / kAlignment * kAlignment;
  dict.append(total - unpadded, ' ');
  dict.push_back('\n');
  const std::size_t header_len = dict.size();
  std::string out(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(header_len & 0xff));
  out.push_back(static_cast<char>((header_len >> 8) & 0xff));
  return out + dict;
}

std::vector<std::uint8_t> encode_probmap(std::size_t height, std::size_t width,
                                         std::size_t num_classes, std::span<const float> data) {
  const auto report = validate_probmap(height, width, num_classes, data);
  if (!report.ok()) {
    throw ValidationError("refusing to write invalid probability map: " + report.summary(10));
  }
  return encode_tensor<float>("<f4", {height, width, num_classes}, data);
}

std::vector<std::uint8_t> encode_probmap(const ProbMap& map) {
  return encode_probmap(map.height(), map.width(), map.num_classes(), map.data());
}

ProbMap decode_probmap(std::span<const std::uint8_t> bytes) {
  const DecodedHeader header = decode_header(bytes, "<f4");
  auto values = decode_payload<float>(bytes, header.payload_offset);
  return ProbMap(header.shape[0], header.shape[1], header.shape[2], std::move(values));
}

void write_probmap(const ProbMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, encode_probmap(map));
}

ProbMap read_probmap(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_probmap(bytes);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()), e.offset());
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::uint8_t> encode_scores(const FusedScoreMap& scores) {
  return encode_tensor<double>("<f8", {scores.height(), scores.width(), scores.num_classes()},
                               scores.scores());
}

ScoreTensor decode_scores(std::span<const std::uint8_t> bytes) {
  const DecodedHeader header = decode_header(bytes, "<f8");
  return ScoreTensor{header.shape[0], header.shape[1], header.shape[2],
                     decode_payload<double>(bytes, header.payload_offset)};
}

void write_scores(const FusedScoreMap& scores, const std::filesystem::path& path) {
  write_file_atomic(path, encode_scores(scores));
}

ScoreTensor read_scores(const std::filesystem::path& path) { return decode_scores(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(fmt::format("error while reading '{}'", path.string()));
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError(fmt::format("cannot create directory '{}': {}", path.parent_path().string(),
                                ec.message()));
    }
  }
  std::filesystem::path tmp = path;
  tmp += fmt::format(".tmp.{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw IoError(fmt::format("error while writing '{}'", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(fmt::format("cannot move '{}' into place", path.string()));
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace cytofuse
