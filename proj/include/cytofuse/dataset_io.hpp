#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cytofuse/image.hpp"
#include "cytofuse/probmap.hpp"

namespace cytofuse {

// ---------------------------------------------------------------------------
// Tensor files
//
// Probability maps are stored as version-1.0 .npy files in exactly one form:
//
//   "\x93NUMPY" 0x01 0x00 <uint16 LE header length>
//   "{'descr': '<f4', 'fortran_order': False, 'shape': (H, W, C), }"
//   space padding, then '\n', so the 10-byte preamble plus header is a
//   multiple of 64 bytes; then H*W*C little-endian float32 values.
//
// Writers emit only this form. Readers reject other dtypes, fortran order,
// rank != 3 (FormatError), malformed bytes and payload size mismatches
// (ParseError), and simplex violations (ValidationError).
//
// Fused score tensors use the same layout with descr '<f8'.
// ---------------------------------------------------------------------------

// Canonical header bytes (magic through the terminating newline).
std::string canonical_npy_header(std::string_view descr, std::array<std::size_t, 3> shape);

// Validates the raw buffer (ValidationError on NaN or simplex violations)
// before encoding.
std::vector<std::uint8_t> encode_probmap(std::size_t height, std::size_t width,
                                         std::size_t num_classes, std::span<const float> data);
std::vector<std::uint8_t> encode_probmap(const ProbMap& map);
ProbMap decode_probmap(std::span<const std::uint8_t> bytes);

void write_probmap(const ProbMap& map, const std::filesystem::path& path);
ProbMap read_probmap(const std::filesystem::path& path);

struct ScoreTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<double> values;
};

std::vector<std::uint8_t> encode_scores(const FusedScoreMap& scores);
ScoreTensor decode_scores(std::span<const std::uint8_t> bytes);
void write_scores(const FusedScoreMap& scores, const std::filesystem::path& path);
ScoreTensor read_scores(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Netpbm images
//
// Masks: "P5\n<width> <height>\n255\n" followed by one raw class-index byte
// per pixel, row-major. Rendered images: the same with "P6" and RGB triples.
// Readers also accept '#' comments and arbitrary whitespace in the header.
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_pgm(const LabelMask& mask);
// With `num_classes`, labels >= num_classes raise ValidationError. ASCII
// (P2) files raise FormatError.
LabelMask decode_pgm(std::span<const std::uint8_t> bytes,
                     std::optional<std::size_t> num_classes = std::nullopt);
void write_mask(const LabelMask& mask, const std::filesystem::path& path);
LabelMask read_mask(const std::filesystem::path& path,
                    std::optional<std::size_t> num_classes = std::nullopt);

std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

// Paints each label with its palette color. ValidationError when the class
// set has no palette or a label is out of range.
RgbImage render_mask(const LabelMask& mask, const ClassSet& classes);
// Inverse of render_mask: exact color match required.
LabelMask mask_from_colors(const RgbImage& image, const ClassSet& classes);

// Palette files: one class per line, "<name> <r> <g> <b>", in class order.
// Blank lines and '#' comments are ignored.
ClassSet parse_palette(std::string_view text);
ClassSet load_palette(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest (UTF-8 JSON, "version": "cyto-fuse/1")
//
//   {
//     "version": "cyto-fuse/1",
//     "classes": {"num_classes": 2, "names": ["background", "cell"],
//                 "palette": [[0, 0, 0], [255, 255, 255]]},      // optional
//     "models": [{"name": "U", "dir": "probs/U"}, ...],
//     "ground_truth_dir": "gt",
//     "images": ["img_000", ...],           // evaluated ids
//     "train_images": ["img_100", ...],     // optional, GT only
//     "image_dir": "images"                 // optional, <id>.ppm
//   }
//
// Unknown keys are rejected. Relative paths resolve against the directory
// holding the manifest. Model names may not contain ',' or '+', which the
// CLI uses as separators.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kManifestVersion = "cyto-fuse/1";

struct ModelEntry {
  std::string name;
  std::string dir;
};

struct Manifest {
  std::string version{kManifestVersion};
  ClassSet classes = ClassSet::numbered(2);
  std::vector<ModelEntry> models;
  std::string ground_truth_dir;
  std::vector<std::string> images;
  std::vector<std::string> train_images;
  std::optional<std::string> image_dir;

  // Directory relative paths resolve against; not serialized.
  std::filesystem::path root;

  std::filesystem::path probmap_path(std::size_t model, std::string_view image_id) const;
  std::filesystem::path ground_truth_path(std::string_view image_id) const;
  std::optional<std::filesystem::path> image_path(std::string_view image_id) const;
  std::optional<std::size_t> find_model(std::string_view name) const;
};

// Schema validation only. ParseError for invalid JSON, ValidationError for
// schema violations.
Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& root);
// Referenced files that do not exist, in manifest order.
std::vector<std::filesystem::path> missing_files(const Manifest& manifest);
// Parses and cross-checks against the filesystem; a ValidationError lists
// every missing path.
Manifest load_manifest(const std::filesystem::path& path);

std::string manifest_to_json(const Manifest& manifest);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Whole-file helpers. IoError on failure. Writes go to a temporary sibling
// that is renamed over the target, so readers never see partial files.
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace cytofuse
