#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "cytofuse/dataset_io.hpp"
#include "cytofuse/error.hpp"
#include "support.hpp"

namespace cytofuse {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

using Bytes = std::vector<std::uint8_t>;

Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

ProbMap ninths() {
  // Each pixel (1/9, 2/9, 6/9).
  std::vector<float> v;
  for (int i = 0; i < 4; ++i) {
    v.push_back(1.0F / 9.0F);
    v.push_back(2.0F / 9.0F);
    v.push_back(6.0F / 9.0F);
  }
  return ProbMap(2, 2, 3, std::move(v));
}

// Hand-assembled version-1.0 file with an arbitrary header dictionary.
Bytes npy_with_header(const std::string& dict, std::size_t payload_bytes, std::uint8_t major = 1) {
  std::string header = dict;
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  Bytes out = {0x93, 'N', 'U', 'M', 'P', 'Y', major, 0x00,
               static_cast<std::uint8_t>(header.size() & 0xff),
               static_cast<std::uint8_t>(header.size() >> 8)};
  out.insert(out.end(), header.begin(), header.end());
  // Payload of uniform two-class pixels.
  const float half = 0.5F;
  for (std::size_t i = 0; i + 4 <= payload_bytes; i += 4) {
    std::uint8_t b[4];
    std::memcpy(b, &half, 4);
    out.insert(out.end(), b, b + 4);
  }
  return out;
}

const std::string kGoodDict = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2, 2), }";

TEST(TensorFile, NinthsHeaderLengthFromGrammar) {
  const std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2, 3), }";
  // Preamble (10) + dict + newline, rounded up to a multiple of 64.
  const std::size_t expected_header = (10 + dict.size() + 1 + 63) / 64 * 64;
  ASSERT_EQ(expected_header, 128u);
  const Bytes file = encode_probmap(ninths());
  EXPECT_EQ(file.size(), 128u + 48u);
  EXPECT_EQ(canonical_npy_header("<f4", {2, 2, 3}).size(), 128u);
  EXPECT_EQ(file[127], '\n');
  EXPECT_EQ(std::string(file.begin() + 10, file.begin() + 10 + static_cast<std::ptrdiff_t>(dict.size())),
            dict);
}

TEST(TensorFile, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(6);
  const ProbMap map = testing::random_probmap(rng, 7, 5, 4);
  const Bytes file = encode_probmap(map);
  const ProbMap back = decode_probmap(file);
  ASSERT_EQ(back.data().size(), map.data().size());
  EXPECT_EQ(std::memcmp(back.data().data(), map.data().data(), map.data().size() * 4), 0);
  EXPECT_EQ(encode_probmap(back), file);
}

TEST(TensorFile, WriteTwiceGivesIdenticalFiles) {
  TempDir dir("npy");
  write_probmap(ninths(), dir.path() / "a.npy");
  write_probmap(ninths(), dir.path() / "b.npy");
  EXPECT_EQ(read_file(dir.path() / "a.npy"), read_file(dir.path() / "b.npy"));
  EXPECT_EQ(read_probmap(dir.path() / "a.npy").at(1, 1, 2), 6.0F / 9.0F);
  for (const auto& entry : fs::directory_iterator(dir.path())) {
    EXPECT_EQ(entry.path().extension(), ".npy") << "leftover " << entry.path();
  }
}

TEST(TensorFile, NanIsRefusedBeforeWrite) {
  const std::vector<float> v{std::numeric_limits<float>::quiet_NaN(), 0.5F};
  EXPECT_THROW(encode_probmap(1, 1, 2, v), ValidationError);
}

TEST(TensorFile, HandAssembledCanonicalFileDecodes) {
  const ProbMap map = decode_probmap(npy_with_header(kGoodDict, 16));
  EXPECT_EQ(map.height(), 1u);
  EXPECT_EQ(map.width(), 2u);
  EXPECT_EQ(map.num_classes(), 2u);
}

TEST(TensorFileMalformed, TruncatedPayloadNamesByteCounts) {
  try {
    decode_probmap(npy_with_header(kGoodDict, 12));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("12"), std::string::npos) << msg;
    EXPECT_NE(msg.find("16"), std::string::npos) << msg;
  }
}

TEST(TensorFileMalformed, FortranOrderIsFormatError) {
  EXPECT_THROW(decode_probmap(npy_with_header(
                   "{'descr': '<f4', 'fortran_order': True, 'shape': (1, 2, 2), }", 16)),
               FormatError);
}

TEST(TensorFileMalformed, BadMagicIsParseErrorAtOffsetZero) {
  Bytes file = npy_with_header(kGoodDict, 16);
  file[1] = 'X';
  try {
    decode_probmap(file);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(TensorFileMalformed, OtherRejections) {
  EXPECT_THROW(decode_probmap(npy_with_header(
                   "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 2, 2), }", 32)),
               FormatError);
  EXPECT_THROW(decode_probmap(npy_with_header(
                   "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }", 16)),
               FormatError);
  EXPECT_THROW(decode_probmap(npy_with_header(kGoodDict, 16, 2)), FormatError);
  EXPECT_THROW(decode_probmap(npy_with_header(
                   "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2, 2), 'x': 'y', }", 16)),
               FormatError);
  // Legal Python, but not the canonical spelling.
  EXPECT_THROW(decode_probmap(npy_with_header(
                   "{'descr': '<f4', 'fortran_order': False, 'shape': (1,2,2), }", 16)),
               ParseError);
  EXPECT_THROW(decode_probmap(npy_with_header(kGoodDict, 20)), ParseError);
  Bytes cut = npy_with_header(kGoodDict, 16);
  cut.resize(40);
  EXPECT_THROW(decode_probmap(cut), ParseError);
  EXPECT_THROW(decode_probmap(Bytes{0x93, 'N'}), ParseError);
}

TEST(TensorFileMalformed, SimplexViolationIsValidationError) {
  Bytes file = npy_with_header(kGoodDict, 16);
  const float big = 0.9F;
  std::memcpy(file.data() + file.size() - 4, &big, 4);
  EXPECT_THROW(decode_probmap(file), ValidationError);
}

TEST(TensorFile, MissingFileIsIoError) {
  EXPECT_THROW(read_probmap("/nonexistent/dir/x.npy"), IoError);
}

TEST(ScoreTensor, RoundTrip) {
  const FusedScoreMap scores(1, 2, 2, {0.25, 1e-300, -3.5, 7.0}, Decision::kMaximize);
  const Bytes file = encode_scores(scores);
  EXPECT_EQ(std::string(file.begin() + 10, file.begin() + 26), "{'descr': '<f8',");
  const ScoreTensor back = decode_scores(file);
  EXPECT_EQ(back.values, (std::vector<double>{0.25, 1e-300, -3.5, 7.0}));
  EXPECT_EQ(back.height, 1u);
  EXPECT_THROW(decode_scores(encode_probmap(ninths())), FormatError);
}

TEST(Pgm, EncodeIsExact) {
  const LabelMask mask(2, 3, {0, 1, 2, 3, 4, 0});
  const Bytes expected = bytes_of(std::string("P5\n3 2\n255\n") + std::string("\0\1\2\3\4\0", 6));
  EXPECT_EQ(encode_pgm(mask), expected);
}

TEST(Pgm, DirectDecodeExample) {
  const Bytes file = bytes_of(std::string("P5\n2 2\n255\n") + std::string("\0\0\1\1", 4));
  EXPECT_EQ(decode_pgm(file), LabelMask(2, 2, {0, 0, 1, 1}));
}

TEST(Pgm, CommentsAndWhitespaceAccepted) {
  const Bytes file = bytes_of(std::string("P5 # mask\n# size\n2   1\t255\n") + std::string("\1\0", 2));
  EXPECT_EQ(decode_pgm(file), LabelMask(1, 2, {1, 0}));
}

TEST(Pgm, Rejections) {
  EXPECT_THROW(decode_pgm(bytes_of("P2\n2 2\n255\n0 0 1 1\n")), FormatError);
  EXPECT_THROW(decode_pgm(bytes_of(std::string("P5\n2 2\n65535\n") + std::string(8, '\0'))),
               FormatError);
  EXPECT_THROW(decode_pgm(bytes_of(std::string("P5\n2 2\n255\n") + std::string(3, '\0'))),
               ParseError);
  EXPECT_THROW(decode_pgm(bytes_of("GIF89a")), ParseError);
  const Bytes three = bytes_of(std::string("P5\n2 1\n255\n") + std::string("\0\3", 2));
  EXPECT_THROW(decode_pgm(three, 3), ValidationError);
  EXPECT_NO_THROW(decode_pgm(three, 4));
}

TEST(Pgm, RoundTripRandomMasks) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> label(0, 255);
  TempDir dir("pgm");
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::uint8_t> v(13 * 17);
    for (auto& x : v) x = static_cast<std::uint8_t>(label(rng));
    const LabelMask mask(13, 17, v);
    write_mask(mask, dir.path() / "m.pgm");
    EXPECT_EQ(read_mask(dir.path() / "m.pgm"), mask);
    EXPECT_EQ(encode_pgm(read_mask(dir.path() / "m.pgm")), read_file(dir.path() / "m.pgm"));
  }
}

TEST(Ppm, RoundTrip) {
  RgbImage image{2, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
  const Bytes file = encode_ppm(image);
  EXPECT_EQ(std::string(file.begin(), file.begin() + 11), "P6\n2 2\n255\n");
  EXPECT_EQ(decode_ppm(file), image);
  EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n1 2 3\n")), FormatError);
}

TEST(Render, BinaryPaletteGivesBlackAndWhite) {
  const ClassSet classes({"background", "informative"},
                         std::vector<Rgb>{{0, 0, 0}, {255, 255, 255}});
  const RgbImage image = render_mask(LabelMask(1, 2, {0, 1}), classes);
  EXPECT_EQ(image.at(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(image.at(0, 1), (Rgb{255, 255, 255}));
  // White and black ground truth maps to informative (1) and background (0).
  EXPECT_EQ(mask_from_colors(image, classes), LabelMask(1, 2, {0, 1}));
}

TEST(Render, FiveClassRoundTrip) {
  const ClassSet classes = load_palette(fs::path(CYTOFUSE_TEST_DATA) / "../../data/palettes/herlev.txt");
  ASSERT_EQ(classes.num_classes(), 5u);
  const LabelMask mask(1, 5, {0, 1, 2, 3, 4});
  const RgbImage image = render_mask(mask, classes);
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = a + 1; b < 5; ++b) EXPECT_NE(image.at(0, a), image.at(0, b));
  }
  EXPECT_EQ(mask_from_colors(image, classes), mask);
}

TEST(Render, Errors) {
  EXPECT_THROW(render_mask(LabelMask(1, 1), ClassSet::numbered(2)), ValidationError);
  const ClassSet classes({"a", "b"}, std::vector<Rgb>{{0, 0, 0}, {9, 9, 9}});
  EXPECT_THROW(render_mask(LabelMask(1, 1, {2}), classes), ValidationError);
  EXPECT_THROW(mask_from_colors(RgbImage{1, 1, {1, 2, 3}}, classes), ValidationError);
}

TEST(Palette, ParsesNamesColorsAndComments) {
  const ClassSet classes = parse_palette("# comment\nbackground 0 0 0\n\ninformative 255 255 255 # white\n");
  EXPECT_EQ(classes.names(), (std::vector<std::string>{"background", "informative"}));
  EXPECT_EQ((*classes.palette())[1], (Rgb{255, 255, 255}));
  EXPECT_THROW(parse_palette("a 0 0 0\nb 0 0 256\n"), ValidationError);
  EXPECT_THROW(parse_palette("a 0 0\nb 1 1 1\n"), ValidationError);
  const ClassSet jucyt = load_palette(fs::path(CYTOFUSE_TEST_DATA) / "../../data/palettes/jucyt_v1.txt");
  EXPECT_EQ(jucyt.num_classes(), 2u);
}

// Writes a 2-model x 3-image dataset and returns the manifest path.
fs::path write_small_dataset(const fs::path& root) {
  std::mt19937_64 rng(10);
  Manifest m;
  m.classes = ClassSet({"background", "informative"});
  m.models = {{"U", "probs/U"}, {"S", "probs/S"}};
  m.ground_truth_dir = "gt";
  m.images = {"a", "b", "c"};
  m.root = root;
  for (const auto& id : m.images) {
    for (std::size_t j = 0; j < 2; ++j) {
      fs::create_directories(m.probmap_path(j, id).parent_path());
      write_probmap(testing::random_probmap(rng, 3, 3, 2), m.probmap_path(j, id));
    }
    fs::create_directories(m.ground_truth_path(id).parent_path());
    write_mask(LabelMask(3, 3), m.ground_truth_path(id));
  }
  write_manifest(m, root / "manifest.json");
  return root / "manifest.json";
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

TEST(Manifest, LoadsCompleteDataset) {
  TempDir dir("manifest");
  const Manifest m = load_manifest(write_small_dataset(dir.path()));
  ASSERT_EQ(m.models.size(), 2u);
  EXPECT_EQ(m.models[0].name, "U");
  EXPECT_EQ(m.models[1].name, "S");
  EXPECT_EQ(m.images, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(m.probmap_path(1, "b"), dir.path() / "probs/S/b.npy");
}

TEST(Manifest, RoundTripIsByteIdentical) {
  TempDir dir("manifest_rt");
  const fs::path path = write_small_dataset(dir.path());
  const Bytes original = read_file(path);
  write_manifest(load_manifest(path), dir.path() / "again.json");
  EXPECT_EQ(read_file(dir.path() / "again.json"), original);
}

TEST(Manifest, MissingTensorIsNamed) {
  TempDir dir("manifest_missing");
  const fs::path path = write_small_dataset(dir.path());
  fs::remove(dir.path() / "probs/S/b.npy");
  fs::remove(dir.path() / "gt/c.pgm");
  try {
    load_manifest(path);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("probs/S/b.npy"), std::string::npos) << msg;
    EXPECT_NE(msg.find("gt/c.pgm"), std::string::npos) << msg;
  }
}

TEST(Manifest, SchemaViolations) {
  const std::string head = R"({"version": "cyto-fuse/1",
    "classes": {"num_classes": 2, "names": ["a", "b"]},
    "ground_truth_dir": "gt", "images": ["x"], )";
  EXPECT_THROW(parse_manifest(head + R"("models": [{"name": "U", "dir": "u"}, {"name": "U", "dir": "v"}]})", "."),
               ValidationError);
  EXPECT_THROW(parse_manifest(head + R"("models": [{"name": "U", "dir": "u"}], "extra": 1})", "."),
               ValidationError);
  EXPECT_THROW(parse_manifest(head + R"("models": [{"name": "U+S", "dir": "u"}]})", "."),
               ValidationError);
  EXPECT_THROW(parse_manifest(head + R"("models": []})", "."), ValidationError);
  EXPECT_THROW(parse_manifest(head + R"("models": [{"name": "U", "dir": "u"}], "train_images": ["x"]})", "."),
               ValidationError);
  EXPECT_THROW(parse_manifest(R"({"version": "cyto-fuse/2"})", "."), ValidationError);
  EXPECT_THROW(parse_manifest("{\"version\": ", "."), ParseError);
  EXPECT_NO_THROW(parse_manifest(head + R"("models": [{"name": "U", "dir": "u"}]})", "."));
}

TEST(Manifest, UnreadableFileIsIoError) {
  EXPECT_THROW(load_manifest("/nonexistent/manifest.json"), IoError);
  TempDir dir("manifest_bad");
  write_text(dir.path() / "m.json", "not json");
  EXPECT_THROW(load_manifest(dir.path() / "m.json"), ParseError);
}

}  // namespace
}  // namespace cytofuse
