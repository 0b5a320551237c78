#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cytofuse/dataset_io.hpp"
#include "cytofuse/image.hpp"
#include "cytofuse/probmap.hpp"

namespace cytofuse {

// Counter-based generator: every draw is a pure function of (seed, stream,
// counter), so results do not depend on call order or platform.
std::uint64_t random_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);
// Uniform in [0, 1) with 53 random bits.
double random_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);
// Standard normal (Box-Muller over counters 2*counter and 2*counter + 1).
double random_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

using ColorMean = std::array<double, 3>;

// Synthetic scene: filled ellipses ("cells") of classes 1..C-1 over a class-0
// background. Later blobs occlude earlier ones.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::size_t min_blobs = 0;
  std::size_t max_blobs = 0;
  // Blob semi-axes as fractions of min(height, width).
  double min_axis_fraction = 0.08;
  double max_axis_fraction = 0.22;
  std::vector<ColorMean> class_color_means;
  ColorMean class_color_stddev{};
};

// Default scene for C classes (2 <= C <= 8): class means sit on distinct
// corners of the {70, 190}^3 color cube with a per-channel spread of 40, so
// any two classes differ by 3 standard deviations in at least one channel.
SceneSpec default_scene_spec(std::uint64_t seed, std::size_t height, std::size_t width,
                             std::size_t num_classes);

// ValidationError for zero area, C outside [2, 256], a bad blob range, a
// mean count other than C, or two class means closer than 3 stddev in every
// channel.
void validate_scene_spec(const SceneSpec& spec);

struct Scene {
  RgbImage image;
  LabelMask mask;
};

Scene generate_scene(const SceneSpec& spec);

// Per-pixel features: each channel averaged over the (2r+1) x (2r+1) window
// centred on the pixel, clipped at the image border. Radius 0 gives the raw
// values. Layout matches RgbImage::data.
std::vector<double> context_features(const RgbImage& image, std::size_t radius);

// Per-class diagonal Gaussian over a subset of RGB channels, with class
// priors, applied to context features of a given radius. Base-learner
// stand-in for a trained segmentation network; the radius plays the part of
// the network's receptive field.
struct PixelGaussianModel {
  std::string name;
  std::array<bool, 3> channels{true, true, true};
  double epsilon = 1.0;
  std::size_t context_radius = 0;
  std::vector<ColorMean> means;
  std::vector<ColorMean> variances;  // >= epsilon on used channels
  std::vector<double> priors;        // class pixel frequencies, sums to 1

  std::size_t num_classes() const { return priors.size(); }
  friend bool operator==(const PixelGaussianModel&, const PixelGaussianModel&) = default;
};

// Fits means, variances (floored at epsilon) and priors from a training
// split. ValidationError names any class with no training pixels.
PixelGaussianModel fit_pixel_model(std::span<const Scene> training, std::size_t num_classes,
                                   std::array<bool, 3> channels, double epsilon,
                                   std::string name = "RGB", std::size_t context_radius = 0);

// Softmax over per-class log prior + Gaussian log density.
ProbMap predict_probmap(const PixelGaussianModel& model, const RgbImage& image);

struct VariantConfig {
  std::string name;
  std::array<bool, 3> channels;
  double epsilon;
  std::size_t context_radius;
};

// Fixed catalogue, used in order: RGB, RG, B, GB, R, RB, G. The first entry
// is the pixel-level full-feature model. Two-channel entries use a context
// radius of 1 and single-channel entries a radius of 2. The second and third
// entries see disjoint channels.
std::span<const VariantConfig> variant_catalogue();

// First k catalogue entries fitted on the split. ValidationError when k is 0
// or exceeds the catalogue.
std::vector<PixelGaussianModel> make_model_variants(std::span<const Scene> training,
                                                    std::size_t num_classes, std::size_t k);

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t images = 20;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t num_classes = 5;
  std::size_t variants = 3;
};

// Train ids come first; 4/5 of the images (at least one, leaving at least
// one for testing) go to training.
std::size_t train_count(std::size_t images);

// Writes images/<id>.ppm, gt/<id>.pgm, probs/<variant>/<id>.npy (test ids
// only) and manifest.json under `out_dir`. Returns the manifest.
Manifest synthesize_dataset(const SynthConfig& config, const std::filesystem::path& out_dir,
                            unsigned threads = 1);

}  // namespace cytofuse
