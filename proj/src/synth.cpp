#include "cytofuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/core.h>

#include "cytofuse/error.hpp"
#include "cytofuse/parallel.hpp"

namespace cytofuse {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Stream ids used by generate_scene.
constexpr std::uint64_t kBlobCountStream = 0;
constexpr std::uint64_t kBlobStreamBase = 1;
constexpr std::uint64_t kPixelStreamBase = 1ULL << 32;
constexpr std::uint64_t kImageSeedStream = 0xd47a5eedULL;

constexpr double kCubeLow = 70.0;
constexpr double kCubeHigh = 190.0;
constexpr double kDefaultSpread = 40.0;

// Class 0 is a reddish background, 1 a dark blue, 2 a light blue; the rest
// fill the remaining cube corners.
constexpr std::array<std::array<bool, 3>, 8> kCubeCorners = {{
    {true, false, false},
    {false, false, true},
    {false, true, true},
    {true, true, false},
    {false, true, false},
    {true, false, true},
    {true, true, true},
    {false, false, false},
}};

const std::array<VariantConfig, 7> kVariants = {{
    {"RGB", {true, true, true}, 1.0, 0},
    {"RG", {true, true, false}, 2.0, 1},
    {"B", {false, false, true}, 4.0, 2},
    {"GB", {false, true, true}, 2.0, 1},
    {"R", {true, false, false}, 4.0, 2},
    {"RB", {true, false, true}, 2.0, 1},
    {"G", {false, true, false}, 4.0, 2},
}};

std::string image_id(std::size_t index) { return fmt::format("img_{:03d}", index); }

}  // namespace

std::uint64_t random_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::uint64_t x = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  x = mix64(x ^ (stream * 0x9e3779b97f4a7c15ULL));
  return mix64(x + counter * 0xd1b54a32d192ed03ULL);
}

double random_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return static_cast<double>(random_bits(seed, stream, counter) >> 11) * 0x1.0p-53;
}

double random_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  const double u1 = 1.0 - random_uniform(seed, stream, 2 * counter);  // (0, 1]
  const double u2 = random_uniform(seed, stream, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SceneSpec default_scene_spec(std::uint64_t seed, std::size_t height, std::size_t width,
                             std::size_t num_classes) {
  if (num_classes < 2 || num_classes > kCubeCorners.size()) {
    throw ValidationError(fmt::format("default scenes support 2 to {} classes, got {}",
                                      kCubeCorners.size(), num_classes));
  }
  SceneSpec spec;
  spec.seed = seed;
  spec.height = height;
  spec.width = width;
  spec.num_classes = num_classes;
  spec.min_blobs = 4;
  spec.max_blobs = 10;
  for (std::size_t k = 0; k < num_classes; ++k) {
    ColorMean mean{};
    for (std::size_t ch = 0; ch < 3; ++ch) mean[ch] = kCubeCorners[k][ch] ? kCubeHigh : kCubeLow;
    spec.class_color_means.push_back(mean);
  }
  spec.class_color_stddev = {kDefaultSpread, kDefaultSpread, kDefaultSpread};
  return spec;
}

void validate_scene_spec(const SceneSpec& spec) {
  if (spec.height == 0 || spec.width == 0) {
    throw ValidationError(fmt::format("scene has zero area ({}x{})", spec.height, spec.width));
  }
  if (spec.num_classes < 2 || spec.num_classes > kMaxClasses) {
    throw ValidationError(fmt::format("scene class count must be in [2, {}]", kMaxClasses));
  }
  if (spec.min_blobs > spec.max_blobs) {
    throw ValidationError(fmt::format("blob count range [{}, {}] is empty", spec.min_blobs,
                                      spec.max_blobs));
  }
  if (!(spec.min_axis_fraction > 0.0) || spec.min_axis_fraction > spec.max_axis_fraction) {
    throw ValidationError("blob axis fractions must satisfy 0 < min <= max");
  }
  if (spec.class_color_means.size() != spec.num_classes) {
    throw ValidationError(fmt::format("scene has {} color means for {} classes",
                                      spec.class_color_means.size(), spec.num_classes));
  }
  for (double s : spec.class_color_stddev) {
    if (!(s >= 0.0)) throw ValidationError("color spread must be non-negative");
  }
  for (std::size_t a = 0; a < spec.num_classes; ++a) {
    for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
      bool separated = false;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double gap = std::abs(spec.class_color_means[a][ch] - spec.class_color_means[b][ch]);
        separated = separated || gap >= 3.0 * spec.class_color_stddev[ch];
      }
      if (!separated) {
        throw ValidationError(fmt::format(
            "class means {} and {} are closer than 3 stddev in every channel", a, b));
      }
    }
  }
}

Scene generate_scene(const SceneSpec& spec) {
  validate_scene_spec(spec);
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  std::vector<std::uint8_t> labels(h * w, 0);

  const std::size_t span = spec.max_blobs - spec.min_blobs + 1;
  const std::size_t blobs =
      spec.min_blobs +
      std::min(span - 1, static_cast<std::size_t>(
                             random_uniform(spec.seed, kBlobCountStream, 0) * static_cast<double>(span)));
  const double scale = static_cast<double>(std::min(h, w));
  for (std::size_t b = 0; b < blobs; ++b) {
    const std::uint64_t stream = kBlobStreamBase + b;
    const auto draw = [&](std::uint64_t counter) { return random_uniform(spec.seed, stream, counter); };
    const std::size_t cls =
        1 + std::min(spec.num_classes - 2,
                     static_cast<std::size_t>(draw(0) * static_cast<double>(spec.num_classes - 1)));
    const double cy = draw(1) * static_cast<double>(h);
    const double cx = draw(2) * static_cast<double>(w);
    const double axis_range = spec.max_axis_fraction - spec.min_axis_fraction;
    const double ra = (spec.min_axis_fraction + draw(3) * axis_range) * scale;
    const double rb = (spec.min_axis_fraction + draw(4) * axis_range) * scale;
    const double angle = draw(5) * std::numbers::pi;
    const double cos_t = std::cos(angle);
    const double sin_t = std::sin(angle);
    const double reach = std::max(ra, rb);
    const auto row_lo = static_cast<std::ptrdiff_t>(std::floor(cy - reach));
    const auto row_hi = static_cast<std::ptrdiff_t>(std::ceil(cy + reach));
    const auto col_lo = static_cast<std::ptrdiff_t>(std::floor(cx - reach));
    const auto col_hi = static_cast<std::ptrdiff_t>(std::ceil(cx + reach));
    for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, row_lo);
         r <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1, row_hi); ++r) {
      for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, col_lo);
           c <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, col_hi); ++c) {
        const double dy = static_cast<double>(r) + 0.5 - cy;
        const double dx = static_cast<double>(c) + 0.5 - cx;
        const double u = (dx * cos_t + dy * sin_t) / ra;
        const double v = (-dx * sin_t + dy * cos_t) / rb;
        if (u * u + v * v <= 1.0) labels[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(cls);
      }
    }
  }

  RgbImage image;
  image.height = h;
  image.width = w;
  image.data.resize(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i) {
    const ColorMean& mean = spec.class_color_means[labels[i]];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double value =
          mean[ch] + spec.class_color_stddev[ch] * random_normal(spec.seed, kPixelStreamBase + ch, i);
      image.data[i * 3 + ch] = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return Scene{std::move(image), LabelMask(h, w, std::move(labels))};
}

std::vector<double> context_features(const RgbImage& image, std::size_t radius) {
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  std::vector<double> out(image.data.begin(), image.data.end());
  if (radius == 0) return out;
  // Summed-area table with a zero first row and column.
  std::vector<double> table((h + 1) * (w + 1) * 3, 0.0);
  const auto at = [&](std::size_t r, std::size_t c, std::size_t ch) -> double& {
    return table[(r * (w + 1) + c) * 3 + ch];
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        at(r + 1, c + 1, ch) = image.data[(r * w + c) * 3 + ch] + at(r, c + 1, ch) +
                               at(r + 1, c, ch) - at(r, c, ch);
      }
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t r0 = r >= radius ? r - radius : 0;
    const std::size_t r1 = std::min(h, r + radius + 1);
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t c0 = c >= radius ? c - radius : 0;
      const std::size_t c1 = std::min(w, c + radius + 1);
      const double area = static_cast<double>((r1 - r0) * (c1 - c0));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out[(r * w + c) * 3 + ch] =
            (at(r1, c1, ch) - at(r0, c1, ch) - at(r1, c0, ch) + at(r0, c0, ch)) / area;
      }
    }
  }
  return out;
}

PixelGaussianModel fit_pixel_model(std::span<const Scene> training, std::size_t num_classes,
                                   std::array<bool, 3> channels, double epsilon, std::string name,
                                   std::size_t context_radius) {
  if (!(epsilon > 0.0)) throw ValidationError("variance floor epsilon must be positive");
  if (num_classes < 2 || num_classes > kMaxClasses) {
    throw ValidationError(fmt::format("class count must be in [2, {}]", kMaxClasses));
  }
  std::vector<std::uint64_t> counts(num_classes, 0);
  std::vector<ColorMean> sums(num_classes, ColorMean{});
  std::vector<ColorMean> squares(num_classes, ColorMean{});
  for (const Scene& scene : training) {
    const auto labels = scene.mask.labels();
    if (scene.image.height != scene.mask.height() || scene.image.width != scene.mask.width()) {
      throw ValidationError("training image and mask sizes differ");
    }
    const auto features = context_features(scene.image, context_radius);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::size_t k = labels[i];
      if (k >= num_classes) {
        throw ValidationError(fmt::format("training label {} is >= {} classes", k, num_classes));
      }
      ++counts[k];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double x = features[i * 3 + ch];
        sums[k][ch] += x;
        squares[k][ch] += x * x;
      }
    }
  }

  PixelGaussianModel model;
  model.name = std::move(name);
  model.channels = channels;
  model.epsilon = epsilon;
  model.context_radius = context_radius;
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) {
      throw ValidationError(fmt::format("class {} has no training pixels", k));
    }
    const double n = static_cast<double>(counts[k]);
    ColorMean mean{};
    ColorMean var{};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      mean[ch] = sums[k][ch] / n;
      var[ch] = std::max(epsilon, squares[k][ch] / n - mean[ch] * mean[ch]);
    }
    model.means.push_back(mean);
    model.variances.push_back(var);
    model.priors.push_back(n / static_cast<double>(total));
  }
  return model;
}

ProbMap predict_probmap(const PixelGaussianModel& model, const RgbImage& image) {
  const std::size_t c = model.num_classes();
  // Per-class constant: log prior - 0.5 * sum log(2 pi var).
  std::vector<double> offsets(c);
  for (std::size_t k = 0; k < c; ++k) {
    double offset = std::log(model.priors[k]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      if (model.channels[ch]) offset -= 0.5 * std::log(2.0 * std::numbers::pi * model.variances[k][ch]);
    }
    offsets[k] = offset;
  }

  const std::size_t pixels = image.height * image.width;
  const auto features = context_features(image, model.context_radius);
  std::vector<float> probs(pixels * c);
  std::vector<double> logits(c);
  for (std::size_t i = 0; i < pixels; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      double score = offsets[k];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        if (!model.channels[ch]) continue;
        const double d = features[i * 3 + ch] - model.means[k][ch];
        score -= d * d / (2.0 * model.variances[k][ch]);
      }
      logits[k] = score;
    }
    const auto p = softmax(logits);
    for (std::size_t k = 0; k < c; ++k) probs[i * c + k] = static_cast<float>(p[k]);
  }
  return ProbMap(image.height, image.width, c, std::move(probs));
}

std::span<const VariantConfig> variant_catalogue() { return kVariants; }

std::vector<PixelGaussianModel> make_model_variants(std::span<const Scene> training,
                                                    std::size_t num_classes, std::size_t k) {
  if (k == 0 || k > kVariants.size()) {
    throw ValidationError(fmt::format("variant count must be in [1, {}], got {}", kVariants.size(), k));
  }
  std::vector<PixelGaussianModel> models;
  for (std::size_t v = 0; v < k; ++v) {
    const auto& cfg = kVariants[v];
    models.push_back(fit_pixel_model(training, num_classes, cfg.channels, cfg.epsilon, cfg.name,
                                     cfg.context_radius));
  }
  return models;
}

std::size_t train_count(std::size_t images) {
  if (images < 2) return 0;
  return std::clamp<std::size_t>(images * 4 / 5, 1, images - 1);
}

Manifest synthesize_dataset(const SynthConfig& config, const std::filesystem::path& out_dir,
                            unsigned threads) {
  if (config.images < 2) {
    throw ValidationError(fmt::format("need at least 2 images for a train/test split, got {}",
                                      config.images));
  }
  if (config.variants == 0) throw ValidationError("need at least one model variant");
  // Probe the scene geometry before any work.
  validate_scene_spec(default_scene_spec(config.seed, config.height, config.width, config.num_classes));

  std::vector<Scene> scenes(config.images);
  parallel_for(config.images, threads, [&](std::size_t i) {
    scenes[i] = generate_scene(default_scene_spec(random_bits(config.seed, kImageSeedStream, i),
                                                  config.height, config.width,
                                                  config.num_classes));
  });
  const std::size_t n_train = train_count(config.images);
  const std::span<const Scene> training(scenes.data(), n_train);
  const auto models = make_model_variants(training, config.num_classes, config.variants);

  Manifest manifest;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    names.push_back(k == 0 ? "background" : fmt::format("class_{}", k));
  }
  std::vector<Rgb> palette;
  const SceneSpec reference = default_scene_spec(0, 1, 1, config.num_classes);
  for (const auto& mean : reference.class_color_means) {
    palette.push_back(Rgb{static_cast<std::uint8_t>(mean[0]), static_cast<std::uint8_t>(mean[1]),
                          static_cast<std::uint8_t>(mean[2])});
  }
  manifest.classes = ClassSet(std::move(names), std::move(palette));
  for (const auto& model : models) manifest.models.push_back({model.name, "probs/" + model.name});
  manifest.ground_truth_dir = "gt";
  manifest.image_dir = "images";
  for (std::size_t i = 0; i < config.images; ++i) {
    (i < n_train ? manifest.train_images : manifest.images).push_back(image_id(i));
  }
  manifest.root = out_dir;

  parallel_for(config.images, threads, [&](std::size_t i) {
    const std::string id = image_id(i);
    write_ppm(scenes[i].image, *manifest.image_path(id));
    write_mask(scenes[i].mask, manifest.ground_truth_path(id));
    if (i < n_train) return;
    for (std::size_t j = 0; j < models.size(); ++j) {
      write_probmap(predict_probmap(models[j], scenes[i].image), manifest.probmap_path(j, id));
    }
  });
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace cytofuse
