#include "cytofuse/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include <fmt/core.h>

#include "cytofuse/error.hpp"
#include "cytofuse/parallel.hpp"
#include "cytofuse/synth.hpp"

namespace cytofuse {

std::vector<ModelStack> make_bench_stacks(const BenchWorkload& w, unsigned threads) {
  if (w.images == 0 || w.models == 0) throw ValidationError("benchmark needs images and models");
  const std::size_t cells = w.height * w.width * w.num_classes;
  std::vector<std::vector<NamedProbMap>> maps(w.images, std::vector<NamedProbMap>(w.models));
  parallel_for(w.images * w.models, threads, [&](std::size_t task) {
    const std::size_t i = task / w.models;
    const std::size_t j = task % w.models;
    std::vector<float> values(cells);
    for (std::size_t px = 0; px < w.height * w.width; ++px) {
      double weights[kMaxClasses];
      double total = 0.0;
      for (std::size_t k = 0; k < w.num_classes; ++k) {
        const double u = random_uniform(w.seed, task, px * w.num_classes + k);
        weights[k] = -std::log1p(-u);
        total += weights[k];
      }
      for (std::size_t k = 0; k < w.num_classes; ++k) {
        values[px * w.num_classes + k] = static_cast<float>(weights[k] / total);
      }
    }
    maps[i][j] = {fmt::format("m{}", j),
                  std::make_shared<const ProbMap>(w.height, w.width, w.num_classes, std::move(values))};
  });
  std::vector<ModelStack> stacks;
  stacks.reserve(w.images);
  for (auto& m : maps) stacks.push_back(stack_models(std::move(m)));
  return stacks;
}

BenchTiming time_fusion(const std::vector<ModelStack>& stacks, FusionRule rule, unsigned threads,
                        std::size_t repeats) {
  if (stacks.empty() || repeats == 0) throw ValidationError("nothing to time");
  std::vector<double> samples;
  std::size_t checksum = 0;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::vector<std::size_t> first_labels(stacks.size());
    const auto start = std::chrono::steady_clock::now();
    parallel_for(stacks.size(), threads, [&](std::size_t i) {
      first_labels[i] = fuse(rule, stacks[i]).labels().front();
    });
    const auto stop = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double>(stop - start).count());
    for (std::size_t v : first_labels) checksum += v;
  }
  std::sort(samples.begin(), samples.end());
  std::size_t pixels = 0;
  for (const auto& s : stacks) pixels += s.pixel_count();
  BenchTiming t;
  t.rule = rule;
  t.threads = resolve_threads(threads);
  t.repeats = repeats;
  t.best_seconds = samples.front();
  t.median_seconds = samples[samples.size() / 2];
  t.megapixels_per_second = static_cast<double>(pixels) / 1e6 / t.best_seconds;
  // Keeps the fused results observable.
  if (checksum == static_cast<std::size_t>(-1)) t.repeats = 0;
  return t;
}

}  // namespace cytofuse
