#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cytofuse/fusion.hpp"
#include "cytofuse/probmap.hpp"

namespace cytofuse {

struct BenchWorkload {
  std::size_t images = 100;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t num_classes = 5;
  std::size_t models = 3;
  std::uint64_t seed = 7;
};

// Random simplex maps (normalized exponential draws), one stack per image.
std::vector<ModelStack> make_bench_stacks(const BenchWorkload& workload, unsigned threads);

struct BenchTiming {
  FusionRule rule{};
  unsigned threads = 1;
  std::size_t repeats = 0;
  double best_seconds = 0.0;
  double median_seconds = 0.0;
  double megapixels_per_second = 0.0;  // from the best run
};

// Fuses every stack `repeats` times; each repeat is one wall-clock sample.
BenchTiming time_fusion(const std::vector<ModelStack>& stacks, FusionRule rule, unsigned threads,
                        std::size_t repeats);

}  // namespace cytofuse
