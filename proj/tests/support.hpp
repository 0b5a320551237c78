#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cytofuse/probmap.hpp"

namespace cytofuse::testing {

// Random point on the probability simplex (normalized exponential draws).
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t c) {
  std::exponential_distribution<double> draw(1.0);
  std::vector<double> p(c);
  double total = 0.0;
  for (auto& v : p) total += (v = draw(rng));
  for (auto& v : p) v /= total;
  return p;
}

inline ProbMap random_probmap(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
  std::vector<float> data;
  data.reserve(h * w * c);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (double v : random_simplex(rng, c)) data.push_back(static_cast<float>(v));
  }
  return ProbMap(h, w, c, std::move(data));
}

// One-pixel-per-row map built from explicit probability rows.
inline ProbMap map_from_rows(const std::vector<std::vector<float>>& rows) {
  std::vector<float> data;
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return ProbMap(1, rows.size(), rows.front().size(), std::move(data));
}

inline NamedProbMap named(std::string name, ProbMap map) {
  return {std::move(name), std::make_shared<const ProbMap>(std::move(map))};
}

inline ModelStack stack_of(std::vector<ProbMap> maps) {
  std::vector<NamedProbMap> entries;
  for (std::size_t j = 0; j < maps.size(); ++j) {
    entries.push_back(named("m" + std::to_string(j), std::move(maps[j])));
  }
  return stack_models(std::move(entries));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cytofuse_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cytofuse::testing
