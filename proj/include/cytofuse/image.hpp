#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cytofuse/probmap.hpp"

namespace cytofuse {

// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;  // height * width * 3

  Rgb at(std::size_t row, std::size_t col) const {
    const std::size_t i = (row * width + col) * 3;
    return Rgb{data[i], data[i + 1], data[i + 2]};
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

}  // namespace cytofuse
