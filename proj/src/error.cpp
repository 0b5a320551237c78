#include "cytofuse/error.hpp"

#include <fmt/core.h>

namespace cytofuse {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : Error(fmt::format("{} (at byte offset {})", what, offset)), offset_(offset) {}

}  // namespace cytofuse
