#include "cityscale/error.hpp"

#include <utility>

namespace cityscale {

ParseError::ParseError(std::size_t row, std::string reason)
    : Error("row " + std::to_string(row) + ": " + reason), row_(row), reason_(std::move(reason)) {}

}  // namespace cityscale
