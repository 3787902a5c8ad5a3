// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "adds/errors.hpp"

namespace adds::pyramid {

/// Square image, interleaved channels (row-major, HWC).
struct Image {
    std::size_t side = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t s, std::size_t c, float fill = 0.0f) : side(s), channels(c), pixels(s * s * c, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * side + x) * channels + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * side + x) * channels + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Separable bilinear resampling with half-pixel centre alignment and edge
/// clamping. Same-size resizes return an exact copy.
Image resize_bilinear(const Image& img, std::size_t new_side);

/// Copy of the `side` x `side` window with top-left corner (x, y).
Image crop(const Image& img, std::size_t x, std::size_t y, std::size_t side);

}  // namespace adds::pyramid
