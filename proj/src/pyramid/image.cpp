// SPDX-License-Identifier: Apache-2.0

#include "adds/pyramid/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace adds::pyramid {

namespace {

struct Tap {
    std::size_t lo, hi;
    double w;  // weight of hi
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(src));
        const std::size_t hi = std::min(lo + 1, in - 1);
        t[i] = {lo, hi, src - static_cast<double>(lo)};
    }
    return t;
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t new_side) {
    if (img.side == 0 || new_side == 0) throw ShapeError("resize_bilinear: sides must be >= 1");
    if (new_side == img.side) return img;
    const std::size_t c = img.channels;
    const auto t = taps(img.side, new_side);

    // Horizontal pass into a [old_side x new_side] buffer, then vertical.
    std::vector<double> tmp(img.side * new_side * c);
    for (std::size_t y = 0; y < img.side; ++y)
        for (std::size_t x = 0; x < new_side; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double a = img.at(y, t[x].lo, ch), b = img.at(y, t[x].hi, ch);
                tmp[(y * new_side + x) * c + ch] = a + t[x].w * (b - a);
            }
    Image out(new_side, c);
    for (std::size_t y = 0; y < new_side; ++y)
        for (std::size_t x = 0; x < new_side; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double a = tmp[(t[y].lo * new_side + x) * c + ch];
                const double b = tmp[(t[y].hi * new_side + x) * c + ch];
                out.at(y, x, ch) = static_cast<float>(a + t[y].w * (b - a));
            }
    return out;
}

Image crop(const Image& img, std::size_t x, std::size_t y, std::size_t side) {
    if (x + side > img.side || y + side > img.side)
        throw ShapeError("crop: window at (" + std::to_string(x) + "," + std::to_string(y) + ") of side " +
                         std::to_string(side) + " exceeds image side " + std::to_string(img.side));
    Image out(side, img.channels);
    const std::size_t row = side * img.channels;
    for (std::size_t r = 0; r < side; ++r)
        std::copy_n(img.pixels.begin() + static_cast<std::ptrdiff_t>(((y + r) * img.side + x) * img.channels), row,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(r * row));
    return out;
}

}  // namespace adds::pyramid
