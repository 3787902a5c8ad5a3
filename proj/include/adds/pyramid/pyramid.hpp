// SPDX-License-Identifier: Apache-2.0
//
// Multi-level tiling for running a fixed-resolution encoder on larger square
// images. Level i resizes the image to min(S * 2^i, target) and covers it
// with an n_i x n_i grid of S x S tiles; the bottom level is always at the
// native target resolution.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adds/encoders/encoders.hpp"
#include "adds/numerics/matrix.hpp"
#include "adds/pyramid/image.hpp"

namespace adds::pyramid {

struct TileRect {
    std::size_t level = 0;
    std::size_t x = 0, y = 0;
    std::size_t side = 0;
    friend bool operator==(const TileRect&, const TileRect&) = default;
};

struct LevelSpec {
    std::size_t index = 0;
    std::size_t resized_side = 0;
    std::size_t grid = 0;
    std::vector<TileRect> tiles;  // row-major: y outer, x inner
    bool cls_only = false;
    /// Stride between consecutive tile offsets (S when the grid fits exactly).
    std::size_t stride = 0;
    /// Overlap between adjacent tiles away from the far edge.
    std::size_t overlap_px = 0;
    /// Offsets along one axis; identical for x and y.
    std::vector<std::size_t> offsets;
};

struct PyramidPlan {
    std::size_t base_size = 0;
    std::size_t target_side = 0;
    double scale = 1.0;
    std::vector<LevelSpec> levels;
    std::vector<std::size_t> selected;  // ascending level indices

    std::size_t bottom() const noexcept { return levels.size() - 1; }
    std::size_t selected_tile_count() const;
    /// Rows produced by encode_and_stack for an encoder emitting `tokens_per_tile`.
    std::size_t token_count(std::size_t tokens_per_tile) const;
};

/// Offsets of `grid` windows of side `tile` across `side` pixels: stride
/// ceil((side - tile) / (grid - 1)), last window pinned to the far edge.
std::vector<std::size_t> tile_offsets(std::size_t side, std::size_t tile, std::size_t grid);

PyramidPlan build_plan(std::size_t base_size, std::size_t target_side,
                       std::optional<std::vector<std::size_t>> selected_levels = std::nullopt,
                       bool cls_only_non_bottom = false);

/// Tiles of every selected level in stacking order.
std::vector<Image> extract_tiles(const Image& image, const PyramidPlan& plan);

/// Encodes each tile and stacks the kept token rows in tile order. `threads`
/// > 1 encodes tiles concurrently; the result is bit-identical either way.
num::MatrixD encode_and_stack(std::span<const Image> tiles, const PyramidPlan& plan,
                              const enc::FrozenImageEncoder& encoder, unsigned threads = 1);

struct CostReport {
    std::vector<std::size_t> tiles_per_level;  // selected levels only
    std::size_t pyramid_units = 0;
    std::size_t naive_units = 0;
    double ratio = 1.0;
};

CostReport cost_report(const PyramidPlan& plan);

/// "[0,1,2]"-style list parsing for level selections.
std::vector<std::size_t> parse_levels(const std::string& text);

}  // namespace adds::pyramid
