// SPDX-License-Identifier: Apache-2.0

#include "adds/pyramid/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "adds/errors.hpp"

namespace adds::pyramid {

std::size_t PyramidPlan::selected_tile_count() const {
    std::size_t n = 0;
    for (std::size_t i : selected) n += levels[i].tiles.size();
    return n;
}

std::size_t PyramidPlan::token_count(std::size_t tokens_per_tile) const {
    std::size_t n = 0;
    for (std::size_t i : selected) n += levels[i].tiles.size() * (levels[i].cls_only ? 1 : tokens_per_tile);
    return n;
}

std::vector<std::size_t> tile_offsets(std::size_t side, std::size_t tile, std::size_t grid) {
    if (grid == 0 || tile > side) throw ConfigError("tile_offsets: need grid >= 1 and tile <= side");
    if (grid * tile < side) throw ConfigError("tile_offsets: grid too small to cover the side");
    if (grid == 1) return {0};
    const std::size_t span = side - tile;
    const std::size_t stride = (span + grid - 2) / (grid - 1);
    std::vector<std::size_t> out(grid);
    for (std::size_t j = 0; j + 1 < grid; ++j) out[j] = std::min(j * stride, span);
    out.back() = span;
    return out;
}

namespace {

// Smallest L with S * 2^L >= target.
std::size_t level_count_minus_one(std::size_t s, std::size_t target) {
    std::size_t l = 0;
    while ((s << l) < target) ++l;
    return l;
}

}  // namespace

PyramidPlan build_plan(std::size_t base_size, std::size_t target_side, std::optional<std::vector<std::size_t>> selected_levels,
                       bool cls_only_non_bottom) {
    if (base_size == 0) throw ConfigError("build_plan: base size must be positive");
    if (target_side < base_size)
        throw ConfigError("build_plan: target side " + std::to_string(target_side) + " is smaller than base size " +
                          std::to_string(base_size));
    PyramidPlan plan;
    plan.base_size = base_size;
    plan.target_side = target_side;
    plan.scale = static_cast<double>(target_side) / static_cast<double>(base_size);

    const std::size_t top = level_count_minus_one(base_size, target_side);
    for (std::size_t i = 0; i <= top; ++i) {
        LevelSpec lv;
        lv.index = i;
        const std::size_t full = base_size << i;
        lv.resized_side = std::min(full, target_side);
        lv.grid = full <= target_side ? (std::size_t{1} << i) : (target_side + base_size - 1) / base_size;
        lv.offsets = tile_offsets(lv.resized_side, base_size, lv.grid);
        lv.stride = lv.grid > 1 ? lv.offsets[1] - lv.offsets[0] : base_size;
        lv.overlap_px = base_size - std::min(base_size, lv.stride);
        for (std::size_t y : lv.offsets)
            for (std::size_t x : lv.offsets) lv.tiles.push_back({i, x, y, base_size});
        lv.cls_only = cls_only_non_bottom && i != top;
        plan.levels.push_back(std::move(lv));
    }

    if (selected_levels) {
        auto sel = *selected_levels;
        if (sel.empty()) throw ConfigError("build_plan: empty level selection");
        for (std::size_t i : sel)
            if (i > top)
                throw IndexError("build_plan: level " + std::to_string(i) + " does not exist (levels 0.." +
                                 std::to_string(top) + ")");
        std::sort(sel.begin(), sel.end());
        sel.erase(std::unique(sel.begin(), sel.end()), sel.end());
        plan.selected = std::move(sel);
    } else {
        for (std::size_t i = 0; i <= top; ++i) plan.selected.push_back(i);
    }
    // The finest level keeps full tokens: it is the only source of native detail.
    plan.levels[top].cls_only = false;
    return plan;
}

std::vector<Image> extract_tiles(const Image& image, const PyramidPlan& plan) {
    if (image.side != plan.target_side)
        throw ShapeError("extract_tiles: image side " + std::to_string(image.side) + " does not match plan target " +
                         std::to_string(plan.target_side));
    std::vector<Image> out;
    out.reserve(plan.selected_tile_count());
    for (std::size_t i : plan.selected) {
        const LevelSpec& lv = plan.levels[i];
        const Image resized = resize_bilinear(image, lv.resized_side);
        for (const TileRect& t : lv.tiles) out.push_back(crop(resized, t.x, t.y, t.side));
    }
    return out;
}

num::MatrixD encode_and_stack(std::span<const Image> tiles, const PyramidPlan& plan,
                              const enc::FrozenImageEncoder& encoder, unsigned threads) {
    if (tiles.size() != plan.selected_tile_count())
        throw ShapeError("encode_and_stack: got " + std::to_string(tiles.size()) + " tiles, plan selects " +
                         std::to_string(plan.selected_tile_count()));
    if (encoder.base_size() != plan.base_size)
        throw ShapeError("encode_and_stack: encoder base size " + std::to_string(encoder.base_size()) +
                         " does not match plan base size " + std::to_string(plan.base_size));

    // Per-tile row layout, fixed before any encoding happens.
    const std::size_t per_tile = encoder.tokens_per_tile(), e = encoder.embed_dim();
    std::vector<std::size_t> first_row, kept;
    std::size_t rows = 0;
    for (std::size_t i : plan.selected)
        for (std::size_t t = 0; t < plan.levels[i].tiles.size(); ++t) {
            first_row.push_back(rows);
            kept.push_back(plan.levels[i].cls_only ? 1 : per_tile);
            rows += kept.back();
        }

    num::MatrixD out(rows, e);
    auto work = [&](std::size_t t) {
        const num::MatrixD tok = encoder.encode(tiles[t]);
        std::copy_n(tok.data().begin(), kept[t] * e,
                    out.data().begin() + static_cast<std::ptrdiff_t>(first_row[t] * e));
    };
    const std::size_t n = tiles.size();
    if (threads <= 1 || n < 2) {
        for (std::size_t t = 0; t < n; ++t) work(t);
    } else {
        std::vector<std::thread> pool;
        const std::size_t nt = std::min<std::size_t>(threads, n);
        std::vector<std::exception_ptr> errors(nt);
        for (std::size_t w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t t = w; t < n; t += nt) work(t);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }
    return out;
}

CostReport cost_report(const PyramidPlan& plan) {
    CostReport r;
    for (std::size_t i : plan.selected) {
        r.tiles_per_level.push_back(plan.levels[i].tiles.size());
        r.pyramid_units += plan.levels[i].tiles.size();
    }
    const std::size_t d = (plan.target_side + plan.base_size - 1) / plan.base_size;
    r.naive_units = d * d * d * d;
    r.ratio = r.pyramid_units ? static_cast<double>(r.naive_units) / static_cast<double>(r.pyramid_units) : 0.0;
    return r;
}

std::vector<std::size_t> parse_levels(const std::string& text) {
    std::string s;
    for (char c : text)
        if (c != '[' && c != ']' && c != ' ') s += c == ',' ? ' ' : c;
    std::istringstream in(s);
    std::vector<std::size_t> out;
    std::string tok;
    while (in >> tok) {
        if (tok.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("level list: '" + tok + "' is not a non-negative integer");
        out.push_back(std::stoul(tok));
    }
    if (out.empty()) throw ConfigError("level list '" + text + "' is empty");
    return out;
}

}  // namespace adds::pyramid
