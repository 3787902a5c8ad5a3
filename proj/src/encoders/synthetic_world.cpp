// SPDX-License-Identifier: Apache-2.0

#include "adds/encoders/synthetic_world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "adds/errors.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::enc {

namespace {

const std::array<std::string, 80> kNames = {
    "tree",     "river",    "zebra",   "apple",    "boat",     "cloud",    "mango",   "bridge",   "horse",   "lamp",
    "garden",   "kite",     "desert",  "owl",      "castle",   "violin",   "beach",   "tiger",    "candle",  "forest",
    "umbrella", "ladder",   "island",  "rocket",   "pebble",   "harbor",   "quilt",   "falcon",   "meadow",  "anchor",
    "glacier",  "teapot",   "canyon",  "lantern",  "orchard",  "whale",    "bicycle", "cactus",   "dolphin", "chimney",
    "wagon",    "fountain", "hammock", "jellyfish","kettle",   "lighthouse","mirror", "needle",   "oyster",  "parrot",
    "reef",     "saddle",   "tractor", "volcano",  "walrus",   "yacht",    "acorn",   "barn",     "compass", "drum",
    "easel",    "fern",     "gazebo",  "helmet",   "igloo",    "jetty",    "koala",   "lemon",    "marsh",   "nest",
    "otter",    "pier",     "quarry",  "raft",     "statue",   "tunnel",   "vase",    "wheat",    "yak",     "buoy",
};

}  // namespace

std::span<const std::string> builtin_class_names() { return kNames; }

void WorldConfig::validate() const {
    if (num_classes < 2) throw ConfigError("synthetic world: need at least 2 classes, got " + std::to_string(num_classes));
    if (base_size == 0 || patch_size == 0 || image_side < base_size)
        throw ConfigError("synthetic world: image side " + std::to_string(image_side) + " must be >= base size " +
                          std::to_string(base_size));
    if (image_side % patch_size != 0)
        throw ConfigError("synthetic world: image side not divisible by patch size");
    if (min_objects == 0 || min_objects > max_objects)
        throw ConfigError("synthetic world: need 1 <= min_objects <= max_objects");
    const std::size_t cells = (image_side / patch_size) * (image_side / patch_size);
    if (max_objects > cells || max_objects > num_classes)
        throw ConfigError("synthetic world: max_objects exceeds available cells or classes");
    const std::size_t bits = patch_size * patch_size * channels;
    if (bits < 64 && num_classes > (std::size_t{1} << bits))
        throw ConfigError("synthetic world: " + std::to_string(num_classes) + " classes cannot have distinct " +
                          std::to_string(bits) + "-bit signatures");
    if (!(noise >= 0.0) || !(amplitude > 0.0)) throw ConfigError("synthetic world: noise >= 0 and amplitude > 0 required");
}

SyntheticWorld::SyntheticWorld(const WorldConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (std::size_t i = 0; i < cfg_.num_classes; ++i)
        names_.push_back(i < kNames.size() ? kNames[i] : "class" + std::to_string(i));

    ImageEncoderConfig ic;
    ic.base_size = cfg_.base_size;
    ic.patch_size = cfg_.patch_size;
    ic.channels = cfg_.channels;
    ic.embed_dim = cfg_.embed_dim;
    ic.seed = cfg_.seed;
    image_encoder_ = std::make_unique<FrozenImageEncoder>(ic);

    num::SeedStream rng(cfg_.seed, "signatures");
    const std::size_t bits = cfg_.patch_size * cfg_.patch_size * cfg_.channels;
    while (signatures_.size() < cfg_.num_classes) {
        std::vector<float> s(bits);
        for (auto& v : s) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;
        if (std::find(signatures_.begin(), signatures_.end(), s) == signatures_.end()) signatures_.push_back(std::move(s));
    }

    std::map<std::string, std::vector<double>> bindings;
    for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
        const MatrixD tokens = image_encoder_->encode(signature_tile(c));
        std::vector<double> v(tokens.row(0).begin(), tokens.row(0).end());
        normalize(v);
        text_vectors_.push_back(v);
        bindings.emplace(to_lower(names_[c]), std::move(v));
    }
    TextEncoderConfig tc;
    tc.embed_dim = cfg_.embed_dim;
    tc.seed = cfg_.seed;
    text_encoder_ = std::make_unique<FrozenTextEncoder>(tc, default_templates(), std::move(bindings));
}

std::size_t SyntheticWorld::class_index(const std::string& name) const {
    const std::string key = to_lower(name);
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (to_lower(names_[i]) == key) return i;
    return npos;
}

void SyntheticWorld::plant(Image& img, std::size_t c, std::size_t cell_y, std::size_t cell_x) const {
    const std::size_t P = cfg_.patch_size, ch = cfg_.channels;
    if ((cell_y + 1) * P > img.side || (cell_x + 1) * P > img.side)
        throw IndexError("plant: cell outside image");
    const auto& sig = signatures_.at(c);
    for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x)
            for (std::size_t k = 0; k < ch; ++k)
                img.at(cell_y * P + y, cell_x * P + x, k) +=
                    static_cast<float>(cfg_.amplitude) * sig[(y * P + x) * ch + k];
}

Image SyntheticWorld::signature_tile(std::size_t c) const {
    Image tile(cfg_.base_size, cfg_.channels);
    const auto& sig = signatures_.at(c);
    const std::size_t P = cfg_.patch_size, ch = cfg_.channels;
    for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x)
            for (std::size_t k = 0; k < ch; ++k) tile.at(y, x, k) = sig[(y * P + x) * ch + k];
    return tile;
}

Sample SyntheticWorld::sample(const std::string& split, std::uint64_t index, std::span<const std::size_t> allowed) const {
    std::vector<std::size_t> pool;
    if (allowed.empty()) {
        for (std::size_t c = 0; c < cfg_.num_classes; ++c) pool.push_back(c);
    } else {
        for (std::size_t c : allowed) {
            if (c >= cfg_.num_classes) throw IndexError("sample: class " + std::to_string(c) + " out of range");
            if (std::find(pool.begin(), pool.end(), c) == pool.end()) pool.push_back(c);
        }
    }
    num::SeedStream rng = num::SeedStream(cfg_.seed, "sample/" + split).fork(index);

    Sample s{Image(cfg_.image_side, cfg_.channels), std::vector<std::uint8_t>(cfg_.num_classes, 0)};
    for (auto& v : s.image.pixels) v = static_cast<float>(cfg_.noise * rng.normal());

    const std::size_t max_obj = std::min(cfg_.max_objects, pool.size());
    const std::size_t min_obj = std::min(cfg_.min_objects, max_obj);
    const std::size_t count = min_obj + static_cast<std::size_t>(rng.below(max_obj - min_obj + 1));

    const std::size_t grid = cfg_.image_side / cfg_.patch_size;
    std::vector<std::size_t> cells(grid * grid);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(pool[i], pool[i + static_cast<std::size_t>(rng.below(pool.size() - i))]);
        std::swap(cells[i], cells[i + static_cast<std::size_t>(rng.below(cells.size() - i))]);
        plant(s.image, pool[i], cells[i] / grid, cells[i] % grid);
        s.labels[pool[i]] = 1;
    }
    return s;
}

std::vector<Sample> SyntheticWorld::dataset(const std::string& split, std::size_t count,
                                            std::span<const std::size_t> allowed) const {
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample(split, i, allowed));
    return out;
}

}  // namespace adds::enc
