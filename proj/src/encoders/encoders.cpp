// SPDX-License-Identifier: Apache-2.0

#include "adds/encoders/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adds/errors.hpp"
#include "adds/numerics/ops.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::enc {

void ImageEncoderConfig::validate() const {
    if (patch_size == 0 || base_size == 0 || channels == 0 || embed_dim == 0)
        throw ConfigError("image encoder: sizes must be positive");
    if (base_size % patch_size != 0)
        throw ConfigError("image encoder: base size " + std::to_string(base_size) + " not divisible by patch size " +
                          std::to_string(patch_size));
}

FrozenImageEncoder::FrozenImageEncoder(const ImageEncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t in = cfg.patch_size * cfg.patch_size * cfg.channels;
    num::SeedStream rng(cfg.seed, "image-encoder");
    patch_proj_ = MatrixD(in, cfg.embed_dim);
    const double ps = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : patch_proj_.data()) v = ps * rng.normal();
    patch_bias_ = MatrixD(1, cfg.embed_dim);
    for (auto& v : patch_bias_.data()) v = cfg.bias_scale * rng.normal();
    mixing_ = MatrixD(cfg.embed_dim, cfg.embed_dim);
    const double ms = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    for (auto& v : mixing_.data()) v = ms * rng.normal();
}

MatrixD FrozenImageEncoder::encode(const Image& tile) const {
    if (tile.side != cfg_.base_size || tile.channels != cfg_.channels)
        throw ShapeError("image encoder: tile " + std::to_string(tile.side) + "x" + std::to_string(tile.side) + "x" +
                         std::to_string(tile.channels) + " does not match base size " +
                         std::to_string(cfg_.base_size) + " with " + std::to_string(cfg_.channels) + " channels");
    const std::size_t P = cfg_.patch_size, g = cfg_.patches_per_side(), c = cfg_.channels;
    const std::size_t in = P * P * c;
    MatrixD patches(g * g, in);
    for (std::size_t py = 0; py < g; ++py)
        for (std::size_t px = 0; px < g; ++px) {
            double* row = &patches(py * g + px, 0);
            std::size_t k = 0;
            for (std::size_t y = 0; y < P; ++y)
                for (std::size_t x = 0; x < P; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch) row[k++] = tile.at(py * P + y, px * P + x, ch);
        }
    MatrixD emb = num::add_row_bias(num::matmul(patches, patch_proj_), patch_bias_);

    MatrixD pooled(1, cfg_.embed_dim);
    for (std::size_t i = 0; i < emb.rows(); ++i)
        for (std::size_t j = 0; j < emb.cols(); ++j) pooled(0, j) += emb(i, j);
    for (auto& v : pooled.data()) v /= static_cast<double>(emb.rows());

    MatrixD tokens = num::matmul(emb, mixing_);
    MatrixD cls = num::matmul(pooled, mixing_);
    MatrixD out(tokens.rows() + 1, cfg_.embed_dim);
    std::copy(cls.data().begin(), cls.data().end(), out.data().begin());
    std::copy(tokens.data().begin(), tokens.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(cfg_.embed_dim));
    return out;
}

std::uint64_t FrozenImageEncoder::fingerprint() const {
    std::uint64_t h = num::fnv1a("image-encoder");
    for (const MatrixD* m : {&patch_proj_, &patch_bias_, &mixing_})
        h = num::fnv1a_bytes(m->data().data(), m->size() * sizeof(double), h);
    return h;
}

// ---------------------------------------------------------------------------

PromptTemplate::PromptTemplate(std::string pattern) : pattern_(std::move(pattern)) {
    if (std::count(pattern_.begin(), pattern_.end(), placeholder) != 1)
        throw ConfigError("prompt template '" + pattern_ + "' must contain exactly one '@' placeholder");
}

std::string PromptTemplate::instantiate(const std::string& class_name) const {
    std::string out = pattern_;
    out.replace(out.find(placeholder), 1, class_name);
    return out;
}

std::vector<PromptTemplate> default_templates() {
    return {PromptTemplate("This photo contains @"), PromptTemplate("This is a @ photo")};
}

std::string to_lower(std::string s) {
    for (auto& ch : s)
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    return s;
}

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(to_lower(w));
    return out;
}

void normalize(std::span<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) throw NumericError("normalize: zero vector");
    for (double& x : v) x /= n;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw InputError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

FrozenTextEncoder::FrozenTextEncoder(const TextEncoderConfig& cfg, std::vector<PromptTemplate> templates,
                                     std::map<std::string, std::vector<double>> bindings)
    : cfg_(cfg), templates_(std::move(templates)) {
    if (cfg_.embed_dim == 0) throw ConfigError("text encoder: embed_dim must be positive");
    for (const auto& t : templates_) {
        std::string stripped = t.pattern();
        stripped.erase(stripped.find(PromptTemplate::placeholder), 1);
        for (auto& w : split_words(stripped))
            if (std::find(context_words_.begin(), context_words_.end(), w) == context_words_.end())
                context_words_.push_back(w);
    }
    for (auto& [word, vec] : bindings) {
        if (vec.size() != cfg_.embed_dim)
            throw ShapeError("text encoder: binding for '" + word + "' has dim " + std::to_string(vec.size()) +
                             ", expected " + std::to_string(cfg_.embed_dim));
        normalize(vec);
        bindings_.emplace(to_lower(word), std::move(vec));
    }
}

bool FrozenTextEncoder::is_context_word(const std::string& word) const {
    return std::find(context_words_.begin(), context_words_.end(), word) != context_words_.end();
}

std::vector<double> FrozenTextEncoder::word_vector(const std::string& word) const {
    if (auto it = bindings_.find(word); it != bindings_.end()) return it->second;
    num::SeedStream rng = num::SeedStream(cfg_.seed, "text-word").fork(num::fnv1a(word));
    std::vector<double> v(cfg_.embed_dim);
    for (auto& x : v) x = rng.normal();
    normalize(v);
    return v;
}

std::vector<double> FrozenTextEncoder::encode(const std::string& text) const {
    const auto words = split_words(text);
    if (words.empty()) throw InputError("text encoder: empty text");
    std::vector<double> acc(cfg_.embed_dim, 0.0);
    for (const auto& w : words) {
        const double weight = is_context_word(w) ? cfg_.context_weight : 1.0;
        const auto v = word_vector(w);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weight * v[j];
    }
    normalize(acc);
    return acc;
}

std::uint64_t FrozenTextEncoder::fingerprint() const {
    std::uint64_t h = num::fnv1a("text-encoder");
    h = num::fnv1a_bytes(&cfg_.seed, sizeof(cfg_.seed), h);
    h = num::fnv1a_bytes(&cfg_.context_weight, sizeof(double), h);
    for (const auto& t : templates_) h = num::fnv1a(t.pattern(), h);
    for (const auto& [w, v] : bindings_) {
        h = num::fnv1a(w, h);
        h = num::fnv1a_bytes(v.data(), v.size() * sizeof(double), h);
    }
    return h;
}

std::vector<double> embed_label(const std::string& class_name, std::span<const PromptTemplate> templates,
                                const FrozenTextEncoder& encoder) {
    if (class_name.empty() || split_words(class_name).empty()) throw InputError("embed_label: empty class name");
    if (templates.empty()) throw ConfigError("embed_label: no prompt templates");
    std::vector<std::string> seen;
    std::vector<double> acc(encoder.embed_dim(), 0.0);
    for (const auto& t : templates) {
        if (std::find(seen.begin(), seen.end(), t.pattern()) != seen.end()) continue;
        seen.push_back(t.pattern());
        const auto v = encoder.encode(t.instantiate(class_name));
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
    }
    for (auto& x : acc) x /= static_cast<double>(seen.size());
    normalize(acc);
    return acc;
}

MatrixD embed_labels(std::span<const std::string> names, const FrozenTextEncoder& encoder) {
    MatrixD out(names.size(), encoder.embed_dim());
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto v = embed_label(names[i], encoder.templates(), encoder);
        std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace adds::enc
