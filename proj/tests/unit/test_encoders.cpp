#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "adds/encoders/embedding_file.hpp"
#include "adds/encoders/encoders.hpp"
#include "adds/encoders/synthetic_world.hpp"
#include "adds/numerics/rng.hpp"

using namespace adds;

namespace {

std::filesystem::path fixture(const char* name) { return std::filesystem::path(ADDS_TEST_DATA) / name; }

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "adds_unit";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// Re-run of the hash embedding: one Gaussian unit vector per word, keyed by
// the word's FNV-1a hash, template words down-weighted.
std::vector<double> scripted_label(const std::string& name, std::uint64_t seed, std::size_t e) {
    auto unit = [](std::vector<double> v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        for (double& x : v) x /= std::sqrt(n);
        return v;
    };
    auto word = [&](const std::string& w) {
        auto rng = num::SeedStream(seed, "text-word").fork(num::fnv1a(w));
        std::vector<double> v(e);
        for (auto& x : v) x = rng.normal();
        return unit(v);
    };
    const std::vector<std::vector<std::string>> prompts = {{"this", "photo", "contains", name},
                                                           {"this", "is", "a", name, "photo"}};
    const std::vector<std::string> context = {"this", "photo", "contains", "is", "a"};
    std::vector<double> total(e, 0.0);
    for (const auto& words : prompts) {
        std::vector<double> acc(e, 0.0);
        for (const auto& w : words) {
            const double weight = std::find(context.begin(), context.end(), w) != context.end() ? 0.1 : 1.0;
            const auto v = word(w);
            for (std::size_t j = 0; j < e; ++j) acc[j] += weight * v[j];
        }
        acc = unit(acc);
        for (std::size_t j = 0; j < e; ++j) total[j] += acc[j] / 2.0;
    }
    return unit(total);
}

}  // namespace

TEST_SUITE("encoders") {

TEST_CASE("image encoder") {
    enc::ImageEncoderConfig cfg;
    cfg.base_size = 32;
    cfg.patch_size = 8;
    cfg.embed_dim = 16;
    const enc::FrozenImageEncoder encoder(cfg);

    pyramid::Image tile(32, 3);
    num::SeedStream rng(1, "tile");
    for (auto& v : tile.pixels) v = static_cast<float>(rng.normal());
    const auto a = enc::encode_image_tile(tile, encoder);
    CHECK(a.rows() == 17);
    CHECK(a.cols() == 16);
    CHECK(enc::encode_image_tile(tile, encoder) == a);

    const auto z = encoder.encode(pyramid::Image(32, 3));
    for (double v : z.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(encoder.encode(pyramid::Image(16, 3)), ShapeError);
    cfg.patch_size = 7;
    CHECK_THROWS_AS(enc::FrozenImageEncoder{cfg}, ConfigError);
}

TEST_CASE("prompt templates") {
    CHECK(enc::PromptTemplate("a @ here").instantiate("cat") == "a cat here");
    CHECK_THROWS_AS(enc::PromptTemplate("no placeholder"), ConfigError);
    CHECK_THROWS_AS(enc::PromptTemplate("@ and @"), ConfigError);
    CHECK(enc::default_templates().size() == 2);
}

TEST_CASE("label embedding") {
    const auto templates = enc::default_templates();
    enc::TextEncoderConfig tc;
    tc.embed_dim = 16;
    tc.seed = 7;
    const enc::FrozenTextEncoder encoder(tc, templates);

    SUBCASE("scripted re-run for 'tree'") {
        const auto v = enc::embed_label("tree", templates, encoder);
        const auto ref = scripted_label("tree", 7, 16);
        for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(v[j] - ref[j]) < 1e-12);
    }
    SUBCASE("unit norm") {
        for (const char* name : {"tree", "Fire Hydrant", "x", "a b c d"}) {
            const auto v = enc::embed_label(name, templates, encoder);
            double n = 0.0;
            for (double x : v) n += x * x;
            CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
        }
    }
    SUBCASE("templates agreeing on a vector give that vector") {
        std::vector<double> bound(16, 0.0);
        bound[3] = 1.0;
        const std::vector<enc::PromptTemplate> solo = {enc::PromptTemplate("@")};
        const enc::FrozenTextEncoder e2(tc, solo, {{"zzz", bound}});
        const std::vector<enc::PromptTemplate> two = {enc::PromptTemplate("@"), enc::PromptTemplate(" @ ")};
        const auto v = enc::embed_label("zzz", two, e2);
        for (std::size_t j = 0; j < 16; ++j) CHECK(v[j] == doctest::Approx(bound[j]).epsilon(1e-15));
    }
    SUBCASE("duplicated templates change nothing") {
        const std::vector<enc::PromptTemplate> doubled = {templates[0], templates[1], templates[0], templates[1],
                                                          templates[1]};
        CHECK(enc::embed_label("kite", doubled, encoder) == enc::embed_label("kite", templates, encoder));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(enc::embed_label("", templates, encoder), InputError);
        CHECK_THROWS_AS(enc::embed_label("  ", templates, encoder), InputError);
        CHECK_THROWS_AS(enc::embed_label("x", {}, encoder), ConfigError);
    }
}

TEST_CASE("cosine helpers") {
    const std::vector<double> a{1, 1, 0}, b{1, 0, 0}, zero{0, 0, 0};
    CHECK(enc::cosine(a, b) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(enc::cosine(a, zero), InputError);
    std::vector<double> z = zero;
    CHECK_THROWS_AS(enc::normalize(z), NumericError);
}

TEST_CASE("synthetic world alignment") {
    enc::WorldConfig wc;
    wc.num_classes = 8;
    wc.seed = 0;
    const enc::SyntheticWorld world(wc);
    const auto& encoder = world.image_encoder();

    SUBCASE("signature tiles match their own class best") {
        for (std::size_t c = 0; c < 8; ++c) {
            const auto own_tokens = encoder.encode(world.signature_tile(c));
            const std::vector<double> tile_cls(own_tokens.row(0).begin(), own_tokens.row(0).end());
            const double own = enc::cosine(world.text_embedding(c), tile_cls);
            for (std::size_t o = 0; o < 8; ++o) {
                if (o == c) continue;
                const auto other = encoder.encode(world.signature_tile(o));
                const std::vector<double> other_cls(other.row(0).begin(), other.row(0).end());
                CHECK(own > enc::cosine(world.text_embedding(c), other_cls));
                CHECK(own > enc::cosine(world.text_embedding(o), tile_cls));
            }
        }
    }
    SUBCASE("noisy single-object tiles classify by argmax cosine") {
        enc::WorldConfig wc16 = wc;
        wc16.num_classes = 16;
        const enc::SyntheticWorld w16(wc16);
        num::SeedStream rng(3, "noisy");
        std::size_t hits = 0, trials = 400;
        for (std::size_t t = 0; t < trials; ++t) {
            const std::size_t c = rng.below(16);
            pyramid::Image tile(wc16.base_size, wc16.channels);
            for (auto& v : tile.pixels) v = static_cast<float>(wc16.noise * rng.normal());
            const std::size_t cells = wc16.base_size / wc16.patch_size;
            w16.plant(tile, c, rng.below(cells), rng.below(cells));
            const auto tokens = w16.image_encoder().encode(tile);
            const std::vector<double> v(tokens.row(0).begin(), tokens.row(0).end());
            std::size_t best = 0;
            for (std::size_t o = 1; o < 16; ++o)
                if (enc::cosine(w16.text_embedding(o), v) > enc::cosine(w16.text_embedding(best), v)) best = o;
            hits += best == c;
        }
        CHECK(static_cast<double>(hits) / static_cast<double>(trials) >= 0.95);
    }
    SUBCASE("text tower binds class names to the aligned vectors") {
        for (std::size_t c = 0; c < 8; ++c) {
            const auto v = enc::embed_label(world.class_names()[c], world.text_encoder().templates(),
                                            world.text_encoder());
            CHECK(enc::cosine(v, world.text_embedding(c)) > 0.98);
        }
    }
}

TEST_CASE("synthetic world samples") {
    enc::WorldConfig wc;
    wc.num_classes = 10;
    wc.seed = 4;
    const enc::SyntheticWorld a(wc), b(wc);
    for (std::uint64_t i = 0; i < 50; ++i) {
        const auto s = a.sample("train", i);
        std::size_t ones = 0;
        for (auto y : s.labels) ones += y;
        CHECK(ones >= 1);
        CHECK(ones <= 5);
        CHECK(s.image.side == wc.image_side);
        const auto t = b.sample("train", i);
        CHECK(t.image == s.image);
        CHECK(t.labels == s.labels);
    }
    CHECK(a.sample("train", 0).image != a.sample("test", 0).image);

    const std::vector<std::size_t> allowed{1, 3, 5};
    for (const auto& s : a.dataset("train", 30, allowed))
        for (std::size_t c = 0; c < 10; ++c)
            if (s.labels[c]) CHECK(std::find(allowed.begin(), allowed.end(), c) != allowed.end());

    CHECK(a.class_index(a.class_names()[2]) == 2);
    CHECK(a.class_index(enc::to_lower(a.class_names()[2])) == 2);
    CHECK(a.class_index("no such class") == enc::SyntheticWorld::npos);
    CHECK(enc::builtin_class_names().size() == 80);
}

TEST_CASE("embedding files") {
    enc::EmbeddingTable t;
    t.dim = 3;
    t.labels = {"cat", "dog", "snow leopard"};
    t.vectors = {{1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.5f, -0.25f, 2.0f}};

    SUBCASE("round trip") {
        const auto p = scratch("rt.emb");
        enc::write_embeddings(p, t);
        const auto back = enc::import_embeddings(p);
        CHECK(back.dim == 3);
        CHECK(back.labels == t.labels);
        CHECK(back.vectors == t.vectors);
        CHECK(enc::encode_embeddings(back) == enc::encode_embeddings(t));
    }
    SUBCASE("fixture file decodes to known vectors") {
        const auto f = enc::import_embeddings(fixture("three_labels.emb"));
        CHECK(f.dim == 3);
        CHECK(f.labels == t.labels);
        CHECK(f.vectors == t.vectors);
    }
    SUBCASE("a record with the wrong width is named") {
        // declared dim 4; the middle record carries only 3 values
        std::vector<std::uint8_t> bytes;
        auto u16 = [&](std::uint16_t v) {
            for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        };
        auto u32 = [&](std::uint32_t v) {
            for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        };
        auto record = [&](const std::string& label, std::size_t n) {
            u16(static_cast<std::uint16_t>(label.size()));
            bytes.insert(bytes.end(), label.begin(), label.end());
            for (std::size_t i = 0; i < n; ++i) {
                const float f = 0.5f + static_cast<float>(i);
                std::uint32_t b;
                std::memcpy(&b, &f, 4);
                u32(b);
            }
        };
        const std::string magic = "ADDSEMB1";
        bytes.insert(bytes.end(), magic.begin(), magic.end());
        u32(3);
        u32(4);
        record("cat", 4);
        record("dog", 3);
        record("owl", 4);
        try {
            enc::decode_embeddings(bytes);
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            INFO(msg);
            CHECK(msg.find("dog") != std::string::npos);
            CHECK(msg.find("3 values") != std::string::npos);
        }
    }
    SUBCASE("corrupt files") {
        const auto bytes = enc::encode_embeddings(t);
        CHECK_THROWS_AS(enc::decode_embeddings(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 5)),
                        FormatError);
        auto bad_magic = bytes;
        bad_magic[0] ^= 0xff;
        CHECK_THROWS_AS(enc::decode_embeddings(bad_magic), FormatError);
        auto trailing = bytes;
        trailing.push_back(0);
        CHECK_THROWS_AS(enc::decode_embeddings(trailing), FormatError);
        auto nan = t;
        nan.vectors[1][2] = std::nanf("");
        CHECK_THROWS_AS(enc::decode_embeddings(enc::encode_embeddings(nan)), FormatError);
        CHECK_THROWS(enc::import_embeddings(scratch("missing.emb")));
    }
}

}  // TEST_SUITE
