// SPDX-License-Identifier: Apache-2.0

#include "adds/train/config.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <sstream>

#include "adds/errors.hpp"
#include "adds/numerics/rng.hpp"
#include "adds/pyramid/pyramid.hpp"

namespace adds::train {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string join(const std::vector<std::size_t>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define SIZE_FIELD(name) \
    {#name, {[](TrainConfig& c, const std::string& k, const std::string& v) { c.name = to_size(k, v); }, \
             [](const TrainConfig& c) { return std::to_string(c.name); }}}
#define REAL_FIELD(name) \
    {#name, {[](TrainConfig& c, const std::string& k, const std::string& v) { c.name = to_double(k, v); }, \
             [](const TrainConfig& c) { return fmt(c.name); }}}

#define BOOL_FIELD(name) \
    {#name, {[](TrainConfig& c, const std::string& k, const std::string& v) { c.name = to_bool(k, v); }, \
             [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        SIZE_FIELD(classes),
        SIZE_FIELD(image_side),
        SIZE_FIELD(base_size),
        SIZE_FIELD(patch_size),
        SIZE_FIELD(channels),
        SIZE_FIELD(embed_dim),
        REAL_FIELD(noise),
        SIZE_FIELD(min_objects),
        SIZE_FIELD(max_objects),
        SIZE_FIELD(seen_classes),
        SIZE_FIELD(train_samples),
        SIZE_FIELD(test_samples),
        {"levels",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              if (v == "all") c.levels.reset();
              else c.levels = pyramid::parse_levels(v);
          },
          [](const TrainConfig& c) { return c.levels ? join(*c.levels) : std::string("all"); }}},
        BOOL_FIELD(cls_only),
        BOOL_FIELD(identity_init),
        BOOL_FIELD(rotate_augment),
        {"encode_threads",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              c.encode_threads = static_cast<unsigned>(to_size(k, v));
          },
          [](const TrainConfig& c) { return std::to_string(c.encode_threads); }}},
        SIZE_FIELD(depth),
        SIZE_FIELD(heads),
        SIZE_FIELD(hidden),
        REAL_FIELD(dropout),
        {"kind",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.kind = decoder::block_kind_from_string(v);
              } catch (const std::exception&) {
                  throw ConfigError("config key '" + k + "': unknown decoder kind '" + v + "'");
              }
          },
          [](const TrainConfig& c) { return decoder::to_string(c.kind); }}},
        {"lr",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              if (v == "auto") c.lr.reset();
              else c.lr = to_double(k, v);
          },
          [](const TrainConfig& c) { return fmt(c.learning_rate()); }}},
        REAL_FIELD(weight_decay),
        SIZE_FIELD(epochs),
        SIZE_FIELD(batch_size),
        REAL_FIELD(alpha),
        SIZE_FIELD(select_above),
        REAL_FIELD(gamma_pos),
        REAL_FIELD(gamma_neg),
        REAL_FIELD(margin),
        {"ks",
         {[](TrainConfig& c, const std::string&, const std::string& v) { c.ks = pyramid::parse_levels(v); },
          [](const TrainConfig& c) { return join(c.ks); }}},
        REAL_FIELD(threshold),
        {"seed",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
          [](const TrainConfig& c) { return std::to_string(c.seed); }}},
        {"run_id",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              if (v.empty() || v.find_first_of(" \t\"\\") != std::string::npos)
                  throw ConfigError("config key '" + k + "': run id must be non-empty without spaces or quotes");
              c.run_id = v;
          },
          [](const TrainConfig& c) { return c.run_id; }}},
        {"timestamp",
         {[](TrainConfig& c, const std::string&, const std::string& v) { c.timestamp = v; },
          [](const TrainConfig& c) { return c.timestamp; }}},
    };
    return table;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

}  // namespace

double TrainConfig::learning_rate() const {
    if (lr) return *lr;
    return image_side > 336 ? 1e-4 : 3e-4;
}

void TrainConfig::validate() const {
    world().validate();
    decoder().validate();
    asl().validate();
    const double rate = learning_rate();
    // Zero is allowed: it runs the full pipeline with the optimizer step skipped.
    if (!(rate >= 0.0)) throw ConfigError("config key 'lr': must be >= 0, got " + fmt(rate));
    if (weight_decay < 0.0) throw ConfigError("config key 'weight_decay': must be >= 0");
    if (epochs < 1) throw ConfigError("config key 'epochs': must be >= 1");
    if (batch_size < 1) throw ConfigError("config key 'batch_size': must be >= 1");
    if (seen_classes < 1 || seen_classes >= classes)
        throw ConfigError("config key 'seen_classes': need 1 <= seen_classes < classes (" + std::to_string(classes) + ")");
    if (train_samples < 1 || test_samples < 1) throw ConfigError("config: train_samples and test_samples must be >= 1");
    if (alpha < 0.0) throw ConfigError("config key 'alpha': must be >= 0");
    if (ks.empty()) throw ConfigError("config key 'ks': need at least one k");
    for (auto k : ks)
        if (k == 0) throw ConfigError("config key 'ks': k must be >= 1");
    if (encode_threads == 0) throw ConfigError("config key 'encode_threads': must be >= 1");
    if (embed_dim % heads != 0)
        throw ConfigError("config: embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                          std::to_string(heads));
}

enc::WorldConfig TrainConfig::world() const {
    enc::WorldConfig w;
    w.num_classes = classes;
    w.image_side = image_side;
    w.base_size = base_size;
    w.patch_size = patch_size;
    w.channels = channels;
    w.embed_dim = embed_dim;
    w.seed = seed;
    w.noise = noise;
    w.min_objects = min_objects;
    w.max_objects = max_objects;
    return w;
}

decoder::DecoderConfig TrainConfig::decoder() const {
    decoder::DecoderConfig d;
    d.embed_dim = embed_dim;
    d.heads = heads;
    d.hidden = hidden;
    d.depth = depth;
    d.dropout = dropout;
    d.kind = kind;
    d.identity_qk_init = identity_init;
    return d;
}

sup::AslConfig TrainConfig::asl() const {
    sup::AslConfig a;
    a.gamma_pos = gamma_pos;
    a.gamma_neg = gamma_neg;
    a.margin = margin;
    return a;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    const auto& f = fields();
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, trim(value));
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& [k, f] : fields()) out += k + "=" + f.get(*this) + "\n";
    return out;
}

std::uint64_t TrainConfig::hash() const { return num::fnv1a(to_text()); }

std::vector<std::string> TrainConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    for (const auto& [k, v] : parse_key_values(text)) c.set(k, v);
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace adds::train
