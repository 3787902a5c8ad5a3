// SPDX-License-Identifier: Apache-2.0

#include "adds/train/checkpoint.hpp"

#include <array>
#include <cmath>
#include <set>

#include "adds/errors.hpp"
#include "adds/io/binary.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::train {

namespace {

constexpr std::string_view kMagic = "ADDSCKP1";

void put_blobs(io::ByteWriter& w, const std::vector<NamedBlob>& blobs) {
    w.u32(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& b : blobs) {
        if (b.name.size() > 0xFFFF) throw InputError("checkpoint: blob name too long");
        if (b.data.size() != std::size_t{b.rows} * b.cols)
            throw InputError("checkpoint: blob " + b.name + " data does not match its shape");
        w.u16(static_cast<std::uint16_t>(b.name.size()));
        w.raw(b.name);
        w.u32(b.rows);
        w.u32(b.cols);
        for (float v : b.data) w.f32(v);
    }
}

std::vector<NamedBlob> get_blobs(io::ByteReader& r, const std::string& section) {
    const std::uint32_t n = r.u32(section + " blob count");
    std::vector<NamedBlob> out;
    for (std::uint32_t i = 0; i < n; ++i) {
        NamedBlob b;
        const std::string what = section + " blob " + std::to_string(i);
        b.name = r.str(r.u16(what + " name length"), what + " name");
        b.rows = r.u32(what + " rows");
        b.cols = r.u32(what + " cols");
        const std::size_t count = std::size_t{b.rows} * b.cols;
        if (count * 4 > r.remaining())
            throw FormatError("truncated input while reading " + what + " ('" + b.name + "') data");
        b.data.resize(count);
        for (auto& v : b.data) v = r.f32(what + " data");
        out.push_back(std::move(b));
    }
    return out;
}

void section(io::ByteWriter& w, std::string_view tag, const io::ByteWriter& payload) {
    w.raw(tag);
    w.u64(payload.size());
    w.raw(payload.bytes());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    io::ByteWriter w;
    w.raw(kMagic);
    w.u32(kCheckpointVersion);
    w.u32(6);

    io::ByteWriter conf;
    conf.u64(c.config_hash);
    conf.u32(static_cast<std::uint32_t>(c.config_text.size()));
    conf.raw(c.config_text);
    section(w, "CONF", conf);

    io::ByteWriter wts;
    put_blobs(wts, c.weights);
    section(w, "WGHT", wts);

    io::ByteWriter adam;
    adam.u64(c.adam_step);
    put_blobs(adam, c.first_moment);
    put_blobs(adam, c.second_moment);
    section(w, "ADAM", adam);

    io::ByteWriter rng;
    rng.u32(static_cast<std::uint32_t>(c.streams.size()));
    for (const auto& s : c.streams) {
        rng.u16(static_cast<std::uint16_t>(s.label.size()));
        rng.raw(s.label);
        rng.u64(s.key);
        rng.u64(s.counter);
    }
    section(w, "RNGS", rng);

    io::ByteWriter prog;
    prog.u32(c.epochs_done);
    prog.u64(c.steps_done);
    section(w, "PROG", prog);

    io::ByteWriter loss;
    loss.f64(c.initial_loss);
    loss.u32(static_cast<std::uint32_t>(c.epoch_loss.size()));
    for (double v : c.epoch_loss) loss.f64(v);
    section(w, "LOSS", loss);
    return w.bytes();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader r(bytes);
    if (r.str(kMagic.size(), "magic") != kMagic) throw FormatError("bad magic: not an ADDSCKP1 checkpoint");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    const std::uint32_t count = r.u32("section count");

    Checkpoint c;
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string tag = r.str(4, "section tag");
        const std::uint64_t len = r.u64("section " + tag + " length");
        if (len > r.remaining()) throw FormatError("truncated input in section " + tag);
        io::ByteReader s = r.sub(static_cast<std::size_t>(len), "section " + tag);
        if (!seen.insert(tag).second) throw FormatError("duplicate section " + tag);
        if (tag == "CONF") {
            c.config_hash = s.u64("config hash");
            c.config_text = s.str(s.u32("config length"), "config text");
            if (num::fnv1a(c.config_text) != c.config_hash) throw FormatError("config hash does not match config text");
        } else if (tag == "WGHT") {
            c.weights = get_blobs(s, "weights");
        } else if (tag == "ADAM") {
            c.adam_step = s.u64("adam step");
            c.first_moment = get_blobs(s, "adam first moment");
            c.second_moment = get_blobs(s, "adam second moment");
        } else if (tag == "RNGS") {
            const std::uint32_t n = s.u32("stream count");
            for (std::uint32_t k = 0; k < n; ++k) {
                StreamState st;
                st.label = s.str(s.u16("stream label length"), "stream label");
                st.key = s.u64("stream key");
                st.counter = s.u64("stream counter");
                c.streams.push_back(std::move(st));
            }
        } else if (tag == "PROG") {
            c.epochs_done = s.u32("epochs done");
            c.steps_done = s.u64("steps done");
        } else if (tag == "LOSS") {
            c.initial_loss = s.f64("initial loss");
            const std::uint32_t n = s.u32("loss count");
            for (std::uint32_t k = 0; k < n; ++k) c.epoch_loss.push_back(s.f64("epoch loss"));
        } else {
            throw FormatError("unknown section tag '" + tag + "'");
        }
        if (!s.done()) throw FormatError("section " + tag + " has " + std::to_string(s.remaining()) + " unread bytes");
    }
    for (const char* need : {"CONF", "WGHT", "ADAM", "RNGS", "PROG", "LOSS"})
        if (!seen.count(need)) throw FormatError(std::string("missing section ") + need);
    if (!r.done()) throw FormatError(std::to_string(r.remaining()) + " trailing bytes after last section");
    for (const auto& b : c.weights)
        for (float v : b.data)
            if (!std::isfinite(v)) throw FormatError("weight " + b.name + " holds a non-finite value");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace adds::train
