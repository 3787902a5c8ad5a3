// SPDX-License-Identifier: Apache-2.0

#include "adds/encoders/embedding_file.hpp"

#include <cmath>
#include <optional>

#include "adds/errors.hpp"
#include "adds/io/binary.hpp"

namespace adds::enc {

namespace {

constexpr std::string_view kMagic = "ADDSEMB1";

std::string record_name(std::size_t i) { return "record " + std::to_string(i); }

struct Record {
    std::string label;
    std::vector<float> vec;
};

Record read_record(io::ByteReader& r, std::size_t i, std::size_t dim) {
    const std::string what = record_name(i);
    Record rec;
    const std::uint16_t len = r.u16(what + " label length");
    rec.label = r.str(len, what + " label");
    if (!valid_utf8(rec.label)) throw FormatError(what + ": label is not valid UTF-8");
    rec.vec.resize(dim);
    for (auto& v : rec.vec) v = r.f32(what + " ('" + rec.label + "') vector");
    return rec;
}

/// True when `count` records of `dim` values start at `pos` and end the file.
bool tail_parses(const std::vector<std::uint8_t>& bytes, std::size_t pos, std::size_t first, std::size_t count,
                 std::size_t dim) {
    try {
        io::ByteReader r(bytes.data() + pos, bytes.size() - pos);
        for (std::size_t i = 0; i < count; ++i) read_record(r, first + i, dim);
        return r.done();
    } catch (const FormatError&) {
        return false;
    }
}

/// When decoding breaks, a single record with the wrong number of values is
/// the usual cause. Re-read candidate record `j` (starting at `pos`) with other
/// dims; if the rest of the file then parses cleanly, `j` is the culprit.
std::optional<std::size_t> guess_dim(const std::vector<std::uint8_t>& bytes, std::size_t pos, std::size_t j,
                                     std::size_t count, std::size_t dim) {
    for (std::size_t alt = 0; alt <= dim * 2 + 4; ++alt) {
        if (alt == dim) continue;
        try {
            io::ByteReader r(bytes.data() + pos, bytes.size() - pos);
            read_record(r, j, alt);
            if (tail_parses(bytes, pos + r.position(), j + 1, count - j - 1, dim)) return alt;
        } catch (const FormatError&) {
        }
    }
    return std::nullopt;
}

}  // namespace

bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t n;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            n = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            n = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            n = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        for (std::size_t k = 1; k <= n; ++k) {
            if (i + k >= s.size()) return false;
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000)) return false;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += n + 1;
    }
    return true;
}

num::MatrixD EmbeddingTable::as_matrix() const {
    num::MatrixD m(labels.size(), dim);
    for (std::size_t i = 0; i < vectors.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j) m(i, j) = vectors[i][j];
    return m;
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTable& t) {
    if (t.labels.size() != t.vectors.size()) throw InputError("embedding table: label/vector count mismatch");
    io::ByteWriter w;
    w.raw(kMagic);
    w.u32(static_cast<std::uint32_t>(t.labels.size()));
    w.u32(static_cast<std::uint32_t>(t.dim));
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
        const auto& label = t.labels[i];
        if (label.size() > 0xFFFF) throw InputError(record_name(i) + ": label longer than 65535 bytes");
        if (!valid_utf8(label)) throw InputError(record_name(i) + ": label is not valid UTF-8");
        if (t.vectors[i].size() != t.dim)
            throw InputError(record_name(i) + " ('" + label + "'): dim " + std::to_string(t.vectors[i].size()) +
                             ", expected " + std::to_string(t.dim));
        w.u16(static_cast<std::uint16_t>(label.size()));
        w.raw(label);
        for (float v : t.vectors[i]) w.f32(v);
    }
    return w.bytes();
}

EmbeddingTable decode_embeddings(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader r(bytes);
    if (r.str(kMagic.size(), "magic") != kMagic) throw FormatError("bad magic: not an ADDSEMB1 embedding file");
    const std::uint32_t count = r.u32("label count");
    EmbeddingTable t;
    t.dim = r.u32("embedding dim");
    if (t.dim == 0) throw FormatError("embedding dim is zero");

    std::vector<std::size_t> starts;
    auto blame = [&](std::size_t j) {
        if (auto alt = guess_dim(bytes, starts[j], j, count, t.dim)) {
            io::ByteReader lr(bytes.data() + starts[j], bytes.size() - starts[j]);
            const std::string label = lr.str(lr.u16("label length"), "label");
            throw FormatError(record_name(j) + " ('" + label + "'): has " + std::to_string(*alt) +
                              " values, expected dim " + std::to_string(t.dim));
        }
    };
    for (std::size_t i = 0; i < count; ++i) {
        starts.push_back(r.position());
        try {
            Record rec = read_record(r, i, t.dim);
            for (float v : rec.vec)
                if (!std::isfinite(v)) throw FormatError(record_name(i) + " ('" + rec.label + "'): non-finite value");
            t.labels.push_back(std::move(rec.label));
            t.vectors.push_back(std::move(rec.vec));
        } catch (const FormatError&) {
            if (i > 0) blame(i - 1);
            blame(i);
            throw;
        }
    }
    if (!r.done()) {
        if (count > 0) blame(count - 1);
        throw FormatError(std::to_string(r.remaining()) + " trailing bytes after " + std::to_string(count) + " records");
    }
    return t;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
    io::write_file(path, encode_embeddings(table));
}

EmbeddingTable import_embeddings(const std::filesystem::path& path) { return decode_embeddings(io::read_file(path)); }

}  // namespace adds::enc
