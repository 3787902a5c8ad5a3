// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers for the embedding and checkpoint files.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "adds/errors.hpp"

namespace adds::io {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put_le(v, 2); }
    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void raw(const std::vector<std::uint8_t>& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader. Every read past the end throws FormatError with
/// the caller-supplied context so truncations name what was being read.
class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& b) : data_(b.data()), size_(b.size()) {}
    ByteReader(const std::uint8_t* p, std::size_t n) : data_(p), size_(n) {}

    std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(get_le(1, what)); }
    std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(get_le(2, what)); }
    std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(get_le(4, what)); }
    std::uint64_t u64(std::string_view what) { return get_le(8, what); }
    float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
    double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }
    std::string str(std::size_t n, std::string_view what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    ByteReader sub(std::size_t n, std::string_view what) {
        need(n, what);
        ByteReader r(data_ + pos_, n);
        pos_ += n;
        return r;
    }

    std::size_t remaining() const noexcept { return size_ - pos_; }
    std::size_t position() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == size_; }

private:
    void need(std::size_t n, std::string_view what) {
        if (size_ - pos_ < n)
            throw FormatError("truncated input while reading " + std::string(what) + " (need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ", have " +
                              std::to_string(size_ - pos_) + ")");
    }
    std::uint64_t get_le(int n, std::string_view what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace adds::io
