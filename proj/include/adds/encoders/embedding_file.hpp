// SPDX-License-Identifier: Apache-2.0
//
// "ADDSEMB1" label-embedding tables: magic, u32 count, u32 dim, then per
// record a u16 label byte length, UTF-8 label bytes and dim little-endian f32.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adds/numerics/matrix.hpp"

namespace adds::enc {

struct EmbeddingTable {
    std::size_t dim = 0;
    std::vector<std::string> labels;
    std::vector<std::vector<float>> vectors;

    num::MatrixD as_matrix() const;
};

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTable& table);
EmbeddingTable decode_embeddings(const std::vector<std::uint8_t>& bytes);

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable import_embeddings(const std::filesystem::path& path);

bool valid_utf8(const std::string& s);

}  // namespace adds::enc
