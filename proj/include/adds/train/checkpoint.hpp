// SPDX-License-Identifier: Apache-2.0
//
// "ADDSCKP1" checkpoints: magic, u32 format version, u32 section count, then
// sections of [4-byte tag, u64 payload length, payload]. Weights and Adam
// moments are stored as named little-endian f32 blobs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace adds::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBlob {
    std::string name;
    std::uint32_t rows = 0, cols = 0;
    std::vector<float> data;
    friend bool operator==(const NamedBlob&, const NamedBlob&) = default;
};

struct StreamState {
    std::string label;
    std::uint64_t key = 0, counter = 0;
    friend bool operator==(const StreamState&, const StreamState&) = default;
};

struct Checkpoint {
    std::string config_text;
    std::uint64_t config_hash = 0;
    std::vector<NamedBlob> weights;
    std::uint64_t adam_step = 0;
    std::vector<NamedBlob> first_moment, second_moment;
    std::vector<StreamState> streams;
    std::uint32_t epochs_done = 0;
    std::uint64_t steps_done = 0;
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// All-or-nothing: any error throws FormatError and nothing is returned.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adds::train
