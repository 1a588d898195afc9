// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "malk/cli/config.hpp"
#include "malk/harness/model.hpp"

namespace malk {

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

/// In-memory image of a checkpoint file.
///
/// Layout (all integers little-endian):
///   "MALK" | u16 version | u32 metadata length | metadata JSON (sorted keys)
///   | u32 tensor count | per tensor: u16 name length, UTF-8 name, u8 dtype
///   tag (1 = f64), u8 ndim, u64 dims[ndim], row-major f64 payload.
struct Checkpoint {
    nlohmann::json metadata;
    std::vector<std::pair<std::string, Matrix>> tensors;
};

std::string encode_checkpoint(const Checkpoint& ck);
/// Throws FormatError with the byte offset of the first bad field.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Atomic write: the bytes go to "<path>.tmp" and are renamed into place.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

/// Checkpoint of a model: config echo (output paths dropped), RNG algorithm and seeds in the
/// metadata; every adapter matrix under its parameter name and the frozen
/// base weights as "site<i>.base_w".
Checkpoint snapshot(const RunConfig& cfg, Model& model);

/// Rebuilds the configuration and model from a checkpoint. Throws
/// SchemaError when a tensor is missing, unexpected or misshapen.
std::pair<RunConfig, std::unique_ptr<Model>> restore(const Checkpoint& ck);

}  // namespace malk
