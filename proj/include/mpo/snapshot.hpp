#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpo/manifold.hpp"

namespace mpo {

/// Binary plane snapshot, little-endian:
///   "MPO1" | u64 n | w_origin[n] | w_up[n] | phi_right[n] | scale | u32 crc32
/// The CRC covers every byte between the magic and the checksum.
std::vector<std::uint8_t> encode_plane(const PlaneParams& plane);
PlaneParams decode_plane(const std::vector<std::uint8_t>& bytes, const std::string& origin = "snapshot");

void save_plane(const PlaneParams& plane, const std::string& path);
/// Errors: SnapshotError with kind bad_magic, version ("MPO" followed by a
/// digit other than 1), length, or crc.
PlaneParams load_plane(const std::string& path);

}  // namespace mpo
