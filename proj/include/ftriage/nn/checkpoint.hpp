#pragma once

#include "ftriage/nn/network.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace ftriage::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian), see docs/checkpoint_format.md:
//   "FTRG" | u32 version | u32 scalar_bytes | u32 len + architecture JSON
//   | u32 record_count | records: u32 len + name, u32 rank, u64 dims[rank], values
template <typename Real>
std::string save_checkpoint(const BasicNetwork<Real>& network);

/// Rebuilds the network described by the stream. Throws FormatError naming the
/// offending field on any mismatch; never returns a partially loaded network.
template <typename Real>
BasicNetwork<Real> load_checkpoint(std::string_view bytes);

template <typename Real>
void save_checkpoint_file(const BasicNetwork<Real>& network, const std::filesystem::path& path);

template <typename Real>
BasicNetwork<Real> load_checkpoint_file(const std::filesystem::path& path);

} // namespace ftriage::nn
