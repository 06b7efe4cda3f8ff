#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "mmcse/encoder.hpp"

namespace mmcse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Byte layout (all integers and floats little-endian):
//   "MMCSECKP"                      8-byte magic
//   u32 version
//   u32 n, n bytes                  encoder config as key=value lines
//   u32 parameter count
//   per parameter:
//     u32 n, n bytes                name
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]        row-major
// See docs/formats.md.
void write_checkpoint(std::ostream& out, const Encoder& model);
Encoder read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Encoder& model);
Encoder load_checkpoint(const std::filesystem::path& path);

// key=value lines, one per field; doubles printed with 17 significant digits
// so the text round-trips exactly.
std::string encoder_config_text(const EncoderConfig& config);
EncoderConfig parse_encoder_config_text(std::string_view text);

}  // namespace mmcse
