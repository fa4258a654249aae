#pragma once

// Byte-stable upload encodings (little-endian).
//
// LocalUpdate, version 1:
//   char[4]  "FRLU"
//   u16      version (1)
//   u16      flags (bit 0: full-table upload, touched rows hidden)
//   u32      user id
//   u64      sample count |D_u|
//   u32      embedding width d
//   u32      row count R
//   R x { u32 item id, d x f64 delta }              ascending item id
//   2 x { u32 in, u32 hidden, u32 out,                ncf branch, then proxy
//         f64 W1[hidden*in], f64 b1[hidden],          column-major
//         f64 W2[out*hidden], f64 b2[out] }
//
// ContributionReport, version 1:
//   char[4] "FRCR", u16 version (1), u16 reserved (0), u32 user id, f64 predicted loss
//
// Neither payload carries the user embedding or any raw interaction.

#include <cstdint>
#include <span>
#include <vector>

#include "fedrec/client.hpp"

namespace fedrec {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint16_t kWireVersion = 1;

Bytes encode_update(const LocalUpdate& update);
LocalUpdate decode_update(std::span<const std::uint8_t> bytes);

Bytes encode_report(const ContributionReport& report);
ContributionReport decode_report(std::span<const std::uint8_t> bytes);

/// Size of encode_update() without materializing it.
std::size_t encoded_update_size(const LocalUpdate& update);
inline constexpr std::size_t kReportWireSize = 20;

}  // namespace fedrec
