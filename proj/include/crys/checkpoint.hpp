#pragma once

#include <string>

#include "crys/encoder.hpp"
#include "crys/graph.hpp"
#include "crys/optim.hpp"

namespace crys {

/// Everything a consumer needs to rebuild the model around the parameters.
struct CheckpointMeta {
    FeatureLayout layout;
    EncoderConfig encoder;
};

/// Binary layout, all integers and floats little-endian:
///   magic "CRYSG1" | u32 version | body | u64 fnv1a(body)
/// where body = feature layout, encoder config, u32 param count, then per
/// parameter: u32 name length, name bytes, u32 rows, u32 cols, row-major
/// f64 payload. The version field sits outside the checksum so a mismatch
/// is reported as such rather than as corruption.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& store, const CheckpointMeta& meta,
                     const std::string& path);

struct LoadedCheckpoint {
    ParamStore params;
    CheckpointMeta meta;
};

/// Throws FormatError on bad magic or a malformed body, VersionError on a
/// version mismatch (naming expected and found), CorruptionError when the
/// checksum disagrees, DataError when the file cannot be read.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace crys
