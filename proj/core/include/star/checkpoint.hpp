#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "star/model.hpp"

namespace star {

/// Binary layout, all integers little-endian:
///
///   u32 format version (kCheckpointVersion)
///   u32 tensor count
///   per tensor:
///     u32 name length, name bytes
///     u32 rank, then rank x u32 dims (row-major order of the payload)
///     product(dims) x float32 payload
///
/// Model dimensions are recovered from tensor shapes on load.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const ModelParams<float>& params);
ModelParams<float> read_checkpoint(std::istream& is);

/// Writes to "<path>.tmp" and renames over `path`.
void save_checkpoint(const std::string& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::string& path);

/// Vocabulary sidecar path for a checkpoint.
inline std::string vocab_path_for(const std::string& checkpoint) { return checkpoint + ".vocab"; }

/// FNV-1a over a parameter's name, shape and payload bytes.
std::uint64_t parameter_hash(const ad::Parameter<float>& p);

}  // namespace star
