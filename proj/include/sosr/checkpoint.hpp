#pragma once

// Model checkpoint file, all integers and floats little-endian:
//
//   offset  size  field
//   0       8     magic "SOSRCKPT"
//   8       4     u32 format version (1)
//   12      4     u32 input rank R
//   16      4*R   u32 input dims (per sample, no batch dimension)
//   ..      4     u32 layer count L
//   ..      24*L  per layer: u32 kind, then five u32 fields
//                   kind 0 dense      in, out, 0, 0, 0
//                   kind 1 conv2d     in_channels, out_channels, kernel, stride, pad
//                   kind 2 relu       0, 0, 0, 0, 0
//                   kind 3 max_pool2d size, 0, 0, 0, 0
//                   kind 4 flatten    0, 0, 0, 0, 0
//   ..      8     u64 parameter count N
//   ..      4*N   f32 parameters: weight then bias of each parametric layer,
//                 in layer order, each buffer row-major

#include <filesystem>

#include "sosr/model.hpp"

namespace sosr {

inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'S', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);

/// Throws FormatError on a malformed file and IoError when it cannot be read.
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace sosr
