#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "FSGN"  u32 version  u32 config_len  config JSON (config_len bytes)
//   u32 record_count, then per record:
//   u32 name_len  name  u32 rank  u32 dims[rank]  f32 payload[prod(dims)]
//
// Records cover every live parameter and batch-norm running statistic, in
// visit order.

#include <cstdint>
#include <string>

#include "fsg/network.hpp"

namespace fsg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(Fsgnet<float>& net, const std::string& path);

// Builds a network from the stored config and fills it. Throws DataError on
// bad magic / version, truncation or any record that disagrees with the
// network the config describes.
Fsgnet<float> load_checkpoint(const std::string& path);

// Fills an existing network. The file must hold exactly the network's
// records with identical shapes; anything else is a DataError.
void load_checkpoint_into(Fsgnet<float>& net, const std::string& path);

FsgnetConfig read_checkpoint_config(const std::string& path);

}  // namespace fsg
