#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "textshield/nn/params.hpp"

namespace textshield::nn {

// On-disk layout, all integers little-endian:
//   magic "TSCK" | u32 version | str arch | u32 n_meta | n_meta x (str key, str value)
//   | u32 n_params | n_params x (str name | u32 rank | rank x u64 dim | f64 values)
// where str is a u32 byte length followed by the bytes. Meta is written in key
// order, parameters in store order, so equal checkpoints serialize to equal bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string arch;
  std::map<std::string, std::string> meta;
  ParamStore params;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// MissingArtifactError when the file is absent, VersionError on a bad header,
// FormatError on truncation.
Checkpoint load_checkpoint(const std::string& path);

// Copies values from `loaded` into `target`, requiring identical names and
// shapes in the same order. Throws ShapeError otherwise.
void assign_params(ParamStore& target, const ParamStore& loaded);

std::string meta_get(const Checkpoint& ckpt, const std::string& key);

}  // namespace textshield::nn
