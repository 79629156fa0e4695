#pragma once

// Binary parameter files, all integers and floats little-endian:
//   "QNN1" | version u32 | count u32
//   count x ( name_len u16 | name | rank u8 | dims u32 x rank | f64 x numel )
// A rank-0 entry carries no payload and is used for tags such as the model
// family ("meta/family/<name>").

#include <filesystem>
#include <string>

#include "quann/nets.hpp"

namespace quann {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string family;  // empty when the file has no family tag
  ParameterList tensors;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     const std::string& family = "");
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values from `source` into the same-named tensors of `target`;
// names and shapes must match one to one.
void assign_parameters(const ParameterList& source, ParameterList& target);

}  // namespace quann
