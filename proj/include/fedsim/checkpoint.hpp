#pragma once

#include <filesystem>

#include "fedsim/model.hpp"
#include "fedsim/params.hpp"

namespace fedsim {

struct Checkpoint {
  ModelSpec spec;
  ParameterVector params;
};

// Checkpoint document: {format_version: 1, spec, segments, values}. Values are
// written with shortest round-trip precision, so load(save(x)) == x exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ParameterVector& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedsim
