#pragma once

#include <filesystem>

#include "rfslam/inference.hpp"

namespace rfslam {

inline constexpr int kCheckpointVersion = 1;

/// JSON dump of a FilterState; doubles round-trip exactly.
void save_checkpoint(const FilterState& state, const std::filesystem::path& file);
/// Throws IoError when unreadable and ConfigError on a malformed or
/// version-mismatched document.
FilterState load_checkpoint(const std::filesystem::path& file);

}  // namespace rfslam
