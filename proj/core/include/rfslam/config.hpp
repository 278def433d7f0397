#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rfslam/dynamics.hpp"
#include "rfslam/inference.hpp"
#include "rfslam/synthesis.hpp"

namespace rfslam {

struct RunConfig {
  std::filesystem::path environment;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> prior_map;
  std::uint64_t seed = 1;
  int threads = 0;  ///< 0: RFSLAM_THREADS or hardware concurrency
  ScenarioConfig scenario;
  FilterConfig filter;
  AgentPrior prior;
  /// Optional explicit grid; otherwise the ROI is covered with grid_cell_size.
  std::optional<GridSpec> grid;
  double grid_cell_size = 0.06;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
/// Unknown keys and out-of-range values raise ConfigError.
RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir = {},
                           std::span<const std::string> overrides = {});
RunConfig load_run_config(const std::filesystem::path& file,
                          std::span<const std::string> overrides = {});

/// Serializes every field, so parse_run_config(to_json(c)) == c.
std::string run_config_to_json(const RunConfig& cfg);

/// Applies `a.b.c=value` to a JSON document; `value` is parsed as JSON when
/// possible and taken as a string otherwise.
std::string apply_override(std::string_view json_text, std::string_view assignment);

/// Range checks shared by the parser and by programmatic callers.
void validate(const RunConfig& cfg);

/// Filter configuration with the radio, clutter and grid derived from the
/// scenario and the environment.
FilterConfig resolve_filter_config(const RunConfig& cfg, const EnvironmentSpec& env);

}  // namespace rfslam
