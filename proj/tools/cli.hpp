#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deshadow/trainer.hpp"

namespace deshadow::cli {

/// Environment variable naming the config file used when --config is absent.
inline constexpr const char* kConfigEnv = "DESHADOW_CONFIG";

struct RunPaths {
  std::string images;
  std::string masks;
  std::string manifest;
  std::string ckpt;
  std::string out;
  std::string gt;
  std::string frames;
};

/// Settings shared by every subcommand. Resolved as built-in default, then
/// config file, then command-line flag.
struct RunConfig {
  RunPaths paths;
  int patch_size = 128;
  int stride = 32;
  int radius = kDefaultMorphRadius;
  /// Moving-shadow threshold in 8-bit units.
  double epsilon = 40.0;
  std::string preset = "paper";
  std::uint64_t seed = 0;
  int workers = 1;
  TrainConfig train;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Fields absent from `j` keep their current values.
void apply_json(RunConfig& c, const nlohmann::json& j);

/// Flags given on the command line; unset ones leave the config alone.
struct RunOverrides {
  std::optional<std::string> images, masks, manifest, ckpt, out, gt, frames;
  std::optional<int> patch_size, stride, radius, workers, epochs, batch;
  std::optional<double> epsilon;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> ablate;
};

void apply_overrides(RunConfig& c, const RunOverrides& o);

/// The config file is `config_flag` when given, else the path in
/// DESHADOW_CONFIG, else none. Throws IoError/ConfigError on a bad file.
std::optional<std::filesystem::path> config_path(const std::optional<std::filesystem::path>& config_flag);

/// Defaults, then the config file, then the overrides.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_flag,
                         const RunOverrides& overrides);

/// Exit codes of dispatch.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kConfig = 5,
  kTraining = 6,
  kArgument = 7,
};

/// Runs one subcommand. Errors are reported as a single JSON line on stderr.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace deshadow::cli
