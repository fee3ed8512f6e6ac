#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "charlink/eval.hpp"
#include "charlink/ngram.hpp"
#include "charlink/trainer.hpp"

namespace charlink {

/// An error raised by one stage of the end-to-end run.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Settings for an end-to-end run, read from a `key = value` file (`#`
/// starts a comment). Relative paths resolve against the config's directory.
///
/// Either `kb` plus at least one of `train_ee` / `train_me` must be given,
/// or `synthetic_entities` to generate a cipher task into `out_dir/data`.
struct RunConfig {
  std::optional<std::filesystem::path> kb;
  std::optional<std::filesystem::path> aliases;
  std::optional<std::filesystem::path> hrl_map;
  std::optional<std::filesystem::path> train_ee;
  std::optional<std::filesystem::path> train_me;
  std::optional<std::filesystem::path> test_mentions;
  std::filesystem::path out_dir;

  std::optional<std::size_t> synthetic_entities;
  std::uint64_t synthetic_seed = 1;
  double synthetic_alias_fraction = 0.0;

  std::size_t dim = 300;
  WindowSet windows = WindowSet::defaults();
  bool lowercase = false;
  double init_scale = 0.05;
  double dev_fraction = 0.05;
  std::size_t top_k = 30;
  unsigned workers = 1;
  TrainConfig train;

  /// Throws StageError("config", ...) on unknown keys, bad values or missing
  /// required inputs.
  static RunConfig parse(const std::filesystem::path& path);
  static RunConfig parse_text(const std::string& text, const std::filesystem::path& base_dir);

  /// Effective settings as ordered key/value strings.
  std::map<std::string, std::string> effective() const;
};

struct RunResult {
  TrainReport train_report;
  std::optional<RecallReport> recall;
  std::filesystem::path manifest;
};

/// load -> vocabulary -> train -> index -> retrieve -> evaluate. Every
/// artifact is written as `<name>.partial` and renamed when its stage
/// completes; a failing stage throws StageError and leaves its partial file.
RunResult run_pipeline(const RunConfig& cfg);

/// FNV-1a 64-bit digest of a file, hex encoded.
std::string file_digest(const std::filesystem::path& path);

}  // namespace charlink
