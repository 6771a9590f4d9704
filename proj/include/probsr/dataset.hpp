// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "probsr/fem.hpp"

namespace probsr
{

enum class Split
{
  kTrain,
  kTest
};

std::string to_string(Split split);
Split parse_split(const std::string &text);

/// Which samples get an HR ground-truth solve.
enum class HrPolicy
{
  kNone,
  kTestOnly,
  kAll
};

struct ManifestEntry
{
  int id = 0;
  ForcingParams params;
  std::string lr_path;                 // relative to the manifest directory
  std::optional<std::string> hr_path;  // idem
  Split split = Split::kTrain;
  std::uint32_t crc32_lr = 0;
  std::optional<std::uint32_t> crc32_hr;
};

/// JSON-lines manifest: a header record {"seed", "l", "n", "version", ...}
/// followed by one record per sample.
struct Manifest
{
  std::uint64_t seed = 0;
  int l = 0;
  int n = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ManifestEntry> entries;

  std::string to_jsonl() const;
  static Manifest from_jsonl(const std::string &text, const std::string &origin = "<memory>");
};

/// Number of test samples for an 80/20 split of n.
int test_count(int n);

/// Draw n forcing parameters, solve each LR system (and HR systems per
/// `hr_policy`), and write PSRF fields plus `manifest.jsonl` under `out_dir`.
/// Every byte written is a function of (n, l, seed, hr_policy, config).
Manifest generate(int n, int l, std::uint64_t seed, HrPolicy hr_policy, const std::filesystem::path &out_dir,
                  const nlohmann::json &config = nlohmann::json::object());

/// Convenience overload: `with_hr` generates HR truth for the test split.
Manifest generate(int n, int l, std::uint64_t seed, bool with_hr, const std::filesystem::path &out_dir);

/// A loaded, validated corpus with lazy field access.
class Dataset
{
public:
  /// Reads the manifest and verifies existence, checksum and shape of every
  /// referenced field file. Throws MissingFileError, ChecksumError or ShapeError.
  static Dataset load(const std::filesystem::path &manifest_path);

  const Manifest &manifest() const { return manifest_; }
  const std::filesystem::path &root() const { return root_; }
  Grid lr_grid() const { return Grid(manifest_.l); }
  Grid hr_grid() const { return Grid(4 * manifest_.l); }

  std::size_t size() const { return manifest_.entries.size(); }
  const ManifestEntry &entry(std::size_t index) const { return manifest_.entries.at(index); }
  std::vector<std::size_t> indices(Split split) const;

  Field lr(std::size_t index) const;
  /// Throws ConfigError when the sample has no HR truth.
  Field hr(std::size_t index) const;

private:
  Manifest manifest_;
  std::filesystem::path root_;
};

}  // namespace probsr
