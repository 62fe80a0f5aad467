#ifndef BSLAB_POLICY_CHECKPOINT_HPP_
#define BSLAB_POLICY_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/policy/network.hpp"

namespace bslab::policy {

enum class Dtype { F32, F64 };

struct NamedArray {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
};

// A text manifest (one line per array: name dtype rows,cols byte_offset)
// plus a little-endian blob.
void write_arrays(const std::filesystem::path& manifest_path,
                  const std::filesystem::path& blob_path,
                  const std::vector<NamedArray>& arrays, Dtype dtype);
std::vector<NamedArray> read_arrays(const std::filesystem::path& manifest_path,
                                    const std::filesystem::path& blob_path);

// Everything a checkpoint records besides the parameters themselves.
struct CheckpointMeta {
  std::string layout;
  std::string mode;  // "SP" or "BS"
  std::uint64_t seed = 0;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  double eval_score = 0.0;
  int episode_length = 0;
  std::string behavior_spec;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  PolicyParameters params;
  CheckpointMeta meta;
};

nlohmann::json config_to_json(const PolicyConfig& config);
PolicyConfig config_from_json(const nlohmann::json& j);

// Writes manifest.txt, params.bin and meta.json into `dir` (created).
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
// Throws DataError when files are missing or inconsistent with the config.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace bslab::policy

#endif  // BSLAB_POLICY_CHECKPOINT_HPP_
