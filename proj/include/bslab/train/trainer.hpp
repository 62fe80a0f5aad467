#ifndef BSLAB_TRAIN_TRAINER_HPP_
#define BSLAB_TRAIN_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bslab/env/layout.hpp"
#include "bslab/policy/checkpoint.hpp"
#include "bslab/train/config.hpp"
#include "bslab/train/ppo.hpp"

namespace bslab::train {

struct CurveRow {
  std::int64_t step = 0;
  double mean_deliveries = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

inline constexpr const char* kCurveHeader = "step,mean_deliveries,policy_loss,value_loss,entropy,clip_fraction";

void write_curve(const std::filesystem::path& path, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curve(const std::filesystem::path& path);

struct CheckpointRecord {
  std::filesystem::path dir;
  std::int64_t env_steps = 0;
  double eval_score = 0.0;
};

struct IterationReport {
  std::int64_t iteration = 0;
  std::int64_t env_steps = 0;
  UpdateStats stats;
  int finished_episodes = 0;
  double mean_train_score = 0.0;  // over episodes finished this iteration
  bool checkpointed = false;
  double eval_score = 0.0;        // valid when checkpointed
  double seconds = 0.0;           // wall time of this iteration
};

using ProgressFn = std::function<void(const IterationReport&)>;

// Layout of a run directory:
//   config.txt                      resolved config
//   curve.csv                       one row per checkpoint
//   checkpoints/step_<12 digits>/   manifest.txt params.bin meta.json
//                                   optimizer.txt optimizer.bin runner.json
std::filesystem::path checkpoint_dir_for(const std::filesystem::path& run_dir, std::int64_t env_steps);

// Trains until config.total_env_steps. With `resume_from` set, restores
// parameters, optimizer, env and rng state from that checkpoint (which must
// come from a run with the same config apart from total_env_steps) and
// truncates curve.csv to rows at or before it.
std::vector<CheckpointRecord> train(const TrainConfig& config, const env::LayoutPtr& layout,
                                    const std::filesystem::path& run_dir,
                                    const ProgressFn& progress = {},
                                    const std::filesystem::path& resume_from = {});

// Checkpoints of one run directory in step order.
std::vector<CheckpointRecord> list_checkpoints(const std::filesystem::path& run_dir);

// Max eval score over all runs; ties go to the later training step, then to
// the earlier run. Throws ContractError when there is no checkpoint at all.
CheckpointRecord select_best_checkpoint(const std::vector<std::vector<CheckpointRecord>>& runs);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_TRAINER_HPP_
