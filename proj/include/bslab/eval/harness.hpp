#ifndef BSLAB_EVAL_HARNESS_HPP_
#define BSLAB_EVAL_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bslab/env/layout.hpp"
#include "bslab/policy/checkpoint.hpp"
#include "bslab/train/episode.hpp"

namespace bslab::eval {

struct SampleStats {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  int n = 0;

  // Normal-approximation 95% interval.
  double ci_low() const;
  double ci_high() const;
  friend bool operator==(const SampleStats&, const SampleStats&) = default;
};

SampleStats summarize(const std::vector<double>& xs);

// Runs fn(i) for i in [0, n) on up to `threads` threads. Results must be
// written by index so the outcome does not depend on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct SweepRow {
  std::string layout;
  double omega_dishes = 0.0;  // omega_1 = omega_3
  double omega_onions = 0.0;  // omega_2
  int episodes = 0;
  SampleStats deliveries;      // by the manipulated seat
  SampleStats onions_in_pot;   // by the manipulated seat
  SampleStats platings;        // by the manipulated seat
  SampleStats score;           // team
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
};

struct SweepOptions {
  std::vector<double> grid{-1.0, 0.0, 1.0};
  int episodes = 25;
  bool greedy = false;
  std::uint64_t seed = 0;
  int manipulated_seat = 1;
  int episode_length = 0;  // 0: the checkpoint's training episode length
  int threads = 1;
};

// Cells run with omega_dishes as the outer loop and omega_onions inner, both
// in grid order. Episode e of cell c uses RngStream::derive(seed, {c, e}).
// The other seat plays at omega = 0. Throws DataError when the checkpoint was
// trained on another layout or has no omega input; an SP checkpoint only adds
// a warning.
SweepResult weight_sweep(const policy::Checkpoint& checkpoint, const env::LayoutPtr& layout,
                         const SweepOptions& options);

// Mean team score of self-play at omega = 0; episode e uses derive(seed, {e}).
SampleStats self_play_stats(const policy::PolicyParameters& params, const env::LayoutPtr& layout,
                            int episodes, std::uint64_t seed, bool greedy);

struct LabeledCheckpoint {
  std::string label;
  policy::Checkpoint checkpoint;
};

struct CrossplayMatrix {
  std::string layout;
  int episodes = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<SampleStats>> scores;  // [row = seat 0][col = seat 1]
};

struct CrossplayOptions {
  int episodes = 10;
  bool greedy = false;
  std::uint64_t seed = 0;
  int episode_length = 0;  // 0: first checkpoint's training episode length
  int threads = 1;
};

// Every ordered pairing at omega = 0; checkpoints with and without the omega
// input mix freely. Each pairing replays the same episode
// seeds, so permuting the inputs permutes the matrix exactly.
CrossplayMatrix crossplay(const std::vector<LabeledCheckpoint>& checkpoints,
                          const env::LayoutPtr& layout, const CrossplayOptions& options);

// CSV forms. Columns are fixed; numbers use the shortest round-trip form, so
// parse followed by export reproduces the file byte for byte.
inline constexpr const char* kSweepHeader =
    "layout,omega_dishes,omega_onions,episodes,deliveries_mean,deliveries_sd,"
    "onions_in_pot_mean,onions_in_pot_sd,platings_mean,platings_sd,score_mean,score_sd";
inline constexpr const char* kSweepSummaryHeader = "layout,omega_dishes,omega_onions,score_mean";
inline constexpr const char* kCrossplayHeader = "row,col,episodes,score_mean,score_sd";

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);
// One row per layout: the cell with the highest mean score (first in row
// order on ties).
std::vector<SweepRow> sweep_argmax(const std::vector<SweepRow>& rows);
std::string sweep_summary_csv(const std::vector<SweepRow>& rows);
std::string crossplay_csv(const CrossplayMatrix& matrix);

void export_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& csv_path,
                  const std::filesystem::path& summary_path);
void export_crossplay(const CrossplayMatrix& matrix, const std::filesystem::path& csv_path);

}  // namespace bslab::eval

#endif  // BSLAB_EVAL_HARNESS_HPP_
