#ifndef BSLAB_SERVER_STORE_HPP_
#define BSLAB_SERVER_STORE_HPP_

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/env/layout.hpp"

namespace bslab::server {

// Append-only JSONL event log, one file per session (<dir>/<session>.jsonl).
// Every event carries "session_id", "seq" and "event".
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  void append(const std::string& session_id, nlohmann::json event);
  std::vector<std::filesystem::path> files() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, long long> seq_;
};

// Parses a JSONL log. A damaged or cut-off line raises ParseError naming
// the file and line.
std::vector<nlohmann::json> read_events(const std::filesystem::path& path);

// One row per completed round; columns in kRoundsHeader order.
inline constexpr const char* kRoundsHeader =
    "session_id,participant_id,protocol,round,layout,condition,chosen_condition,ai_checkpoint,"
    "dishes,onions,omega_1,omega_2,omega_3,settings_visible,steps,score,incentive,"
    "enjoyable,predictable,effective,followed_settings,preference";

std::string rounds_csv(const std::vector<std::vector<nlohmann::json>>& sessions);

// Writes <out>/rounds.csv and <out>/sessions.jsonl (all events, lossless).
void export_sessions(const std::filesystem::path& store_dir, const std::filesystem::path& out_dir);
std::string export_rounds_csv(const std::filesystem::path& store_dir);
std::string export_jsonl(const std::filesystem::path& store_dir);

struct ReplayedRound {
  std::string session_id;
  int round = 0;
  std::string layout;
  int logged_score = 0;
  int replayed_score = 0;
  std::vector<std::string> frames;  // ASCII frames, one per tick, when requested
};

// Re-runs every logged round_end trajectory through the environment.
std::vector<ReplayedRound> replay_events(const std::vector<nlohmann::json>& events, bool ascii,
                                         const std::filesystem::path& layout_dir = env::default_layout_dir());

}  // namespace bslab::server

#endif  // BSLAB_SERVER_STORE_HPP_
