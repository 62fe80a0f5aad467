#include "bslab/server/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bslab/common/error.hpp"
#include "bslab/common/text.hpp"
#include "bslab/env/world.hpp"

namespace bslab::server {

namespace fs = std::filesystem;
using nlohmann::json;

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void SessionStore::append(const std::string& session_id, json event) {
  std::lock_guard lock(mu_);
  event["session_id"] = session_id;
  event["seq"] = seq_[session_id]++;
  std::ofstream out(dir_ / (session_id + ".jsonl"), std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to session log for " + session_id);
  out << event.dump() << '\n';
  out.flush();
}

std::vector<fs::path> SessionStore::files() const {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir_)) {
    if (e.path().extension() == ".jsonl") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<json> read_events(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<json> events;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
    pos = terminated ? nl + 1 : text.size();
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       (terminated ? " is not valid JSON" : " is truncated"));
    }
    if (!events.back().is_object() || !events.back().contains("event")) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + " is not an event record");
    }
  }
  return events;
}

namespace {

std::vector<std::vector<json>> load_store(const fs::path& store_dir) {
  std::vector<std::vector<json>> sessions;
  if (!fs::exists(store_dir)) return sessions;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(store_dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) sessions.push_back(read_events(f));
  return sessions;
}

std::string bucket(const json& b, const char* key) {
  return b.contains(key) ? std::to_string(b[key].get<int>()) : "";
}

}  // namespace

std::string rounds_csv(const std::vector<std::vector<json>>& sessions) {
  std::string out = std::string(kRoundsHeader) + "\n";
  for (const auto& events : sessions) {
    json session;
    std::map<int, json> surveys;
    std::map<int, std::string> preferences;  // by pair
    for (const auto& e : events) {
      const auto kind = e.at("event").get<std::string>();
      if (kind == "session_created") session = e.at("session");
      if (kind == "survey") surveys[e.at("round").get<int>()] = e.at("buckets");
      if (kind == "preference") preferences[e.at("pair").get<int>()] = e.at("answer").get<std::string>();
    }
    if (session.is_null()) continue;
    for (const auto& e : events) {
      if (e.at("event") != "round_end") continue;
      const int round = e.at("round").get<int>();
      const auto& spec = e.at("spec");
      const auto& w = e.at("omega");
      std::string dishes, onions;
      if (!spec.at("settings").is_null()) {
        dishes = spec["settings"].at("dishes").get<std::string>();
        onions = spec["settings"].at("onions").get<std::string>();
      }
      const json b = surveys.count(round) ? surveys[round] : json::object();
      const int pair = spec.at("pair").get<int>();
      std::string row;
      row += session.at("session_id").get<std::string>() + ",";
      row += session.at("participant_id").get<std::string>() + ",";
      row += session.at("protocol").get<std::string>() + ",";
      row += std::to_string(round) + ",";
      row += spec.at("layout").get<std::string>() + ",";
      row += spec.at("condition").get<std::string>() + ",";
      row += (spec.at("chosen").is_null() ? std::string() : spec["chosen"].get<std::string>()) + ",";
      row += spec.at("ai_checkpoint").get<std::string>() + ",";
      row += dishes + "," + onions + ",";
      for (std::size_t k = 0; k < 3; ++k) row += format_double(w.at(k).get<double>()) + ",";
      row += std::string(spec.at("settings_visible").get<bool>() ? "true" : "false") + ",";
      row += std::to_string(e.at("steps").get<int>()) + ",";
      const int score = e.at("score").get<int>();
      row += std::to_string(score) + "," + std::to_string(score) + ",";
      row += bucket(b, "enjoyable") + "," + bucket(b, "predictable") + "," + bucket(b, "effective") + "," +
             bucket(b, "followed_settings") + ",";
      row += pair >= 0 && preferences.count(pair) ? preferences[pair] : "";
      out += row + "\n";
    }
  }
  return out;
}

std::string export_rounds_csv(const fs::path& store_dir) { return rounds_csv(load_store(store_dir)); }

std::string export_jsonl(const fs::path& store_dir) {
  std::string out;
  for (const auto& events : load_store(store_dir)) {
    for (const auto& e : events) out += e.dump() + "\n";
  }
  return out;
}

void export_sessions(const fs::path& store_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_file(out_dir / "rounds.csv", export_rounds_csv(store_dir));
  write_file(out_dir / "sessions.jsonl", export_jsonl(store_dir));
}

std::vector<ReplayedRound> replay_events(const std::vector<json>& events, bool ascii, const fs::path& layout_dir) {
  std::vector<ReplayedRound> out;
  std::map<std::string, env::LayoutPtr> layouts;
  for (const auto& e : events) {
    if (e.at("event") != "round_end") continue;
    ReplayedRound r;
    r.session_id = e.at("session_id").get<std::string>();
    r.round = e.at("round").get<int>();
    r.layout = e.at("spec").at("layout").get<std::string>();
    r.logged_score = e.at("score").get<int>();
    const int steps = e.at("steps").get<int>();
    if (!layouts.count(r.layout)) layouts[r.layout] = env::load_named_layout(r.layout, layout_dir);
    const auto layout = env::with_episode_length(layouts[r.layout], steps);
    const auto& actions = e.at("actions");
    if (static_cast<int>(actions.size()) != steps) {
      throw DataError("round " + std::to_string(r.round) + " of " + r.session_id + " logs " +
                      std::to_string(actions.size()) + " actions for " + std::to_string(steps) + " steps");
    }
    env::WorldState state = env::reset(layout);
    for (const auto& a : actions) {
      env::JointAction joint{};
      for (std::size_t i = 0; i < 2; ++i) {
        const auto parsed = env::parse_action(a.at(i).get<std::string>());
        if (!parsed) throw DataError("unknown action '" + a.at(i).get<std::string>() + "' in log");
        joint[i] = *parsed;
      }
      auto outcome = env::step(state, joint);
      r.replayed_score += outcome.events[0].delivered + outcome.events[1].delivered;
      state = std::move(outcome.next_state);
      if (ascii) r.frames.push_back(env::render_ascii(state));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bslab::server
