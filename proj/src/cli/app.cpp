#include "bslab/cli/app.hpp"

#include <signal.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bslab/common/error.hpp"
#include "bslab/common/text.hpp"
#include "bslab/env/layout.hpp"
#include "bslab/eval/harness.hpp"
#include "bslab/policy/checkpoint.hpp"
#include "bslab/server/registry.hpp"
#include "bslab/server/service.hpp"
#include "bslab/server/store.hpp"
#include "bslab/train/config.hpp"
#include "bslab/train/trainer.hpp"

#ifndef BSLAB_BUILD_ID
#define BSLAB_BUILD_ID "unknown"
#endif

namespace bslab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Every command that writes outputs records how to reproduce them.
struct Manifest {
  json doc;

  Manifest(const std::string& command, const std::vector<std::string>& args) {
    doc = {{"command", command},
           {"argv", args},
           {"build", BSLAB_BUILD_ID},
           {"started_at", utc_now()},
           {"cwd", fs::current_path().string()}};
  }

  void write(const fs::path& out_dir) {
    doc["finished_at"] = utc_now();
    write_file(out_dir / "manifest.json", doc.dump(2) + "\n");
  }
};

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  for (const auto& cell : split_csv_line(text)) grid.push_back(parse_double(cell, "--grid value"));
  if (grid.empty()) throw ConfigError("--grid needs at least one value");
  return grid;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& cell : split_csv_line(text)) {
    const auto v = parse_int(cell, "--seeds value");
    if (v < 0) throw ConfigError("seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (seeds.empty()) throw ConfigError("--seeds needs at least one value");
  return seeds;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string layout;
  std::string seeds;
  std::string out = "runs";
  std::vector<std::string> sets;
  bool resume = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  // File first, then flags; everything is validated in one pass so every
  // bad key is reported together.
  std::vector<std::pair<std::string, std::string>> kv;
  if (!a.config.empty()) {
    if (!fs::exists(a.config)) throw ConfigError("config file " + a.config + " does not exist");
    kv = train::parse_key_values(read_file(a.config));
  }
  if (!a.layout.empty()) kv.emplace_back("layout", a.layout);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  train::TrainConfig base;
  train::apply_settings(base, kv);
  base.validate();
  const auto layout = env::load_named_layout(base.layout);
  const auto seeds = a.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seeds(a.seeds);

  const fs::path out_dir = a.out;
  Manifest manifest("train", argv);
  manifest.doc["config_path"] = a.config;
  manifest.doc["config"] = format_config(base);
  manifest.doc["seeds"] = seeds;
  manifest.doc["out"] = out_dir.string();

  std::vector<std::vector<train::CheckpointRecord>> runs;
  json run_docs = json::array();
  for (const auto seed : seeds) {
    auto config = base;
    config.seed = seed;
    const fs::path run_dir = out_dir / ("seed_" + std::to_string(seed));
    fs::path resume_from;
    if (a.resume) {
      const auto existing = train::list_checkpoints(run_dir);
      if (!existing.empty()) resume_from = existing.back().dir;
    }
    if (!resume_from.empty()) out << "seed " << seed << ": resuming from " << resume_from.string() << "\n";
    const auto start = std::chrono::steady_clock::now();
    auto records = train::train(config, layout, run_dir, [&](const train::IterationReport& r) {
      if (a.quiet || !r.checkpointed) return;
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out << "seed " << seed << " step " << r.env_steps << " eval " << format_double(r.eval_score) << " entropy "
          << std::setprecision(4) << r.stats.entropy << " (" << std::setprecision(1) << std::fixed << secs << " s)"
          << std::defaultfloat << std::setprecision(6) << "\n"
          << std::flush;
    }, resume_from);
    records = train::list_checkpoints(run_dir);
    runs.push_back(records);
    run_docs.push_back({{"seed", seed}, {"run_dir", run_dir.string()}, {"checkpoints", records.size()}});
  }

  const auto best = train::select_best_checkpoint(runs);
  const json best_doc{{"checkpoint", fs::relative(best.dir, out_dir).string()},
                      {"env_steps", best.env_steps},
                      {"eval_score", best.eval_score}};
  write_file(out_dir / "best.json", best_doc.dump(2) + "\n");
  const fs::path link = out_dir / "best";
  std::error_code ec;
  fs::remove(link, ec);
  fs::create_directory_symlink(fs::relative(best.dir, out_dir), link, ec);
  out << "best checkpoint: " << best.dir.string() << " (eval " << format_double(best.eval_score) << ")\n";

  manifest.doc["runs"] = run_docs;
  manifest.doc["best"] = best_doc;
  manifest.write(out_dir);
  return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::string checkpoint;
  std::string layout;
  std::string out = "sweep";
  std::string grid = "-1,0,1";
  int episodes = 25;
  std::uint64_t seed = 0;
  int seat = 1;
  int episode_length = 0;
  int threads = 1;
  bool greedy = false;
};

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const auto ck = policy::load_checkpoint(a.checkpoint);
  const auto layout = env::load_named_layout(a.layout.empty() ? ck.meta.layout : a.layout);
  eval::SweepOptions o;
  o.grid = parse_grid(a.grid);
  o.episodes = a.episodes;
  o.seed = a.seed;
  o.greedy = a.greedy;
  o.manipulated_seat = a.seat;
  o.episode_length = a.episode_length;
  o.threads = a.threads;
  if (o.episodes <= 0) throw ConfigError("--episodes must be positive");
  const auto result = eval::weight_sweep(ck, layout, o);
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";

  const fs::path out_dir = a.out;
  eval::export_sweep(result.rows, out_dir / "sweep.csv", out_dir / "sweep_summary.csv");
  out << "omega_dishes omega_onions  deliveries  onions_in_pot  platings  score\n";
  for (const auto& r : result.rows) {
    out << std::setw(12) << r.omega_dishes << std::setw(13) << r.omega_onions << std::setw(12) << r.deliveries.mean
        << std::setw(15) << r.onions_in_pot.mean << std::setw(10) << r.platings.mean << std::setw(7) << r.score.mean
        << "\n";
  }
  Manifest manifest("sweep", argv);
  manifest.doc["checkpoint"] = a.checkpoint;
  manifest.doc["layout"] = layout->name;
  manifest.doc["seed"] = a.seed;
  manifest.doc["options"] = {{"grid", o.grid},       {"episodes", o.episodes},
                             {"greedy", o.greedy},   {"manipulated_seat", o.manipulated_seat},
                             {"episode_length", o.episode_length}, {"threads", o.threads}};
  manifest.doc["warnings"] = result.warnings;
  manifest.doc["out"] = out_dir.string();
  manifest.write(out_dir);
  return kExitOk;
}

// ---- crossplay ------------------------------------------------------------

struct CrossplayArgs {
  std::vector<std::string> checkpoints;  // [label=]dir
  std::string layout;
  std::string out = "crossplay";
  int episodes = 10;
  std::uint64_t seed = 0;
  int episode_length = 0;
  int threads = 1;
  bool greedy = false;
};

int cmd_crossplay(const CrossplayArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  std::vector<eval::LabeledCheckpoint> cks;
  for (const auto& spec : a.checkpoints) {
    const auto eq = spec.find('=');
    const std::string dir = eq == std::string::npos ? spec : spec.substr(eq + 1);
    auto ck = policy::load_checkpoint(dir);
    std::string label = eq == std::string::npos ? ck.meta.mode + ":" + fs::path(dir).filename().string()
                                                : spec.substr(0, eq);
    cks.push_back({label, std::move(ck)});
  }
  const auto layout = env::load_named_layout(a.layout.empty() ? cks.front().checkpoint.meta.layout : a.layout);
  eval::CrossplayOptions o;
  o.episodes = a.episodes;
  o.seed = a.seed;
  o.greedy = a.greedy;
  o.episode_length = a.episode_length;
  o.threads = a.threads;
  if (o.episodes <= 0) throw ConfigError("--episodes must be positive");
  const auto m = eval::crossplay(cks, layout, o);
  const fs::path out_dir = a.out;
  eval::export_crossplay(m, out_dir / "crossplay.csv");
  out << "seat0 \\ seat1";
  for (const auto& l : m.labels) out << "  " << l;
  out << "\n";
  for (std::size_t r = 0; r < m.labels.size(); ++r) {
    out << m.labels[r];
    for (const auto& s : m.scores[r]) out << "  " << format_double(s.mean);
    out << "\n";
  }
  Manifest manifest("crossplay", argv);
  manifest.doc["checkpoints"] = a.checkpoints;
  manifest.doc["layout"] = layout->name;
  manifest.doc["seed"] = a.seed;
  manifest.doc["options"] = {{"episodes", o.episodes}, {"greedy", o.greedy}, {"episode_length", o.episode_length}};
  manifest.doc["out"] = out_dir.string();
  manifest.write(out_dir);
  return kExitOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string registry;
  std::string address = "127.0.0.1";
  int port = 8080;
  std::string store = "sessions";
  std::string static_dir;
  std::string protocol;
  std::string layouts;
  int tick_ms = 200;
  double control_seconds = 60.0;
  double pairwise_seconds = 45.0;
  int threads = 2;
  bool hide_score = false;
  double run_for = 0.0;
};

int cmd_serve(const ServeArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  auto registry = std::make_shared<const server::Registry>(server::Registry::load(a.registry));
  server::ServiceOptions o;
  o.address = a.address;
  if (a.port < 0 || a.port > 65535) throw ConfigError("--port out of range");
  o.port = static_cast<unsigned short>(a.port);
  o.store_dir = a.store;
  if (!a.static_dir.empty()) o.static_dir = fs::path(a.static_dir);
  o.session.tick_ms = a.tick_ms;
  o.session.control_round_seconds = a.control_seconds;
  o.session.pairwise_round_seconds = a.pairwise_seconds;
  o.session.show_score = !a.hide_score;
  o.threads = a.threads;
  if (!a.layouts.empty()) o.session.layout_pool = split_csv_line(a.layouts);
  if (!a.protocol.empty()) {
    // Refuse to start when the requested protocol cannot be served.
    const auto protocol = server::parse_protocol(a.protocol);
    for (const auto& layout : o.session.layout_pool) {
      if (!registry->find(layout, "BS")) throw ConfigError("registry has no BS checkpoint for layout '" + layout + "'");
      if (protocol == server::Protocol::Pairwise && !registry->find(layout, "SP")) {
        throw ConfigError("registry has no SP checkpoint for layout '" + layout + "'");
      }
    }
  }

  // Signals are taken synchronously by this thread; workers inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  server::Service service(registry, o);
  const auto port = service.start();
  Manifest manifest("serve", argv);
  manifest.doc["registry"] = registry->summary();
  manifest.doc["port"] = port;
  manifest.doc["store"] = a.store;
  manifest.write(a.store);
  out << "serving on http://" << a.address << ":" << port << " (" << registry->entries().size()
      << " checkpoints, store " << a.store << ")\n"
      << std::flush;
  if (a.run_for > 0) {
    timespec ts{static_cast<time_t>(a.run_for), static_cast<long>((a.run_for - static_cast<time_t>(a.run_for)) * 1e9)};
    sigtimedwait(&set, nullptr, &ts);
  } else {
    int sig = 0;
    sigwait(&set, &sig);
  }
  out << "shutting down\n" << std::flush;
  service.stop();
  pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
  return kExitOk;
}

// ---- replay / export ------------------------------------------------------

int cmd_replay(const std::string& file, bool ascii, std::ostream& out) {
  const auto events = server::read_events(file);
  const auto rounds = server::replay_events(events, ascii);
  int mismatches = 0;
  for (const auto& r : rounds) {
    const bool ok = r.logged_score == r.replayed_score;
    mismatches += !ok;
    out << r.session_id << " round " << r.round << " " << r.layout << " logged " << r.logged_score << " replayed "
        << r.replayed_score << (ok ? " ok" : " MISMATCH") << "\n";
    for (const auto& frame : r.frames) out << frame << "\n";
  }
  out << rounds.size() << " rounds, " << mismatches << " mismatches\n";
  return mismatches == 0 ? kExitOk : kExitData;
}

int cmd_export(const std::string& store, const std::string& out_dir, const std::vector<std::string>& argv,
               std::ostream& out) {
  if (!fs::is_directory(store)) throw DataError("session store " + store + " is not a directory");
  server::export_sessions(store, out_dir);
  Manifest manifest("export", argv);
  manifest.doc["store"] = store;
  manifest.doc["out"] = out_dir;
  manifest.write(out_dir);
  out << "wrote " << (fs::path(out_dir) / "rounds.csv").string() << " and "
      << (fs::path(out_dir) / "sessions.jsonl").string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Behavior Shaping laboratory for two-chef Overcooked", "bslab"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train SP or BS agents, one run per seed");
  train->add_option("--config", train_args.config, "key = value config file");
  train->add_option("--layout", train_args.layout, "Layout name (overrides the config)");
  train->add_option("--seeds,--seed", train_args.seeds, "Comma-separated seeds (default: config seed)");
  train->add_option("--out", train_args.out, "Output directory")->capture_default_str();
  train->add_option("--set", train_args.sets, "Config override key=value (repeatable)");
  train->add_flag("--resume", train_args.resume, "Continue each seed from its latest checkpoint");
  train->add_flag("--quiet", train_args.quiet, "No progress lines");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run the omega grid sweep for one checkpoint");
  sweep->add_option("--checkpoint", sweep_args.checkpoint, "Checkpoint directory")->required();
  sweep->add_option("--layout", sweep_args.layout, "Layout (default: the checkpoint's)");
  sweep->add_option("--out", sweep_args.out, "Output directory")->capture_default_str();
  sweep->add_option("--grid", sweep_args.grid, "Comma-separated omega values")->capture_default_str();
  sweep->add_option("--episodes", sweep_args.episodes, "Episodes per cell")->capture_default_str();
  sweep->add_option("--seed", sweep_args.seed, "Evaluation seed")->capture_default_str();
  sweep->add_option("--seat", sweep_args.seat, "Manipulated seat")->check(CLI::Range(0, 1))->capture_default_str();
  sweep->add_option("--episode-length", sweep_args.episode_length, "0: the checkpoint's");
  sweep->add_option("--threads", sweep_args.threads, "Worker threads")->capture_default_str();
  sweep->add_flag("--greedy", sweep_args.greedy, "Argmax actions instead of sampling");

  CrossplayArgs cross_args;
  auto* cross = app.add_subcommand("crossplay", "Pair checkpoints in every seat order");
  cross->add_option("--checkpoint", cross_args.checkpoints, "[label=]checkpoint directory (repeatable)")
      ->required();
  cross->add_option("--layout", cross_args.layout, "Layout (default: the first checkpoint's)");
  cross->add_option("--out", cross_args.out, "Output directory")->capture_default_str();
  cross->add_option("--episodes", cross_args.episodes, "Episodes per pairing")->capture_default_str();
  cross->add_option("--seed", cross_args.seed, "Evaluation seed")->capture_default_str();
  cross->add_option("--episode-length", cross_args.episode_length, "0: the first checkpoint's");
  cross->add_option("--threads", cross_args.threads, "Worker threads")->capture_default_str();
  cross->add_flag("--greedy", cross_args.greedy, "Argmax actions instead of sampling");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the participant-facing session service");
  serve->add_option("--registry", serve_args.registry, "Directory searched for checkpoints")
      ->required()
      ->check(CLI::ExistingDirectory);
  serve->add_option("--address", serve_args.address, "Listen address")->capture_default_str();
  serve->add_option("--port", serve_args.port, "Listen port (0: any free port)")->capture_default_str();
  serve->add_option("--store", serve_args.store, "Session log directory")->capture_default_str();
  serve->add_option("--static", serve_args.static_dir, "Directory of browser assets served under /");
  serve->add_option("--protocol", serve_args.protocol, "Refuse to start unless this protocol can be served");
  serve->add_option("--layouts", serve_args.layouts, "Comma-separated layout pool");
  serve->add_option("--tick-ms", serve_args.tick_ms, "Tick interval")->capture_default_str();
  serve->add_option("--control-seconds", serve_args.control_seconds, "ControlStudy round length")
      ->capture_default_str();
  serve->add_option("--pairwise-seconds", serve_args.pairwise_seconds, "Pairwise round length")
      ->capture_default_str();
  serve->add_option("--threads", serve_args.threads, "Network worker threads")->capture_default_str();
  serve->add_flag("--hide-score", serve_args.hide_score, "Do not show the running score");
  serve->add_option("--run-for", serve_args.run_for, "Stop after this many seconds (0: until SIGINT/SIGTERM)");

  std::string replay_file;
  bool ascii = false;
  auto* replay = app.add_subcommand("replay", "Re-simulate logged rounds and compare scores");
  replay->add_option("file", replay_file, "Session JSONL log")->required();
  replay->add_flag("--ascii", ascii, "Print one text frame per tick");

  std::string store_dir, export_out = "export";
  auto* exp = app.add_subcommand("export", "Write rounds.csv and sessions.jsonl from a session store");
  exp->add_option("--store", store_dir, "Session log directory")->required();
  exp->add_option("--out", export_out, "Output directory")->capture_default_str();

  std::string manifest_path;
  auto* rerun = app.add_subcommand("rerun", "Repeat the command recorded in a manifest.json");
  rerun->add_option("manifest", manifest_path, "manifest.json")->required();

  std::vector<std::string> argv_store{"bslab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args, args, out);
    if (*sweep) return cmd_sweep(sweep_args, args, out, err);
    if (*cross) return cmd_crossplay(cross_args, args, out);
    if (*serve) return cmd_serve(serve_args, args, out);
    if (*replay) return cmd_replay(replay_file, ascii, out);
    if (*exp) return cmd_export(store_dir, export_out, args, out);
    if (*rerun) {
      const auto doc = json::parse(read_file(manifest_path));
      if (doc.value("build", "") != BSLAB_BUILD_ID) {
        err << "note: manifest was written by build " << doc.value("build", "?") << ", this is " << BSLAB_BUILD_ID
            << "\n";
      }
      return run_cli(doc.at("argv").get<std::vector<std::string>>(), out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace bslab::cli
