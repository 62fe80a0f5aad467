#include "bslab/train/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bslab/common/error.hpp"
#include "bslab/common/text.hpp"
#include "bslab/env/observe.hpp"
#include "bslab/train/episode.hpp"

namespace bslab::train {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

policy::PolicyConfig policy_config_for(const TrainConfig& c, const env::Layout& layout,
                                       std::size_t k) {
  policy::PolicyConfig pc;
  pc.input_dim = env::observation_size(layout) + static_cast<int>(k);
  pc.hidden_dim = c.hidden_dim;
  pc.mlp_layers = c.mlp_layers;
  pc.recurrent = c.recurrent;
  return pc;
}

// Keys that may differ between the original run and a resumed one.
bool resumable_key(const std::string& key) { return key == "total_env_steps"; }

void check_resume_config(const TrainConfig& now, const TrainConfig& then) {
  const auto a = parse_key_values(format_config(now));
  const auto b = parse_key_values(format_config(then));
  std::vector<std::string> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!resumable_key(a[i].first) && a[i].second != b[i].second) {
      diffs.push_back(a[i].first + " (checkpoint " + b[i].second + ", now " + a[i].second + ")");
    }
  }
  if (!diffs.empty()) {
    std::string msg = "cannot resume: config differs from the checkpoint's run:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw ConfigError(msg);
  }
}

struct RunnerState {
  std::int64_t iteration = 0;
  std::int64_t env_steps = 0;
  std::int64_t next_checkpoint = 0;
  RngStream shuffle;
};

}  // namespace

void write_curve(const fs::path& path, const std::vector<CurveRow>& rows) {
  std::string text = std::string(kCurveHeader) + "\n";
  for (const auto& r : rows) {
    text += std::to_string(r.step) + "," + fmt(r.mean_deliveries) + "," + fmt(r.policy_loss) + "," +
            fmt(r.value_loss) + "," + fmt(r.entropy) + "," + fmt(r.clip_fraction) + "\n";
  }
  write_file(path, text);
}

std::vector<CurveRow> read_curve(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) {
    throw DataError(path.string() + ": missing or unexpected curve header");
  }
  std::vector<CurveRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    CurveRow r;
    char c1, c2, c3, c4, c5;
    ls >> r.step >> c1 >> r.mean_deliveries >> c2 >> r.policy_loss >> c3 >> r.value_loss >> c4 >>
        r.entropy >> c5 >> r.clip_fraction;
    if (!ls || c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',') {
      throw DataError(path.string() + ": malformed row at line " + std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

fs::path checkpoint_dir_for(const fs::path& run_dir, std::int64_t env_steps) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%012lld", static_cast<long long>(env_steps));
  return run_dir / "checkpoints" / name;
}

std::vector<CheckpointRecord> train(const TrainConfig& config, const env::LayoutPtr& base_layout,
                                    const fs::path& run_dir, const ProgressFn& progress,
                                    const fs::path& resume_from) {
  config.validate();
  if (base_layout->name != config.layout) {
    throw ConfigError("layout '" + base_layout->name + "' does not match config layout '" +
                      config.layout + "'");
  }
  const auto layout = env::with_episode_length(base_layout, config.episode_length);
  const auto spec = shaping::parse_spec(config.behavior_spec);
  const auto pconf = policy_config_for(config, *layout, spec.size());

  std::vector<RolloutWorker> workers;
  for (int w = 0; w < config.workers; ++w) {
    workers.emplace_back(layout, spec, config.mode, pconf, config.envs_per_worker, config.seed, w);
  }

  policy::PolicyParameters params;
  AdamState adam;
  RunnerState runner{0, 0, config.checkpoint_interval, RngStream::derive(config.seed, {4})};
  std::vector<CurveRow> curve;
  std::vector<CheckpointRecord> records;

  fs::create_directories(run_dir / "checkpoints");
  if (!resume_from.empty()) {
    const auto ckpt = policy::load_checkpoint(resume_from);
    const auto meta = ckpt.meta.extra;
    TrainConfig then;
    apply_settings(then, parse_key_values(meta.at("train_config").get<std::string>()));
    check_resume_config(config, then);
    params = ckpt.params;
    const auto opt = policy::read_arrays(resume_from / "optimizer.txt", resume_from / "optimizer.bin");
    if (opt.size() != 2 || opt[0].values.size() != params.values.size() ||
        opt[1].values.size() != params.values.size()) {
      throw DataError(resume_from.string() + ": optimizer state does not match parameters");
    }
    const auto rj = nlohmann::json::parse(read_file(resume_from / "runner.json"));
    adam = AdamState{opt[0].values, opt[1].values, rj.at("adam_steps").get<std::int64_t>()};
    runner.iteration = rj.at("iteration").get<std::int64_t>();
    runner.env_steps = rj.at("env_steps").get<std::int64_t>();
    runner.next_checkpoint = rj.at("next_checkpoint").get<std::int64_t>();
    runner.shuffle = RngStream::deserialize(rj.at("shuffle_rng").get<std::string>());
    const auto& wj = rj.at("workers");
    if (wj.size() != workers.size()) throw DataError("runner state worker count mismatch");
    for (std::size_t w = 0; w < workers.size(); ++w) workers[w].restore(wj[w]);
    if (fs::exists(run_dir / "curve.csv")) {
      for (const auto& row : read_curve(run_dir / "curve.csv")) {
        if (row.step <= runner.env_steps) curve.push_back(row);
      }
    }
    for (const auto& r : list_checkpoints(run_dir)) {
      if (r.env_steps <= runner.env_steps) records.push_back(r);
    }
  } else {
    params = policy::init_params(pconf, config.seed);
    adam = AdamState::zeros(params.values.size());
  }
  write_file(run_dir / "config.txt", format_config(config));

  while (runner.env_steps < config.total_env_steps) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = collect_rollouts(workers, params, config.rollout_length,
                                        config.recurrent ? config.segment_length : 0);
    auto update = ppo_update(params, adam, batch, config, runner.shuffle);
    params = std::move(update.params);
    adam = std::move(update.optimizer);
    ++runner.iteration;
    runner.env_steps += config.steps_per_iteration();
    params.train_steps = runner.env_steps;

    IterationReport report;
    report.iteration = runner.iteration;
    report.env_steps = runner.env_steps;
    report.stats = update.stats;
    report.finished_episodes = static_cast<int>(batch.finished.size());
    for (const auto& e : batch.finished) report.mean_train_score += e.score;
    if (!batch.finished.empty()) report.mean_train_score /= static_cast<double>(batch.finished.size());

    const bool last = runner.env_steps >= config.total_env_steps;
    if (runner.env_steps >= runner.next_checkpoint || last) {
      while (runner.next_checkpoint <= runner.env_steps) runner.next_checkpoint += config.checkpoint_interval;
      const std::uint64_t eval_seed =
          RngStream::derive(config.seed, {3, static_cast<std::uint64_t>(runner.env_steps)}).next_u64();
      const double score = evaluate_self_play(params, layout, config.eval_episodes, eval_seed, config.eval_greedy);

      policy::Checkpoint ck;
      ck.params = params;
      ck.meta.layout = config.layout;
      ck.meta.mode = std::string(to_string(config.mode));
      ck.meta.seed = config.seed;
      ck.meta.env_steps = runner.env_steps;
      ck.meta.updates = runner.iteration;
      ck.meta.eval_score = score;
      ck.meta.episode_length = config.episode_length;
      ck.meta.behavior_spec = config.behavior_spec;
      ck.meta.extra = {{"train_config", format_config(config)},
                       {"eval_episodes", config.eval_episodes},
                       {"eval_greedy", config.eval_greedy}};
      const auto dir = checkpoint_dir_for(run_dir, runner.env_steps);
      policy::save_checkpoint(dir, ck);
      policy::write_arrays(dir / "optimizer.txt", dir / "optimizer.bin",
                           {{"adam.m", 1, static_cast<int>(adam.m.size()), adam.m},
                            {"adam.v", 1, static_cast<int>(adam.v.size()), adam.v}},
                           policy::Dtype::F64);
      nlohmann::json rj{{"iteration", runner.iteration},
                        {"env_steps", runner.env_steps},
                        {"next_checkpoint", runner.next_checkpoint},
                        {"adam_steps", adam.steps},
                        {"shuffle_rng", runner.shuffle.serialize()},
                        {"workers", nlohmann::json::array()}};
      for (const auto& w : workers) rj["workers"].push_back(w.to_json());
      write_file(dir / "runner.json", rj.dump());

      curve.push_back({runner.env_steps, score, update.stats.policy_loss, update.stats.value_loss,
                       update.stats.entropy, update.stats.clip_fraction});
      write_curve(run_dir / "curve.csv", curve);
      records.push_back({dir, runner.env_steps, score});
      report.checkpointed = true;
      report.eval_score = score;
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) progress(report);
  }
  return records;
}

std::vector<CheckpointRecord> list_checkpoints(const fs::path& run_dir) {
  std::vector<CheckpointRecord> out;
  const auto root = run_dir / "checkpoints";
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "meta.json")) continue;
    const auto meta = nlohmann::json::parse(read_file(entry.path() / "meta.json"));
    out.push_back({entry.path(), meta.at("env_steps").get<std::int64_t>(),
                   meta.at("eval_score").get<double>()});
  }
  std::sort(out.begin(), out.end(),
            [](const CheckpointRecord& a, const CheckpointRecord& b) { return a.env_steps < b.env_steps; });
  return out;
}

CheckpointRecord select_best_checkpoint(const std::vector<std::vector<CheckpointRecord>>& runs) {
  const CheckpointRecord* best = nullptr;
  for (const auto& run : runs) {
    for (const auto& r : run) {
      if (!best || r.eval_score > best->eval_score ||
          (r.eval_score == best->eval_score && r.env_steps > best->env_steps)) {
        best = &r;
      }
    }
  }
  if (!best) throw ContractError("select_best_checkpoint: no checkpoints given");
  return *best;
}

}  // namespace bslab::train
