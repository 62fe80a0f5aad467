#include <cmath>
#include <numeric>

#include "bslab/common/error.hpp"
#include "bslab/env/observe.hpp"
#include "bslab/train/adam.hpp"
#include "bslab/train/config.hpp"
#include "bslab/train/gae.hpp"
#include "bslab/train/ppo.hpp"
#include "bslab/train/rollout.hpp"
#include "bslab/train/trainer.hpp"
#include "doctest.h"
#include "support/env_scripts.hpp"
#include "support/numeric_oracles.hpp"
#include "support/tempdir.hpp"

using namespace bslab;
using namespace bslab::train;

namespace {

using testsupport::oracle_gae;

TrainConfig tiny_config() {
  TrainConfig c;
  c.layout = "cramped_room";
  c.mode = Mode::BS;
  c.seed = 11;
  c.workers = 2;
  c.envs_per_worker = 2;
  c.rollout_length = 50;
  c.episode_length = 40;
  c.hidden_dim = 16;
  c.mlp_layers = 1;
  c.minibatches = 4;
  c.epochs = 2;
  c.total_env_steps = 400;
  c.checkpoint_interval = 200;
  c.eval_episodes = 2;
  return c;
}

env::LayoutPtr cramped() { return env::load_named_layout("cramped_room"); }

policy::PolicyConfig policy_for(const env::LayoutPtr& layout, int hidden, bool recurrent) {
  policy::PolicyConfig pc;
  pc.input_dim = env::observation_size(*layout) + 3;
  pc.hidden_dim = hidden;
  pc.mlp_layers = 1;
  pc.recurrent = recurrent;
  return pc;
}

}  // namespace

TEST_CASE("GAE hand-checked examples") {
  SUBCASE("all zero") {
    const auto g = compute_gae(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0),
                               std::vector<char>(5, 0), 0.0, 0.99, 0.99);
    for (double a : g.advantages) CHECK(a == 0.0);
  }
  SUBCASE("single terminal step") {
    const auto g = compute_gae(std::vector<double>{1.0}, std::vector<double>{0.0},
                               std::vector<char>{1}, 5.0, 0.99, 0.99);
    CHECK(g.advantages[0] == 1.0);
    CHECK(g.returns[0] == 1.0);
  }
  SUBCASE("three-step stream against the oracle") {
    const std::vector<double> r{0, 0, 1}, v{0.5, 0.5, 0.5};
    const std::vector<char> d{0, 0, 0};
    const auto o = oracle_gae(r, v, d, 0.0, 0.99, 0.99);
    // delta = (-0.005, -0.005, 0.5); A2 = 0.5, A1 = -0.005 + 0.9801 * 0.5, ...
    CHECK(o.adv[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(o.adv[1] == doctest::Approx(-0.005 + 0.9801 * 0.5).epsilon(1e-15));
    CHECK(o.adv[0] == doctest::Approx(-0.005 + 0.9801 * (-0.005 + 0.9801 * 0.5)).epsilon(1e-15));
    const auto g = compute_gae(r, v, d, 0.0, 0.99, 0.99);
    for (int t = 0; t < 3; ++t) {
      CHECK(std::abs(g.advantages[t] - o.adv[t]) <= 1e-10);
      CHECK(std::abs(g.returns[t] - o.ret[t]) <= 1e-10);
    }
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(compute_gae(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0},
                                std::vector<char>{0}, 0, 0.9, 0.9),
                    ContractError);
  }
}

TEST_CASE("GAE matches the scalar oracle on 100 random streams") {
  CHECK(testsupport::gae_oracle_worst(100, 3) <= 1e-10);
}

TEST_CASE("GAE lambda limits") {
  const auto worst = testsupport::gae_lambda_limits_worst(20, 3);
  CHECK(worst[0] <= 1e-10);  // lambda = 0: one-step TD errors
  CHECK(worst[1] <= 1e-10);  // lambda = 1: discounted returns minus values
}

TEST_CASE("advantage normalization") {
  const auto z = normalize({1.0, 2.0, 3.0, 4.0, 10.0});
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / 5.0;
  double var = 0;
  for (double x : z) var += (x - mean) * (x - mean);
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(var / 5.0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("adam and gradient clipping") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{0.5, -3.0};
  AdamState st = AdamState::zeros(2);
  adam_step(p, g, st, AdamSettings{0.1, 0.9, 0.999, 1e-8});
  // The first bias-corrected step is lr * sign(g).
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(st.steps == 1);

  std::vector<double> big{3.0, 4.0};
  CHECK(clip_grad_norm(big, 0.5) == doctest::Approx(5.0));
  CHECK(std::hypot(big[0], big[1]) == doctest::Approx(0.5));
  std::vector<double> small{0.3, 0.0};
  clip_grad_norm(small, 0.5);
  CHECK(small[0] == 0.3);
}

TEST_CASE("rollout batch shape and SP neutrality") {
  const auto layout = env::with_episode_length(cramped(), 30);
  const auto pc = policy_for(layout, 16, false);
  const auto params = policy::init_params(pc, 5);
  std::vector<RolloutWorker> workers;
  for (int w = 0; w < 3; ++w) workers.emplace_back(layout, shaping::overcooked_spec(), Mode::SP, pc, 2, 9, w);
  const auto b = collect_rollouts(workers, params, 70, 0);
  CHECK(b.streams == 3 * 2 * 2);
  CHECK(b.rows() == 3 * 2 * 70 * 2);
  CHECK(b.obs.rows() == b.rows());
  CHECK(b.obs.cols() == 38);
  CHECK(b.actions.size() == static_cast<std::size_t>(b.rows()));
  CHECK(b.bootstrap.size() == 12u);
  for (int i = 0; i < b.rows(); ++i) {
    CHECK(b.rewards[i] == b.base_rewards[i]);
    for (int k = 0; k < 3; ++k) CHECK(b.omega(i, k) == 0.0);
  }
  // 70 steps of 30-step episodes: done at t = 29 and 59, fresh at 0, 30, 60.
  for (int s = 0; s < b.streams; ++s) {
    for (int t = 0; t < 70; ++t) {
      const auto row = static_cast<std::size_t>(s * 70 + t);
      CHECK(static_cast<bool>(b.dones[row]) == (t == 29 || t == 59));
      CHECK(static_cast<bool>(b.episode_start[row]) == (t % 30 == 0));
    }
  }
  CHECK(b.finished.size() == 3u * 2u * 2u);
}

TEST_CASE("BS rollout records shaped rewards and holds omega per episode") {
  const auto layout = env::with_episode_length(cramped(), 400);
  const auto spec = shaping::parse_spec("delivery_act:constant(1);onion_in_pot:constant(0);plating:constant(0)");
  const auto pc = policy_for(layout, 8, false);
  const auto params = policy::init_params(pc, 1);
  RolloutWorker worker(layout, spec, Mode::BS, pc, 1, 4, 0);
  const auto script = testsupport::cramped_room_delivery_script();
  int k = 0;
  const auto b = worker.collect(params, static_cast<int>(script.size()), 0,
                                [&](int, const env::WorldState&) { return script[static_cast<std::size_t>(k++)]; });
  const int T = b.steps;
  const int last = T - 1;
  // Seat 0 delivers on the last scripted step.
  CHECK(b.base_rewards[static_cast<std::size_t>(last)] == 1.0);
  CHECK(b.rewards[static_cast<std::size_t>(last)] == 2.0);
  CHECK(b.rewards[static_cast<std::size_t>(T + last)] == 1.0);
  for (int t = 0; t < last; ++t) CHECK(b.rewards[static_cast<std::size_t>(t)] == 0.0);
  for (int t = 0; t < T; ++t) CHECK(b.actions[static_cast<std::size_t>(t)] == static_cast<int>(script[static_cast<std::size_t>(t)][0]));

  SUBCASE("normal weights change only at episode starts") {
    const auto short_layout = env::with_episode_length(cramped(), 10);
    RolloutWorker w(short_layout, shaping::overcooked_spec(), Mode::BS, pc, 2, 4, 0);
    const auto bb = w.collect(params, 35, 0);
    for (int s = 0; s < bb.streams; ++s) {
      for (int t = 1; t < 35; ++t) {
        const auto r = static_cast<Eigen::Index>(s * 35 + t);
        if (bb.episode_start[static_cast<std::size_t>(r)]) {
          CHECK(bb.omega.row(r) != bb.omega.row(r - 1));
        } else {
          CHECK(bb.omega.row(r) == bb.omega.row(r - 1));
        }
      }
      // The two seats of one env see their own draws.
      if (s % 2 == 0) CHECK(bb.omega.row(s * 35) != bb.omega.row((s + 1) * 35));
    }
  }
}

TEST_CASE("parallel collection is deterministic and merged in worker order") {
  const auto layout = env::with_episode_length(cramped(), 25);
  const auto pc = policy_for(layout, 8, false);
  const auto params = policy::init_params(pc, 2);
  auto make = [&] {
    std::vector<RolloutWorker> ws;
    for (int w = 0; w < 3; ++w) ws.emplace_back(layout, shaping::overcooked_spec(), Mode::BS, pc, 2, 13, w);
    return ws;
  };
  auto a = make();
  auto b = make();
  const auto ba = collect_rollouts(a, params, 40, 0);
  // Sequential collection, one worker at a time in reverse order.
  std::vector<TrajectoryBatch> parts(3);
  for (int w = 2; w >= 0; --w) parts[static_cast<std::size_t>(w)] = b[static_cast<std::size_t>(w)].collect(params, 40, 0);
  const auto bb = merge_batches(std::move(parts));
  CHECK(ba.obs == bb.obs);
  CHECK(ba.actions == bb.actions);
  CHECK(ba.rewards == bb.rewards);
  CHECK(ba.log_probs == bb.log_probs);
  CHECK(ba.bootstrap == bb.bootstrap);
}

TEST_CASE("recurrent rollouts store segment-start states") {
  const auto layout = env::with_episode_length(cramped(), 20);
  const auto pc = policy_for(layout, 8, true);
  const auto params = policy::init_params(pc, 3);
  RolloutWorker w(layout, shaping::overcooked_spec(), Mode::BS, pc, 1, 2, 0);
  const auto b = w.collect(params, 32, 8);
  CHECK(b.segments() == 4);
  CHECK(b.segment_h.rows() == 2 * 4);
  // Segment 0 starts a fresh episode; segment 1 (t = 8) is mid-episode.
  CHECK(b.segment_h.row(0).isZero());
  CHECK_FALSE(b.segment_h.row(1).isZero());
  CHECK_THROWS_AS(w.collect(params, 30, 8), ContractError);
}

TEST_CASE("PPO update: first minibatch is on-policy, parameters move") {
  const auto layout = env::with_episode_length(cramped(), 40);
  auto cfg = tiny_config();
  for (bool recurrent : {false, true}) {
    CAPTURE(recurrent);
    cfg.recurrent = recurrent;
    cfg.segment_length = 10;
    const auto pc = policy_for(layout, 16, recurrent);
    const auto params = policy::init_params(pc, 8);
    RolloutWorker w(layout, shaping::overcooked_spec(), Mode::BS, pc, 2, 6, 0);
    const auto b = w.collect(params, 50, recurrent ? 10 : 0);
    RngStream shuffle(1);
    const auto up = ppo_update(params, AdamState::zeros(params.values.size()), b, cfg, shuffle);
    CHECK(up.stats.gradient_steps == cfg.epochs * cfg.minibatches);
    CHECK(up.stats.first_clip_fraction == 0.0);
    CHECK(std::abs(up.stats.first_approx_kl) <= 1e-12);
    CHECK(up.params.all_finite());
    CHECK(up.params.values != params.values);
    CHECK(up.optimizer.steps == cfg.epochs * cfg.minibatches);
    CHECK(std::isfinite(up.stats.value_loss));
    // Still float-exact after every step.
    auto q = up.params;
    q.quantize();
    CHECK(q.values == up.params.values);
  }
}

TEST_CASE("PPO update aborts on non-finite loss") {
  const auto layout = env::with_episode_length(cramped(), 40);
  const auto pc = policy_for(layout, 8, false);
  const auto params = policy::init_params(pc, 8);
  RolloutWorker w(layout, shaping::overcooked_spec(), Mode::BS, pc, 1, 6, 0);
  auto b = w.collect(params, 20, 0);
  b.rewards[3] = std::nan("");
  RngStream shuffle(1);
  CHECK_THROWS_AS(ppo_update(params, AdamState::zeros(params.values.size()), b, tiny_config(), shuffle),
                  NumericalError);
}

TEST_CASE("objective fidelity: unclipped policy term is the vanilla policy gradient") {
  policy::PolicyConfig pc;
  pc.input_dim = 4;
  pc.hidden_dim = 5;
  pc.mlp_layers = 1;
  auto params = policy::init_params(pc, 21);
  RngStream rng(4);
  // Nonzero biases keep every pre-activation away from the ReLU kink, where
  // central differences are meaningless.
  for (double& v : params.values) v += 0.1 * rng.normal();
  policy::SequenceBatch mb;
  mb.sequences = 32;
  mb.obs.resize(32, 4);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 4; ++j) mb.obs(i, j) = rng.normal();
    mb.actions.push_back(static_cast<int>(rng.below(6)));
    mb.advantages.push_back(rng.normal());
    mb.returns.push_back(rng.normal());
    mb.episode_start.push_back(1);
  }
  const auto fwd = policy::forward_batch(params, mb.obs, {}, {});
  for (int i = 0; i < 32; ++i) mb.old_log_probs.push_back(fwd.log_probs(i, mb.actions[i]));
  const auto loss = policy::loss_and_gradient(params, mb, {1e9, 0.0, 0.0});

  // Central differences of -mean(A * log pi(a|s)).
  auto objective = [&](const policy::PolicyParameters& p) {
    const auto f = policy::forward_batch(p, mb.obs, {}, {});
    double acc = 0;
    for (int i = 0; i < 32; ++i) acc += mb.advantages[i] * f.log_probs(i, mb.actions[i]);
    return -acc / 32.0;
  };
  std::vector<double> vanilla(params.values.size());
  for (std::size_t k = 0; k < params.values.size(); ++k) {
    auto plus = params, minus = params;
    plus.values[k] += 1e-6;
    minus.values[k] -= 1e-6;
    vanilla[k] = (objective(plus) - objective(minus)) / 2e-6;
  }
  double dot = 0, na = 0, nb = 0, diff = 0;
  for (std::size_t k = 0; k < vanilla.size(); ++k) {
    dot += vanilla[k] * loss.gradient[k];
    na += vanilla[k] * vanilla[k];
    nb += loss.gradient[k] * loss.gradient[k];
    diff = std::max(diff, std::abs(vanilla[k] - loss.gradient[k]));
  }
  CHECK(1.0 - dot / std::sqrt(na * nb) <= 1e-5);
  CHECK(diff / std::sqrt(na) <= 1e-5);
}

TEST_CASE("training config parsing") {
  SUBCASE("round trip") {
    auto c = tiny_config();
    c.lr = 0.000123;
    c.recurrent = true;
    c.segment_length = 25;
    TrainConfig back;
    apply_settings(back, parse_key_values(format_config(c)));
    CHECK(format_config(back) == format_config(c));
    CHECK(back.lr == c.lr);
  }
  SUBCASE("unknown keys are listed exhaustively") {
    TrainConfig c;
    try {
      apply_settings(c, parse_key_values("gamma = 0.9\nlearning_rate = 1\n# comment\nbatch = 3\nepochs = x\n"));
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("learning_rate") != std::string::npos);
      CHECK(msg.find("batch") != std::string::npos);
      CHECK(msg.find("epochs") != std::string::npos);
    }
  }
  SUBCASE("defaults") {
    TrainConfig c;
    CHECK(c.gamma == 0.99);
    CHECK(c.lr == 0.0008);
    CHECK(c.gae_lambda == 0.99);
    CHECK(c.vf_coef == 0.5);
    CHECK(c.ent_coef == 0.01);
    CHECK(c.clip_eps == 0.2);
    CHECK(c.epochs == 4);
    CHECK(c.minibatches == 4);
    CHECK(c.max_grad_norm == 0.5);
    CHECK(c.episode_length == 400);
    CHECK(c.hidden_dim == 64);
    CHECK_FALSE(c.recurrent);
    CHECK(c.eval_episodes == 10);
    CHECK_NOTHROW(c.validate());
  }
  SUBCASE("invariants") {
    TrainConfig c;
    c.gamma = 0.0;
    c.clip_eps = 1.0;
    c.lr = -1;
    try {
      c.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("gamma") != std::string::npos);
      CHECK(msg.find("clip_eps") != std::string::npos);
      CHECK(msg.find("lr") != std::string::npos);
    }
    TrainConfig r;
    r.recurrent = true;
    r.rollout_length = 100;
    r.segment_length = 64;
    CHECK_THROWS_AS(r.validate(), ConfigError);
  }
}

TEST_CASE("training run is byte-reproducible and writes one curve row per checkpoint") {
  testsupport::TempDir a("train_a"), b("train_b");
  const auto cfg = tiny_config();
  const auto ra = train::train(cfg, cramped(), a.path());
  const auto rb = train::train(cfg, cramped(), b.path());
  REQUIRE(ra.size() == 2);
  REQUIRE(rb.size() == 2);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (const char* f : {"manifest.txt", "params.bin", "meta.json", "optimizer.bin", "runner.json"}) {
      CAPTURE(f);
      CHECK(testsupport::slurp(ra[i].dir / f) == testsupport::slurp(rb[i].dir / f));
    }
  }
  CHECK(testsupport::slurp(a.path() / "curve.csv") == testsupport::slurp(b.path() / "curve.csv"));
  const auto curve = read_curve(a.path() / "curve.csv");
  REQUIRE(curve.size() == ra.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].step == ra[i].env_steps);
    CHECK(curve[i].mean_deliveries == ra[i].eval_score);
    if (i > 0) CHECK(curve[i].step > curve[i - 1].step);
  }
  CHECK(ra.back().env_steps == 400);
  const auto listed = list_checkpoints(a.path());
  REQUIRE(listed.size() == 2);
  CHECK(listed[1].env_steps == 400);
  const auto ck = policy::load_checkpoint(ra.back().dir);
  CHECK(ck.meta.mode == "BS");
  CHECK(ck.params.config.input_dim == 38);
  CHECK(ck.params.train_steps == 400);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  testsupport::TempDir full("resume_full"), part("resume_part");
  auto cfg = tiny_config();
  cfg.total_env_steps = 600;
  const auto rf = train::train(cfg, cramped(), full.path());
  auto half = cfg;
  half.total_env_steps = 200;
  const auto rh = train::train(half, cramped(), part.path());
  REQUIRE(rh.size() == 1);
  const auto rr = train::train(cfg, cramped(), part.path(), {}, rh.back().dir);
  REQUIRE(rr.size() == rf.size());
  CHECK(testsupport::slurp(rr.back().dir / "params.bin") == testsupport::slurp(rf.back().dir / "params.bin"));
  CHECK(testsupport::slurp(part.path() / "curve.csv") == testsupport::slurp(full.path() / "curve.csv"));

  SUBCASE("resume refuses a changed config") {
    auto other = cfg;
    other.lr = 0.1;
    CHECK_THROWS_AS(train::train(other, cramped(), part.path(), {}, rh.back().dir), ConfigError);
  }
}

TEST_CASE("recurrent training smoke") {
  testsupport::TempDir dir("train_rnn");
  auto cfg = tiny_config();
  cfg.recurrent = true;
  cfg.segment_length = 10;
  cfg.total_env_steps = 200;
  const auto r = train::train(cfg, cramped(), dir.path());
  REQUIRE(r.size() == 1);
  CHECK(policy::load_checkpoint(r[0].dir).params.config.recurrent);
}

TEST_CASE("best checkpoint selection") {
  using R = CheckpointRecord;
  SUBCASE("ties go to the latest step") {
    const std::vector<R> run{{"a", 1'000'000, 3}, {"b", 2'000'000, 7}, {"c", 3'000'000, 7}};
    CHECK(select_best_checkpoint({run}).dir == "c");
  }
  SUBCASE("single run") {
    CHECK(select_best_checkpoint({{{"x", 5, 1.5}}}).dir == "x");
  }
  SUBCASE("empty") {
    CHECK_THROWS_AS(select_best_checkpoint({}), ContractError);
    CHECK_THROWS_AS(select_best_checkpoint({{}, {}}), ContractError);
  }
  SUBCASE("five runs against a linear scan") {
    RngStream rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::vector<R>> runs(5);
      std::vector<R> flat;
      for (int s = 0; s < 5; ++s) {
        for (int c = 1; c <= 6; ++c) {
          R r{"run" + std::to_string(s) + "/" + std::to_string(c), c * 100, static_cast<double>(rng.below(8))};
          runs[static_cast<std::size_t>(s)].push_back(r);
          flat.push_back(r);
        }
      }
      double best_score = -1;
      std::int64_t best_step = -1;
      for (const auto& r : flat) {
        if (r.eval_score > best_score || (r.eval_score == best_score && r.env_steps > best_step)) {
          best_score = r.eval_score;
          best_step = r.env_steps;
        }
      }
      const auto got = select_best_checkpoint(runs);
      CHECK(got.eval_score == best_score);
      CHECK(got.env_steps == best_step);
    }
  }
}
