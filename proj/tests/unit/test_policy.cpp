#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bslab/common/error.hpp"
#include "bslab/policy/checkpoint.hpp"
#include "bslab/policy/network.hpp"
#include "doctest.h"
#include "support/numeric_oracles.hpp"
#include "support/scalar_policy.hpp"

using namespace bslab;
using namespace bslab::policy;
namespace fs = std::filesystem;

namespace {

std::vector<double> random_vector(RngStream& rng, int n, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("bslab_test_policy_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("init_params is deterministic per seed") {
  const PolicyConfig cfg{38, 64, 2, false};
  const auto a = init_params(cfg, 17);
  const auto b = init_params(cfg, 17);
  const auto c = init_params(cfg, 18);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  const auto r1 = init_params(PolicyConfig{38, 16, 1, true}, 3);
  const auto r2 = init_params(PolicyConfig{38, 16, 1, true}, 3);
  CHECK(r1.values == r2.values);
}

TEST_CASE("parameter shapes follow the config") {
  const PolicyConfig cfg{38, 64, 2, false};
  const auto p = init_params(cfg, 1);
  CHECK(p.slot("encoder.weight").rows == 38);
  CHECK(p.slot("encoder.weight").cols == 64);
  CHECK(p.slot("mlp.1.weight").rows == 64);
  CHECK(p.slot("actor.weight").cols == 6);
  CHECK(p.slot("critic.weight").cols == 1);
  CHECK_THROWS_AS(p.slot("lstm.weight_ih"), ContractError);
  const auto r = init_params(PolicyConfig{38, 32, 3, true}, 1);
  CHECK(r.slot("lstm.weight_ih").cols == 128);
  CHECK(r.slot("lstm.weight_hh").rows == 32);
  CHECK(r.slot("mlp.2.bias").cols == 32);
  for (const auto& s : p.slots) {
    if (s.rows == 1) {
      for (std::size_t i = 0; i < s.size(); ++i) CHECK(p.values[s.offset + i] == 0.0);
    }
  }
}

TEST_CASE("hidden layers are orthogonal with gain sqrt(2)") {
  const auto p = init_params(PolicyConfig{38, 64, 2, false}, 4);
  const Matrix w = p.view("mlp.0.weight");
  const Matrix gram = w.transpose() * w;
  CHECK((gram - 2.0 * Matrix::Identity(64, 64)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("actor output is near uniform at init") {
  const auto p = init_params(PolicyConfig{38, 64, 2, false}, 8);
  RngStream rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto obs = random_vector(rng, 38);
    const auto out = forward(p, obs, RecurrentState::zeros(p.config));
    const auto [mn, mx] = std::minmax_element(out.dist.probs.begin(), out.dist.probs.end());
    CHECK(*mx - *mn < 0.05);
  }
}

TEST_CASE("forward produces normalized distributions and is pure") {
  for (bool recurrent : {false, true}) {
    CAPTURE(recurrent);
    const auto p = init_params(PolicyConfig{38, 32, 2, recurrent}, 21);
    RngStream rng(2);
    RecurrentState state = RecurrentState::zeros(p.config);
    for (int i = 0; i < 1000; ++i) {
      const auto obs = random_vector(rng, 38, 3.0);
      const auto out = forward(p, obs, state);
      double sum = 0;
      for (double q : out.dist.probs) {
        CHECK(q >= 0.0);
        sum += q;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
      CHECK(std::isfinite(out.value));
      const auto again = forward(p, obs, state);
      CHECK(again.dist.probs == out.dist.probs);
      CHECK(again.value == out.value);
      CHECK(again.state == out.state);
      if (!recurrent) {
        for (double v : out.state.h) CHECK(v == 0.0);
      }
      state = out.state;
    }
  }
}

TEST_CASE("forward rejects wrong observation length") {
  const auto p = init_params(PolicyConfig{38, 16, 1, false}, 1);
  std::vector<double> obs(37, 0.0);
  CHECK_THROWS_AS(forward(p, obs, RecurrentState::zeros(p.config)), ContractError);
}

TEST_CASE("forward matches a scalar re-implementation on a toy config") {
  for (bool recurrent : {false, true}) {
    CAPTURE(recurrent);
    auto p = init_params(PolicyConfig{4, 5, 2, recurrent}, 99);
    RngStream rng(12);
    // Non-zero biases so every term is exercised.
    for (double& v : p.values) v += rng.normal(0.0, 0.1);
    RecurrentState state = RecurrentState::zeros(p.config);
    testsupport::ScalarState scalar_state{state.h, state.c};
    for (int i = 0; i < 20; ++i) {
      const auto obs = random_vector(rng, 4);
      const auto out = forward(p, obs, state);
      const auto oracle = testsupport::scalar_forward(p, obs, scalar_state);
      for (int a = 0; a < 6; ++a) {
        CHECK(std::abs(out.dist.probs[static_cast<std::size_t>(a)] - oracle.probs[static_cast<std::size_t>(a)]) <= 1e-6);
      }
      CHECK(std::abs(out.value - oracle.value) <= 1e-6);
      state = out.state;
      scalar_state = oracle.state;
    }
  }
}

TEST_CASE("feedforward batch outputs do not depend on row order") {
  const auto p = init_params(PolicyConfig{10, 16, 2, false}, 5);
  RngStream rng(4);
  Matrix obs(32, 10);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = rng.normal();
  const auto out = forward_batch(p, obs, {}, {});
  std::vector<int> perm(32);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Matrix shuffled(32, 10);
  for (int i = 0; i < 32; ++i) shuffled.row(i) = obs.row(perm[static_cast<std::size_t>(i)]);
  const auto out2 = forward_batch(p, shuffled, {}, {});
  for (int i = 0; i < 32; ++i) {
    CHECK(out2.values(i) == out.values(perm[static_cast<std::size_t>(i)]));
    CHECK(out2.log_probs.row(i) == out.log_probs.row(perm[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("action sampling") {
  ActionDistribution one_hot;
  one_hot.probs = {0, 0, 0, 1, 0, 0};
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(sample_action(one_hot, rng) == env::Action::West);

  ActionDistribution uniform;
  uniform.probs.fill(1.0 / 6.0);
  std::array<int, 6> counts{};
  for (int i = 0; i < 60000; ++i) ++counts[static_cast<std::size_t>(sample_action(uniform, rng))];
  for (int c : counts) CHECK(std::abs(c / 60000.0 - 1.0 / 6.0) <= 0.01);

  // Chi-square goodness of fit, 5 degrees of freedom, 0.001 level.
  ActionDistribution skewed;
  skewed.probs = {0.05, 0.1, 0.15, 0.2, 0.2, 0.3};
  std::array<int, 6> obs{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++obs[static_cast<std::size_t>(sample_action(skewed, rng))];
  double chi2 = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double e = n * skewed.probs[i];
    chi2 += (obs[i] - e) * (obs[i] - e) / e;
  }
  CHECK(chi2 < 20.515);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  ActionDistribution d;
  d.probs = {0.1, 0.1, 0.3, 0.1, 0.3, 0.1};
  CHECK(argmax_action(d) == env::Action::East);
}

using testsupport::toy_batch;

TEST_CASE("loss gradient matches central finite differences") {
  for (bool recurrent : {false, true}) {
    CAPTURE(recurrent);
    const auto g = testsupport::ppo_gradient_check(recurrent);
    CHECK(g.clip_fraction > 0.0);
    CHECK(g.worst_relative <= 1e-4);
  }
}

TEST_CASE("first update step sees unit ratios") {
  const auto p = init_params(PolicyConfig{4, 8, 1, false}, 2);
  RngStream rng(1);
  auto batch = toy_batch(p, rng, 32, 1);
  const auto fwd = forward_batch(p, batch.obs, {}, {});
  for (int r = 0; r < 32; ++r) batch.old_log_probs[static_cast<std::size_t>(r)] = fwd.log_probs(r, batch.actions[static_cast<std::size_t>(r)]);
  const auto res = loss_and_gradient(p, batch, {});
  CHECK(res.clip_fraction == 0.0);
  CHECK(std::abs(res.approx_kl) < 1e-12);
}

TEST_CASE("clipped samples contribute no policy gradient") {
  auto p = init_params(PolicyConfig{4, 8, 1, false}, 2);
  RngStream rng(5);
  auto batch = toy_batch(p, rng, 1, 1);
  const auto fwd = forward_batch(p, batch.obs, {}, {});
  const int a = batch.actions[0];
  // ratio = e^0.5 > 1 + eps with A > 0: clipped branch is active.
  batch.old_log_probs[0] = fwd.log_probs(0, a) - 0.5;
  batch.advantages[0] = 1.0;
  const LossCoefficients policy_only{0.2, 0.0, 0.0};
  const auto res = loss_and_gradient(p, batch, policy_only);
  CHECK(res.clip_fraction == 1.0);
  for (double g : res.gradient) CHECK(g == 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (bool recurrent : {false, true}) {
    Checkpoint ck;
    ck.params = init_params(PolicyConfig{38, 16, 2, recurrent}, 5);
    ck.params.train_steps = 12;
    ck.meta.layout = "cramped_room";
    ck.meta.mode = "BS";
    ck.meta.seed = 5;
    ck.meta.env_steps = 4096;
    ck.meta.eval_score = 3.25;
    ck.meta.episode_length = 400;
    ck.meta.behavior_spec = "delivery_act:normal(0,1)";
    const auto dir = temp_dir(recurrent ? "rt_r" : "rt_f");
    save_checkpoint(dir, ck);
    const auto back = load_checkpoint(dir);
    CHECK(back.params.values == ck.params.values);
    CHECK(back.params.config == ck.params.config);
    CHECK(back.meta.eval_score == 3.25);
    CHECK(back.meta.layout == "cramped_room");
    const auto dir2 = temp_dir(recurrent ? "rt_r2" : "rt_f2");
    save_checkpoint(dir2, back);
    for (const char* f : {"manifest.txt", "params.bin", "meta.json"}) {
      CHECK(slurp(dir / f) == slurp(dir2 / f));
    }
    const auto blob = slurp(dir / "params.bin");
    CHECK(blob.size() == ck.params.values.size() * 4);
  }
}

TEST_CASE("checkpoint loading reports damaged files") {
  Checkpoint ck;
  ck.params = init_params(PolicyConfig{10, 8, 1, false}, 5);
  ck.meta.layout = "cramped_room";
  ck.meta.mode = "SP";
  const auto dir = temp_dir("damaged");
  save_checkpoint(dir, ck);
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    out << "abc";
  }
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  CHECK_THROWS_AS(load_checkpoint(temp_dir("missing")), DataError);
}
