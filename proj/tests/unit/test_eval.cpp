#include <cmath>

#include "bslab/common/error.hpp"
#include "bslab/env/observe.hpp"
#include "bslab/eval/harness.hpp"
#include "doctest.h"
#include "support/tempdir.hpp"

using namespace bslab;
using namespace bslab::eval;

namespace {

policy::Checkpoint make_checkpoint(const std::string& layout_name, const std::string& mode,
                                   std::uint64_t seed, int episode_length = 60, int omega_inputs = 3) {
  const auto layout = env::load_named_layout(layout_name);
  policy::PolicyConfig pc;
  pc.input_dim = env::observation_size(*layout) + omega_inputs;
  pc.hidden_dim = 16;
  pc.mlp_layers = 1;
  policy::Checkpoint ck;
  ck.params = policy::init_params(pc, seed);
  ck.meta.layout = layout_name;
  ck.meta.mode = mode;
  ck.meta.seed = seed;
  ck.meta.episode_length = episode_length;
  return ck;
}

env::LayoutPtr cramped() { return env::load_named_layout("cramped_room"); }

SweepRow fake_row(const std::string& layout, double d, double o, double score) {
  SweepRow r;
  r.layout = layout;
  r.omega_dishes = d;
  r.omega_onions = o;
  r.episodes = 25;
  r.deliveries = {0.1 * score, 0.3, 25};
  r.onions_in_pot = {1.0 / 3.0, 0.25, 25};
  r.platings = {0.0, 0.0, 25};
  r.score = {score, std::sqrt(2.0), 25};
  return r;
}

}  // namespace

TEST_CASE("sample statistics") {
  const auto s = summarize({1, 2, 3, 4});
  CHECK(s.n == 4);
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.ci_low() == doctest::Approx(2.5 - 1.96 * std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(summarize({}).n == 0);
}

TEST_CASE("3x3 sweep runs 225 episodes and tags every row") {
  const auto ck = make_checkpoint("cramped_room", "BS", 1);
  SweepOptions opt;
  opt.seed = 5;
  const auto res = weight_sweep(ck, cramped(), opt);
  REQUIRE(res.rows.size() == 9);
  int total = 0;
  for (const auto& r : res.rows) {
    total += r.episodes;
    CHECK(r.layout == "cramped_room");
    CHECK(r.score.n == 25);
    CHECK(r.deliveries.mean >= 0.0);
    CHECK(r.onions_in_pot.mean >= 0.0);
  }
  CHECK(total == 225);
  CHECK(res.rows[0].omega_dishes == -1.0);
  CHECK(res.rows[0].omega_onions == -1.0);
  CHECK(res.rows[1].omega_onions == 0.0);
  CHECK(res.rows[3].omega_dishes == 0.0);
  CHECK(res.warnings.empty());
}

TEST_CASE("sweep neutral cell is plain self-play") {
  const auto ck = make_checkpoint("cramped_room", "BS", 2);
  SweepOptions opt;
  opt.seed = 8;
  opt.episodes = 6;
  const auto res = weight_sweep(ck, cramped(), opt);
  const auto& neutral = res.rows[4];
  REQUIRE(neutral.omega_dishes == 0.0);
  REQUIRE(neutral.omega_onions == 0.0);
  const auto layout = env::with_episode_length(cramped(), 60);
  std::vector<double> scores;
  for (int e = 0; e < 6; ++e) {
    RngStream rng = RngStream::derive(8, {4, static_cast<std::uint64_t>(e)});
    const train::Seat seat{&ck.params, {0, 0, 0}};
    scores.push_back(train::run_episode(layout, {seat, seat}, rng, false).score);
  }
  CHECK(neutral.score == summarize(scores));
}

TEST_CASE("sweep is deterministic and independent of thread count") {
  const auto ck = make_checkpoint("cramped_room", "BS", 3);
  SweepOptions opt;
  opt.seed = 1;
  opt.episodes = 4;
  const auto a = weight_sweep(ck, cramped(), opt);
  opt.threads = 3;
  const auto b = weight_sweep(ck, cramped(), opt);
  CHECK(a.rows == b.rows);
  CHECK(sweep_csv(a.rows) == sweep_csv(b.rows));
}

TEST_CASE("sweep input checks") {
  SUBCASE("SP checkpoint warns but runs") {
    const auto ck = make_checkpoint("cramped_room", "SP", 1);
    SweepOptions opt;
    opt.episodes = 1;
    const auto res = weight_sweep(ck, cramped(), opt);
    CHECK(res.rows.size() == 9);
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].find("SP") != std::string::npos);
  }
  SUBCASE("layout mismatch") {
    const auto ck = make_checkpoint("coordination_ring", "BS", 1);
    CHECK_THROWS_AS(weight_sweep(ck, cramped(), SweepOptions{}), DataError);
  }
  SUBCASE("no omega input") {
    const auto ck = make_checkpoint("cramped_room", "SP", 1, 60, 0);
    CHECK_THROWS_AS(weight_sweep(ck, cramped(), SweepOptions{}), DataError);
  }
  SUBCASE("wrong input width") {
    const auto ck = make_checkpoint("cramped_room", "BS", 1, 60, 2);
    CHECK_THROWS_AS(weight_sweep(ck, cramped(), SweepOptions{}), DataError);
  }
}

TEST_CASE("crossplay matrix") {
  const auto a = make_checkpoint("cramped_room", "BS", 1);
  const auto b = make_checkpoint("cramped_room", "SP", 2);
  const auto c = make_checkpoint("cramped_room", "BS", 3);
  CrossplayOptions opt;
  opt.episodes = 5;
  opt.seed = 17;

  SUBCASE("single checkpoint is its self-play score") {
    const auto m = crossplay({{"a", a}}, cramped(), opt);
    REQUIRE(m.scores.size() == 1);
    const auto sp = self_play_stats(a.params, env::with_episode_length(cramped(), 60), 5, 17, false);
    CHECK(m.scores[0][0] == sp);
  }
  SUBCASE("SP and BS checkpoints pair freely; permutation relabels") {
    const auto m = crossplay({{"a", a}, {"b", b}, {"c", c}}, cramped(), opt);
    const auto p = crossplay({{"c", c}, {"a", a}, {"b", b}}, cramped(), opt);
    const std::vector<int> perm{2, 0, 1};  // p index -> m index
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(p.scores[i][j] == m.scores[perm[i]][perm[j]]);
      }
    }
    CHECK(m.scores[0][0].n == 5);
  }
  SUBCASE("a checkpoint without the omega input pairs too") {
    const auto bare = make_checkpoint("cramped_room", "SP", 4, 60, 0);
    const auto m = crossplay({{"bare", bare}, {"a", a}}, cramped(), opt);
    CHECK(m.scores[0][0] == self_play_stats(bare.params, env::with_episode_length(cramped(), 60), 5, 17, false));
    CHECK(m.scores[0][1].n == 5);
  }
  SUBCASE("layout mismatch") {
    const auto ring = make_checkpoint("coordination_ring", "BS", 1);
    CHECK_THROWS_AS(crossplay({{"a", a}, {"r", ring}}, cramped(), opt), DataError);
  }
  SUBCASE("csv") {
    const auto m = crossplay({{"a", a}, {"b", b}}, cramped(), opt);
    const auto text = crossplay_csv(m);
    CHECK(text.rfind(std::string(kCrossplayHeader) + "\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  }
}

TEST_CASE("sweep csv round trip, summary and empty export") {
  std::vector<SweepRow> rows;
  const std::vector<double> g{-1, 0, 1};
  RngStream rng(3);
  for (const char* layout : {"cramped_room", "coordination_ring"}) {
    for (double d : g) {
      for (double o : g) rows.push_back(fake_row(layout, d, o, std::floor(rng.uniform() * 8.0) / 3.0));
    }
  }
  const auto text = sweep_csv(rows);
  const auto back = parse_sweep_csv(text);
  CHECK(back == rows);
  CHECK(sweep_csv(back) == text);

  // Linear scan oracle for the per-layout argmax.
  for (const auto& best : sweep_argmax(rows)) {
    double top = -1;
    const SweepRow* first = nullptr;
    for (const auto& r : rows) {
      if (r.layout == best.layout && r.score.mean > top) {
        top = r.score.mean;
        first = &r;
      }
    }
    REQUIRE(first);
    CHECK(best == *first);
  }
  CHECK(sweep_argmax(rows).size() == 2);

  testsupport::TempDir dir("sweep_csv");
  export_sweep({}, dir.path() / "empty.csv", dir.path() / "empty_summary.csv");
  CHECK(testsupport::slurp(dir.path() / "empty.csv") == std::string(kSweepHeader) + "\n");
  CHECK(testsupport::slurp(dir.path() / "empty_summary.csv") == std::string(kSweepSummaryHeader) + "\n");
  export_sweep(rows, dir.path() / "a.csv", dir.path() / "a_summary.csv");
  export_sweep(parse_sweep_csv(testsupport::slurp(dir.path() / "a.csv")), dir.path() / "b.csv", {});
  CHECK(testsupport::slurp(dir.path() / "a.csv") == testsupport::slurp(dir.path() / "b.csv"));
  CHECK_THROWS_AS(export_sweep(rows, "/proc/definitely/not/writable.csv", {}), DataError);
  CHECK_THROWS_AS(parse_sweep_csv("bad,header\n"), ParseError);
}
