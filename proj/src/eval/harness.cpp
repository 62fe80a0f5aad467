#include "bslab/eval/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "bslab/common/error.hpp"
#include "bslab/common/text.hpp"
#include "bslab/env/observe.hpp"

namespace bslab::eval {
namespace {

env::LayoutPtr episode_layout(const env::LayoutPtr& layout, int requested, int from_checkpoint) {
  const int len = requested > 0 ? requested : from_checkpoint;
  return len > 0 ? env::with_episode_length(layout, len) : layout;
}

// Zero omega sized for the checkpoint: its input is the layout's features
// plus either K = 3 weights or none at all.
shaping::BehaviorWeights neutral_weights(const policy::Checkpoint& ck, const env::Layout& layout,
                                         const std::string& who) {
  if (ck.meta.layout != layout.name) {
    throw DataError(who + " was trained on '" + ck.meta.layout + "', not '" + layout.name + "'");
  }
  const int k = ck.params.config.input_dim - env::observation_size(layout);
  if (k != 0 && k != 3) {
    throw DataError(who + " expects input_dim " + std::to_string(ck.params.config.input_dim) + ", layout '" +
                    layout.name + "' needs " + std::to_string(env::observation_size(layout)) + " or " +
                    std::to_string(env::observation_size(layout) + 3));
  }
  return shaping::BehaviorWeights(static_cast<std::size_t>(k), 0.0);
}

}  // namespace

double SampleStats::ci_low() const { return n > 0 ? mean - 1.96 * sd / std::sqrt(static_cast<double>(n)) : mean; }
double SampleStats::ci_high() const { return n > 0 ? mean + 1.96 * sd / std::sqrt(static_cast<double>(n)) : mean; }

SampleStats summarize(const std::vector<double>& xs) {
  SampleStats s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

SweepResult weight_sweep(const policy::Checkpoint& ck, const env::LayoutPtr& base_layout,
                         const SweepOptions& opt) {
  if (neutral_weights(ck, *base_layout, "checkpoint").empty()) {
    throw DataError("checkpoint has no omega input; a weight sweep needs one");
  }
  if (opt.episodes <= 0) throw ContractError("weight_sweep: episodes must be positive");
  if (opt.manipulated_seat != 0 && opt.manipulated_seat != 1) {
    throw ContractError("weight_sweep: manipulated seat must be 0 or 1");
  }
  SweepResult result;
  if (ck.meta.mode == "SP") {
    result.warnings.push_back("checkpoint was trained in SP mode and never saw omega; the sweep is vacuous");
  }
  const auto layout = episode_layout(base_layout, opt.episode_length, ck.meta.episode_length);
  const int g = static_cast<int>(opt.grid.size());
  const int cells = g * g;
  std::vector<train::EpisodeTally> tallies(static_cast<std::size_t>(cells * opt.episodes));
  const auto manip = static_cast<std::size_t>(opt.manipulated_seat);
  parallel_for(cells * opt.episodes, opt.threads, [&](int job) {
    const int c = job / opt.episodes;
    const int e = job % opt.episodes;
    const double d = opt.grid[static_cast<std::size_t>(c / g)];
    const double o = opt.grid[static_cast<std::size_t>(c % g)];
    std::array<train::Seat, 2> seats{train::Seat{&ck.params, {0.0, 0.0, 0.0}},
                                     train::Seat{&ck.params, {0.0, 0.0, 0.0}}};
    seats[manip].weights = {d, o, d};
    RngStream rng = RngStream::derive(opt.seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(e)});
    tallies[static_cast<std::size_t>(job)] = train::run_episode(layout, seats, rng, opt.greedy);
  });
  for (int c = 0; c < cells; ++c) {
    std::vector<double> del, oni, pla, sco;
    for (int e = 0; e < opt.episodes; ++e) {
      const auto& t = tallies[static_cast<std::size_t>(c * opt.episodes + e)];
      del.push_back(t.deliveries[manip]);
      oni.push_back(t.onions_in_pot[manip]);
      pla.push_back(t.platings[manip]);
      sco.push_back(t.score);
    }
    SweepRow row;
    row.layout = base_layout->name;
    row.omega_dishes = opt.grid[static_cast<std::size_t>(c / g)];
    row.omega_onions = opt.grid[static_cast<std::size_t>(c % g)];
    row.episodes = opt.episodes;
    row.deliveries = summarize(del);
    row.onions_in_pot = summarize(oni);
    row.platings = summarize(pla);
    row.score = summarize(sco);
    result.rows.push_back(row);
  }
  return result;
}

SampleStats self_play_stats(const policy::PolicyParameters& params, const env::LayoutPtr& layout,
                            int episodes, std::uint64_t seed, bool greedy) {
  if (episodes <= 0) throw ContractError("self_play_stats: episodes must be positive");
  const int k = params.config.input_dim - env::observation_size(*layout);
  const train::Seat seat{&params, shaping::BehaviorWeights(static_cast<std::size_t>(std::max(k, 0)), 0.0)};
  std::vector<double> scores;
  for (int e = 0; e < episodes; ++e) {
    RngStream rng = RngStream::derive(seed, {static_cast<std::uint64_t>(e)});
    scores.push_back(train::run_episode(layout, {seat, seat}, rng, greedy).score);
  }
  return summarize(scores);
}

CrossplayMatrix crossplay(const std::vector<LabeledCheckpoint>& cks, const env::LayoutPtr& base_layout,
                          const CrossplayOptions& opt) {
  if (cks.empty()) throw ContractError("crossplay: no checkpoints");
  if (opt.episodes <= 0) throw ContractError("crossplay: episodes must be positive");
  std::vector<shaping::BehaviorWeights> zero;
  for (const auto& c : cks) {
    zero.push_back(neutral_weights(c.checkpoint, *base_layout, "checkpoint '" + c.label + "'"));
    if (c.label.find(',') != std::string::npos || c.label.find('\n') != std::string::npos) {
      throw ContractError("crossplay: label '" + c.label + "' contains a comma or newline");
    }
  }
  const auto layout = episode_layout(base_layout, opt.episode_length, cks.front().checkpoint.meta.episode_length);
  const int n = static_cast<int>(cks.size());
  CrossplayMatrix m;
  m.layout = base_layout->name;
  m.episodes = opt.episodes;
  for (const auto& c : cks) m.labels.push_back(c.label);
  std::vector<double> scores(static_cast<std::size_t>(n * n * opt.episodes));
  parallel_for(n * n * opt.episodes, opt.threads, [&](int job) {
    const int pair = job / opt.episodes;
    const int e = job % opt.episodes;
    const auto i = static_cast<std::size_t>(pair / n), j = static_cast<std::size_t>(pair % n);
    RngStream rng = RngStream::derive(opt.seed, {static_cast<std::uint64_t>(e)});
    scores[static_cast<std::size_t>(job)] =
        train::run_episode(layout, {train::Seat{&cks[i].checkpoint.params, zero[i]},
                                    train::Seat{&cks[j].checkpoint.params, zero[j]}},
                           rng, opt.greedy)
            .score;
  });
  m.scores.assign(static_cast<std::size_t>(n), std::vector<SampleStats>(static_cast<std::size_t>(n)));
  for (int pair = 0; pair < n * n; ++pair) {
    const auto first = scores.begin() + static_cast<std::ptrdiff_t>(pair) * opt.episodes;
    m.scores[static_cast<std::size_t>(pair / n)][static_cast<std::size_t>(pair % n)] =
        summarize(std::vector<double>(first, first + opt.episodes));
  }
  return m;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows) {
    out += r.layout + "," + format_double(r.omega_dishes) + "," + format_double(r.omega_onions) + "," +
           std::to_string(r.episodes);
    for (const auto* s : {&r.deliveries, &r.onions_in_pot, &r.platings, &r.score}) {
      out += "," + format_double(s->mean) + "," + format_double(s->sd);
    }
    out += "\n";
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSweepHeader) throw ParseError("sweep csv: unexpected header");
  std::vector<SweepRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 12) throw ParseError("sweep csv line " + std::to_string(line_no) + ": expected 12 fields");
    SweepRow r;
    r.layout = f[0];
    r.omega_dishes = parse_double(f[1], "omega_dishes");
    r.omega_onions = parse_double(f[2], "omega_onions");
    r.episodes = static_cast<int>(parse_int(f[3], "episodes"));
    std::size_t k = 4;
    for (auto* s : {&r.deliveries, &r.onions_in_pot, &r.platings, &r.score}) {
      s->mean = parse_double(f[k++], "mean");
      s->sd = parse_double(f[k++], "sd");
      s->n = r.episodes;
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<SweepRow> sweep_argmax(const std::vector<SweepRow>& rows) {
  std::vector<SweepRow> best;
  for (const auto& r : rows) {
    auto it = std::find_if(best.begin(), best.end(), [&](const SweepRow& b) { return b.layout == r.layout; });
    if (it == best.end()) {
      best.push_back(r);
    } else if (r.score.mean > it->score.mean) {
      *it = r;
    }
  }
  return best;
}

std::string sweep_summary_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepSummaryHeader) + "\n";
  for (const auto& r : sweep_argmax(rows)) {
    out += r.layout + "," + format_double(r.omega_dishes) + "," + format_double(r.omega_onions) + "," +
           format_double(r.score.mean) + "\n";
  }
  return out;
}

std::string crossplay_csv(const CrossplayMatrix& m) {
  std::string out = std::string(kCrossplayHeader) + "\n";
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    for (std::size_t j = 0; j < m.labels.size(); ++j) {
      const auto& s = m.scores[i][j];
      out += m.labels[i] + "," + m.labels[j] + "," + std::to_string(m.episodes) + "," +
             format_double(s.mean) + "," + format_double(s.sd) + "\n";
    }
  }
  return out;
}

void export_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& csv_path,
                  const std::filesystem::path& summary_path) {
  write_file(csv_path, sweep_csv(rows));
  if (!summary_path.empty()) write_file(summary_path, sweep_summary_csv(rows));
}

void export_crossplay(const CrossplayMatrix& matrix, const std::filesystem::path& csv_path) {
  write_file(csv_path, crossplay_csv(matrix));
}

}  // namespace bslab::eval
