#ifndef BSLAB_TESTS_SUPPORT_NUMERIC_ORACLES_HPP_
#define BSLAB_TESTS_SUPPORT_NUMERIC_ORACLES_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "bslab/common/rng.hpp"
#include "bslab/policy/network.hpp"
#include "bslab/train/gae.hpp"

// GAE and loss-gradient reference checks shared by the unit tests and the
// acceptance suite. They return what they found instead of asserting.
namespace testsupport {

// Backward recursion written out element by element.
struct OracleGae {
  std::vector<double> adv, ret;
};

inline OracleGae oracle_gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<char>& d,
                            double boot, double gamma, double lambda) {
  const int n = static_cast<int>(r.size());
  OracleGae o{std::vector<double>(r.size()), std::vector<double>(r.size())};
  double a_next = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double v_next = t == n - 1 ? boot : v[static_cast<std::size_t>(t + 1)];
    const double nonterminal = d[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double delta = r[static_cast<std::size_t>(t)] + gamma * v_next * nonterminal - v[static_cast<std::size_t>(t)];
    a_next = delta + gamma * lambda * nonterminal * a_next;
    o.adv[static_cast<std::size_t>(t)] = a_next;
    o.ret[static_cast<std::size_t>(t)] = a_next + v[static_cast<std::size_t>(t)];
  }
  return o;
}

struct Stream {
  std::vector<double> r, v;
  std::vector<char> d;
  double boot = 0;
};

inline Stream random_stream(bslab::RngStream& rng, int n) {
  Stream s;
  for (int t = 0; t < n; ++t) {
    s.r.push_back(rng.uniform() < 0.1 ? rng.normal(0, 2) : 0.0);
    s.v.push_back(rng.normal(0, 1));
    s.d.push_back(rng.uniform() < 0.05);
  }
  s.boot = rng.normal(0, 1);
  return s;
}

// Largest |library - oracle| over advantages and returns of `streams`
// random streams with random gamma and lambda.
inline double gae_oracle_worst(int streams, std::uint64_t seed) {
  bslab::RngStream rng = bslab::RngStream::derive(seed, {7});
  double worst = 0.0;
  for (int k = 0; k < streams; ++k) {
    const auto s = random_stream(rng, 1 + static_cast<int>(rng.below(300)));
    const double gamma = 0.9 + 0.1 * rng.uniform();
    const double lambda = 0.8 + 0.2 * rng.uniform();
    const auto o = oracle_gae(s.r, s.v, s.d, s.boot, gamma, lambda);
    const auto g = bslab::train::compute_gae(s.r, s.v, s.d, s.boot, gamma, lambda);
    for (std::size_t t = 0; t < s.r.size(); ++t) {
      worst = std::max(worst, std::abs(g.advantages[t] - o.adv[t]));
      worst = std::max(worst, std::abs(g.returns[t] - o.ret[t]));
    }
  }
  return worst;
}

// Largest deviation from the two closed forms: lambda = 0 gives one-step TD
// errors, lambda = 1 gives discounted returns (to the first done, else the
// bootstrap) minus values.
inline std::array<double, 2> gae_lambda_limits_worst(int streams, std::uint64_t seed) {
  bslab::RngStream rng = bslab::RngStream::derive(seed, {8});
  std::array<double, 2> worst{0.0, 0.0};
  const double gamma = 0.97;
  for (int k = 0; k < streams; ++k) {
    const auto s = random_stream(rng, 120);
    const auto n = s.r.size();
    const auto g0 = bslab::train::compute_gae(s.r, s.v, s.d, s.boot, gamma, 0.0);
    const auto g1 = bslab::train::compute_gae(s.r, s.v, s.d, s.boot, gamma, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double v_next = t + 1 == n ? s.boot : s.v[t + 1];
      const double td = s.r[t] + gamma * v_next * (s.d[t] ? 0.0 : 1.0) - s.v[t];
      worst[0] = std::max(worst[0], std::abs(g0.advantages[t] - td));
      double ret = 0.0, disc = 1.0;
      std::size_t u = t;
      for (; u < n; ++u) {
        ret += disc * s.r[u];
        if (s.d[u]) break;
        disc *= gamma;
      }
      if (u == n) ret += disc * s.boot;
      worst[1] = std::max(worst[1], std::abs(g1.advantages[t] - (ret - s.v[t])));
      worst[1] = std::max(worst[1], std::abs(g1.returns[t] - ret));
    }
  }
  return worst;
}

inline bslab::policy::SequenceBatch toy_batch(const bslab::policy::PolicyParameters& p, bslab::RngStream& rng,
                                              int sequences, int length) {
  bslab::policy::SequenceBatch b;
  b.sequences = sequences;
  b.length = length;
  const int rows = sequences * length;
  b.obs.resize(rows, p.config.input_dim);
  for (Eigen::Index i = 0; i < b.obs.size(); ++i) b.obs.data()[i] = rng.normal();
  for (int r = 0; r < rows; ++r) {
    b.actions.push_back(static_cast<int>(rng.below(6)));
    // Old log-probs spread the ratios across and beyond the clip range.
    b.old_log_probs.push_back(std::log(1.0 / 6.0) + rng.normal(0.0, 0.3));
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
    b.episode_start.push_back(length > 1 && r / sequences == 2 && r % sequences == 0);
  }
  if (p.config.recurrent) {
    b.h0 = bslab::policy::Matrix::Zero(sequences, p.config.hidden_dim);
    b.c0 = bslab::policy::Matrix::Zero(sequences, p.config.hidden_dim);
    for (Eigen::Index i = 0; i < b.h0.size(); ++i) {
      b.h0.data()[i] = rng.normal(0.0, 0.5);
      b.c0.data()[i] = rng.normal(0.0, 0.5);
    }
  }
  return b;
}

struct GradientCheck {
  double worst_relative = 0.0;
  double clip_fraction = 0.0;
  std::size_t parameters = 0;
};

// Analytic PPO total-loss gradient against central differences (h = 1e-6)
// on a policy with 4-dimensional observations.
inline GradientCheck ppo_gradient_check(bool recurrent) {
  using namespace bslab::policy;
  const LossCoefficients coef{0.2, 0.5, 0.01};
  auto p = init_params(PolicyConfig{4, 6, 2, recurrent}, 7);
  bslab::RngStream rng(70);
  // Off the ReLU kinks, where central differences are meaningless.
  for (double& v : p.values) v += rng.normal(0.0, 0.2);
  const auto batch = recurrent ? toy_batch(p, rng, 3, 5) : toy_batch(p, rng, 16, 1);
  const auto res = loss_and_gradient(p, batch, coef);
  GradientCheck out;
  out.clip_fraction = res.clip_fraction;
  out.parameters = p.values.size();
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    auto plus = p;
    auto minus = p;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd =
        (loss_and_gradient(plus, batch, coef).total - loss_and_gradient(minus, batch, coef).total) / (2 * h);
    const double g = res.gradient[i];
    out.worst_relative = std::max(out.worst_relative, std::abs(g - fd) / std::max(1e-6, std::abs(g) + std::abs(fd)));
  }
  return out;
}

}  // namespace testsupport

#endif  // BSLAB_TESTS_SUPPORT_NUMERIC_ORACLES_HPP_
