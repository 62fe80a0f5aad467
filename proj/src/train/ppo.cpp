#include "bslab/train/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bslab/common/error.hpp"

namespace bslab::train {

using policy::Matrix;
using policy::SequenceBatch;

GaeResult batch_targets(const TrajectoryBatch& b, double gamma, double lambda) {
  GaeResult all;
  all.advantages.reserve(static_cast<std::size_t>(b.rows()));
  all.returns.reserve(static_cast<std::size_t>(b.rows()));
  const auto T = static_cast<std::size_t>(b.steps);
  for (int s = 0; s < b.streams; ++s) {
    const std::size_t off = static_cast<std::size_t>(s) * T;
    auto r = compute_gae(std::span<const double>(b.rewards).subspan(off, T),
                         std::span<const double>(b.values).subspan(off, T),
                         std::span<const char>(b.dones).subspan(off, T),
                         b.bootstrap[static_cast<std::size_t>(s)], gamma, lambda);
    all.advantages.insert(all.advantages.end(), r.advantages.begin(), r.advantages.end());
    all.returns.insert(all.returns.end(), r.returns.begin(), r.returns.end());
  }
  return all;
}

std::vector<double> normalize(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - mean) / (sd + 1e-8);
  return out;
}

namespace {

// Feedforward minibatch: independent rows.
SequenceBatch gather_rows(const TrajectoryBatch& b, std::span<const std::size_t> idx,
                          const std::vector<double>& adv, const std::vector<double>& ret) {
  SequenceBatch mb;
  mb.sequences = static_cast<int>(idx.size());
  mb.length = 1;
  mb.obs.resize(mb.sequences, b.obs.cols());
  mb.actions.resize(idx.size());
  mb.old_log_probs.resize(idx.size());
  mb.advantages.resize(idx.size());
  mb.returns.resize(idx.size());
  mb.episode_start.assign(idx.size(), 1);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const std::size_t i = idx[j];
    mb.obs.row(static_cast<Eigen::Index>(j)) = b.obs.row(static_cast<Eigen::Index>(i));
    mb.actions[j] = b.actions[i];
    mb.old_log_probs[j] = b.log_probs[i];
    mb.advantages[j] = adv[i];
    mb.returns[j] = ret[i];
  }
  return mb;
}

// Recurrent minibatch: whole segments, time-major.
SequenceBatch gather_segments(const TrajectoryBatch& b, std::span<const std::size_t> units,
                              const std::vector<double>& adv, const std::vector<double>& ret) {
  const int L = b.segment_length;
  const int G = b.segments();
  SequenceBatch mb;
  mb.sequences = static_cast<int>(units.size());
  mb.length = L;
  const auto rows = static_cast<std::size_t>(mb.rows());
  mb.obs.resize(mb.rows(), b.obs.cols());
  mb.actions.resize(rows);
  mb.old_log_probs.resize(rows);
  mb.advantages.resize(rows);
  mb.returns.resize(rows);
  mb.episode_start.resize(rows);
  mb.h0.resize(mb.sequences, b.segment_h.cols());
  mb.c0.resize(mb.sequences, b.segment_c.cols());
  for (int j = 0; j < mb.sequences; ++j) {
    const auto unit = static_cast<int>(units[static_cast<std::size_t>(j)]);
    const int s = unit / G;
    const int g = unit % G;
    mb.h0.row(j) = b.segment_h.row(unit);
    mb.c0.row(j) = b.segment_c.row(unit);
    for (int t = 0; t < L; ++t) {
      const auto src = static_cast<std::size_t>(s) * static_cast<std::size_t>(b.steps) +
                       static_cast<std::size_t>(g * L + t);
      const auto dst = static_cast<std::size_t>(t * mb.sequences + j);
      mb.obs.row(static_cast<Eigen::Index>(dst)) = b.obs.row(static_cast<Eigen::Index>(src));
      mb.actions[dst] = b.actions[src];
      mb.old_log_probs[dst] = b.log_probs[src];
      mb.advantages[dst] = adv[src];
      mb.returns[dst] = ret[src];
      // The stored segment state already accounts for a reset at t = 0.
      mb.episode_start[dst] = t > 0 && b.episode_start[src];
    }
  }
  return mb;
}

bool finite(const std::vector<double>& xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

UpdateResult ppo_update(const policy::PolicyParameters& params, const AdamState& optimizer,
                        const TrajectoryBatch& batch, const TrainConfig& config, RngStream& shuffle) {
  UpdateResult out{params, optimizer, {}};
  if (out.optimizer.m.size() != params.values.size()) out.optimizer = AdamState::zeros(params.values.size());

  const auto targets = batch_targets(batch, config.gamma, config.gae_lambda);
  const auto adv = normalize(targets.advantages);
  const bool recurrent = params.config.recurrent;
  if (recurrent && batch.segment_length <= 0) {
    throw ContractError("ppo_update: recurrent policy needs a segmented batch");
  }
  const std::size_t units = recurrent ? static_cast<std::size_t>(batch.streams * batch.segments())
                                      : static_cast<std::size_t>(batch.rows());
  const auto mbs = static_cast<std::size_t>(config.minibatches);
  if (mbs > units) throw ContractError("ppo_update: more minibatches than units");

  const policy::LossCoefficients coef{config.clip_eps, config.vf_coef, config.ent_coef};
  const AdamSettings adam{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};
  std::vector<std::size_t> order(units);
  UpdateStats& st = out.stats;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = units; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t m = 0; m < mbs; ++m) {
      const std::size_t begin = m * units / mbs;
      const std::size_t end = (m + 1) * units / mbs;
      const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
      const auto mb = recurrent ? gather_segments(batch, idx, adv, targets.returns)
                                : gather_rows(batch, idx, adv, targets.returns);
      auto loss = policy::loss_and_gradient(out.params, mb, coef);
      if (!std::isfinite(loss.total) || !finite(loss.gradient)) {
        std::ostringstream msg;
        msg << "non-finite PPO loss at epoch " << epoch << ", minibatch " << m
            << " (policy " << loss.policy_loss << ", value " << loss.value_loss << ", entropy "
            << loss.entropy << ")";
        throw NumericalError(msg.str());
      }
      const double norm = clip_grad_norm(loss.gradient, config.max_grad_norm);
      adam_step(out.params.values, loss.gradient, out.optimizer, adam);
      out.params.quantize();
      if (!out.params.all_finite()) {
        throw NumericalError("non-finite parameters after Adam step at epoch " +
                             std::to_string(epoch) + ", minibatch " + std::to_string(m));
      }
      if (st.gradient_steps == 0) {
        st.first_clip_fraction = loss.clip_fraction;
        st.first_approx_kl = loss.approx_kl;
      }
      ++st.gradient_steps;
      st.policy_loss += loss.policy_loss;
      st.value_loss += loss.value_loss;
      st.entropy += loss.entropy;
      st.clip_fraction += loss.clip_fraction;
      st.approx_kl += loss.approx_kl;
      st.grad_norm += norm;
    }
  }
  const double n = st.gradient_steps;
  st.policy_loss /= n;
  st.value_loss /= n;
  st.entropy /= n;
  st.clip_fraction /= n;
  st.approx_kl /= n;
  st.grad_norm /= n;
  return out;
}

}  // namespace bslab::train
