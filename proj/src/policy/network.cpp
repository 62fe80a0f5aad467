#include "bslab/policy/network.hpp"

#include <cmath>

#include "bslab/common/error.hpp"

namespace bslab::policy {
namespace {

using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using MutMap = Eigen::Map<Matrix>;

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

Matrix sigmoid(const Matrix& m) {
  return m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Matrix affine(const Matrix& x, const PolicyParameters& p, const std::string& name) {
  Matrix y = x * p.view(name + ".weight");
  y.rowwise() += p.view(name + ".bias").row(0);
  return y;
}

// Everything backward needs from one forward pass.
struct Trace {
  int sequences = 0;
  int length = 0;
  Matrix enc;  // post-ReLU encoder, R x H
  // Per time step (recurrent only).
  std::vector<Matrix> h_prev, c_prev, gates, c, tanh_c;
  Matrix core;                  // R x H
  std::vector<Matrix> mlp_out;  // post-ReLU
  Matrix log_probs;
  Vector values;
  Matrix h_last, c_last;
};

void run_forward(const PolicyParameters& p, const Matrix& obs, int sequences, int length,
                 const std::vector<char>& episode_start, const Matrix& h0,
                 const Matrix& c0, Trace& tr) {
  const PolicyConfig& cfg = p.config;
  const int hidden = cfg.hidden_dim;
  if (obs.cols() != cfg.input_dim) {
    throw ContractError("forward: observation length " + std::to_string(obs.cols()) +
                        " != input_dim " + std::to_string(cfg.input_dim));
  }
  if (obs.rows() != static_cast<Eigen::Index>(sequences) * length) {
    throw ContractError("forward: batch rows do not match sequences x length");
  }
  tr.sequences = sequences;
  tr.length = length;
  tr.enc = relu(affine(obs, p, "encoder"));

  if (cfg.recurrent) {
    if (h0.rows() != sequences || h0.cols() != hidden || c0.rows() != sequences ||
        c0.cols() != hidden) {
      throw ContractError("forward: recurrent state shape mismatch");
    }
    const auto w_ih = p.view("lstm.weight_ih");
    const auto w_hh = p.view("lstm.weight_hh");
    const auto bias = p.view("lstm.bias");
    tr.core.resize(obs.rows(), hidden);
    tr.h_prev.assign(static_cast<std::size_t>(length), Matrix());
    tr.c_prev = tr.h_prev;
    tr.gates = tr.h_prev;
    tr.c = tr.h_prev;
    tr.tanh_c = tr.h_prev;
    Matrix h = h0;
    Matrix c = c0;
    for (int t = 0; t < length; ++t) {
      const auto rows = Eigen::seqN(static_cast<Eigen::Index>(t) * sequences, sequences);
      if (!episode_start.empty()) {
        for (int s = 0; s < sequences; ++s) {
          if (episode_start[static_cast<std::size_t>(t * sequences + s)]) {
            h.row(s).setZero();
            c.row(s).setZero();
          }
        }
      }
      const auto ts = static_cast<std::size_t>(t);
      tr.h_prev[ts] = h;
      tr.c_prev[ts] = c;
      Matrix z = tr.enc(rows, Eigen::all) * w_ih + h * w_hh;
      z.rowwise() += bias.row(0);
      Matrix g(sequences, 4 * hidden);
      g.leftCols(2 * hidden) = sigmoid(z.leftCols(2 * hidden));
      g.middleCols(2 * hidden, hidden) = z.middleCols(2 * hidden, hidden).array().tanh().matrix();
      g.rightCols(hidden) = sigmoid(z.rightCols(hidden));
      c = g.middleCols(hidden, hidden).cwiseProduct(c) +
          g.leftCols(hidden).cwiseProduct(g.middleCols(2 * hidden, hidden));
      Matrix tc = c.array().tanh().matrix();
      h = g.rightCols(hidden).cwiseProduct(tc);
      tr.gates[ts] = std::move(g);
      tr.c[ts] = c;
      tr.tanh_c[ts] = std::move(tc);
      tr.core(rows, Eigen::all) = h;
    }
    tr.h_last = h;
    tr.c_last = c;
  } else {
    tr.core = tr.enc;
  }

  tr.mlp_out.clear();
  const Matrix* x = &tr.core;
  for (int k = 0; k < cfg.mlp_layers; ++k) {
    tr.mlp_out.push_back(relu(affine(*x, p, "mlp." + std::to_string(k))));
    x = &tr.mlp_out.back();
  }
  tr.log_probs = log_softmax_rows(affine(*x, p, "actor"));
  tr.values = affine(*x, p, "critic").col(0);
}

const Matrix& trunk_output(const Trace& tr) {
  return tr.mlp_out.empty() ? tr.core : tr.mlp_out.back();
}

Matrix orthogonal(int rows, int cols, double gain, RngStream& rng) {
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Matrix a(big, small);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  const Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  q *= gain;
  if (rows < cols) return q.transpose();
  return q;
}

}  // namespace

void PolicyConfig::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0 || mlp_layers < 0) {
    throw ContractError("policy config: dimensions must be positive");
  }
  if (action_count != env::kActionCount) {
    throw ContractError("policy config: action_count must be " +
                        std::to_string(env::kActionCount));
  }
}

std::vector<ParamSlot> parameter_layout(const PolicyConfig& config) {
  config.validate();
  const int in = config.input_dim;
  const int h = config.hidden_dim;
  std::vector<ParamSlot> slots;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    slots.push_back(ParamSlot{std::move(name), rows, cols, offset});
    offset += slots.back().size();
  };
  add("encoder.weight", in, h);
  add("encoder.bias", 1, h);
  if (config.recurrent) {
    add("lstm.weight_ih", h, 4 * h);
    add("lstm.weight_hh", h, 4 * h);
    add("lstm.bias", 1, 4 * h);
  }
  for (int k = 0; k < config.mlp_layers; ++k) {
    add("mlp." + std::to_string(k) + ".weight", h, h);
    add("mlp." + std::to_string(k) + ".bias", 1, h);
  }
  add("actor.weight", h, config.action_count);
  add("actor.bias", 1, config.action_count);
  add("critic.weight", h, 1);
  add("critic.bias", 1, 1);
  return slots;
}

const ParamSlot& PolicyParameters::slot(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return s;
  }
  throw ContractError("no parameter named '" + name + "'");
}

void PolicyParameters::quantize() {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

bool PolicyParameters::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

PolicyParameters init_params(const PolicyConfig& config, std::uint64_t seed) {
  PolicyParameters p;
  p.config = config;
  p.seed = seed;
  p.slots = parameter_layout(config);
  p.values.assign(p.slots.back().offset + p.slots.back().size(), 0.0);
  RngStream rng = RngStream::derive(seed, {0x1417});
  for (const auto& s : p.slots) {
    if (s.rows == 1) continue;  // biases stay zero
    double gain = std::sqrt(2.0);
    if (s.name == "actor.weight") gain = 0.01;
    if (s.name == "critic.weight" || s.name.rfind("lstm.", 0) == 0) gain = 1.0;
    Matrix w;
    if (s.name.rfind("lstm.", 0) == 0) {
      // One orthogonal block per gate.
      w.resize(s.rows, s.cols);
      const int h = config.hidden_dim;
      for (int g = 0; g < 4; ++g) w.middleCols(g * h, h) = orthogonal(s.rows, h, gain, rng);
    } else {
      w = orthogonal(s.rows, s.cols, gain, rng);
    }
    MutMap(p.values.data() + s.offset, s.rows, s.cols) = w;
  }
  p.quantize();
  return p;
}

RecurrentState RecurrentState::zeros(const PolicyConfig& config) {
  return RecurrentState{std::vector<double>(static_cast<std::size_t>(config.hidden_dim), 0.0),
                        std::vector<double>(static_cast<std::size_t>(config.hidden_dim), 0.0)};
}

BatchForward forward_batch(const PolicyParameters& params, const Matrix& obs,
                           const Matrix& h0, const Matrix& c0) {
  Trace tr;
  run_forward(params, obs, static_cast<int>(obs.rows()), 1, {}, h0, c0, tr);
  BatchForward out;
  out.log_probs = std::move(tr.log_probs);
  out.values = std::move(tr.values);
  out.h = std::move(tr.h_last);
  out.c = std::move(tr.c_last);
  return out;
}

ActionDistribution distribution_from_log_probs(std::span<const double> log_probs) {
  if (log_probs.size() != static_cast<std::size_t>(env::kActionCount)) {
    throw ContractError("distribution: expected 6 log-probabilities");
  }
  ActionDistribution d;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    d.log_probs[i] = log_probs[i];
    d.probs[i] = std::exp(log_probs[i]);
  }
  return d;
}

ForwardResult forward(const PolicyParameters& params, std::span<const double> obs,
                      const RecurrentState& state) {
  const auto& cfg = params.config;
  if (obs.size() != static_cast<std::size_t>(cfg.input_dim)) {
    throw ContractError("forward: observation length " + std::to_string(obs.size()) +
                        " != input_dim " + std::to_string(cfg.input_dim));
  }
  Matrix x = Eigen::Map<const Matrix>(obs.data(), 1, cfg.input_dim);
  Matrix h0, c0;
  if (cfg.recurrent) {
    if (state.h.size() != static_cast<std::size_t>(cfg.hidden_dim) ||
        state.c.size() != state.h.size()) {
      throw ContractError("forward: recurrent state size mismatch");
    }
    h0 = Eigen::Map<const Matrix>(state.h.data(), 1, cfg.hidden_dim);
    c0 = Eigen::Map<const Matrix>(state.c.data(), 1, cfg.hidden_dim);
  }
  BatchForward b = forward_batch(params, x, h0, c0);
  ForwardResult out;
  out.dist = distribution_from_log_probs(std::span<const double>(b.log_probs.data(), env::kActionCount));
  out.value = b.values(0);
  out.state = RecurrentState::zeros(cfg);
  if (cfg.recurrent) {
    for (int i = 0; i < cfg.hidden_dim; ++i) {
      out.state.h[static_cast<std::size_t>(i)] = b.h(0, i);
      out.state.c[static_cast<std::size_t>(i)] = b.c(0, i);
    }
  }
  return out;
}

env::Action sample_action(const ActionDistribution& dist, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < env::kActionCount; ++i) {
    const double p = dist.probs[static_cast<std::size_t>(i)];
    if (p > 0.0) last_positive = i;
    acc += p;
    if (u < acc) return static_cast<env::Action>(i);
  }
  // Rounding left u above the cumulative sum.
  return static_cast<env::Action>(last_positive);
}

env::Action argmax_action(const ActionDistribution& dist) {
  int best = 0;
  for (int i = 1; i < env::kActionCount; ++i) {
    if (dist.probs[static_cast<std::size_t>(i)] > dist.probs[static_cast<std::size_t>(best)]) best = i;
  }
  return static_cast<env::Action>(best);
}

LossResult loss_and_gradient(const PolicyParameters& params, const SequenceBatch& batch,
                             const LossCoefficients& coef) {
  const PolicyConfig& cfg = params.config;
  const int rows = batch.rows();
  if (rows <= 0) throw ContractError("loss: empty batch");
  const auto n_rows = static_cast<std::size_t>(rows);
  if (batch.actions.size() != n_rows || batch.old_log_probs.size() != n_rows ||
      batch.advantages.size() != n_rows || batch.returns.size() != n_rows) {
    throw ContractError("loss: per-row vectors do not match batch size");
  }
  Trace tr;
  run_forward(params, batch.obs, batch.sequences, batch.length, batch.episode_start,
              batch.h0, batch.c0, tr);

  const int actions = cfg.action_count;
  const double inv_n = 1.0 / rows;
  LossResult res;
  Matrix d_logits = Matrix::Zero(rows, actions);
  Vector d_values(rows);
  double clipped = 0.0;
  for (int r = 0; r < rows; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const int a = batch.actions[ri];
    if (a < 0 || a >= actions) throw ContractError("loss: action index out of range");
    const double adv = batch.advantages[ri];
    const double log_ratio = tr.log_probs(r, a) - batch.old_log_probs[ri];
    const double ratio = std::exp(log_ratio);
    const double clipped_ratio = std::clamp(ratio, 1.0 - coef.clip_eps, 1.0 + coef.clip_eps);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped_ratio * adv;
    res.policy_loss -= std::min(unclipped_obj, clipped_obj) * inv_n;
    if (std::abs(ratio - 1.0) > coef.clip_eps) clipped += 1.0;
    res.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;

    // d(-min)/d logp_a is -ratio*A where the unclipped branch is active.
    const double d_logp_a = unclipped_obj <= clipped_obj ? -adv * ratio * inv_n : 0.0;
    double entropy = 0.0;
    for (int j = 0; j < actions; ++j) {
      const double lp = tr.log_probs(r, j);
      entropy -= std::exp(lp) * lp;
    }
    res.entropy += entropy * inv_n;
    for (int j = 0; j < actions; ++j) {
      const double lp = tr.log_probs(r, j);
      const double p = std::exp(lp);
      double g = d_logp_a * ((j == a ? 1.0 : 0.0) - p);
      // -ent_coef * mean(H); dH/dz_j = -p_j (log p_j + H).
      g += coef.ent_coef * inv_n * p * (lp + entropy);
      d_logits(r, j) = g;
    }
    const double diff = tr.values(r) - batch.returns[ri];
    res.value_loss += diff * diff * inv_n;
    d_values(r) = 2.0 * coef.vf_coef * diff * inv_n;
  }
  res.clip_fraction = clipped * inv_n;
  res.total = res.policy_loss + coef.vf_coef * res.value_loss - coef.ent_coef * res.entropy;

  res.gradient.assign(params.values.size(), 0.0);
  auto grad = [&](const std::string& name) {
    const ParamSlot& s = params.slot(name);
    return MutMap(res.gradient.data() + s.offset, s.rows, s.cols);
  };

  const Matrix& trunk = trunk_output(tr);
  grad("actor.weight") = trunk.transpose() * d_logits;
  grad("actor.bias") = d_logits.colwise().sum();
  grad("critic.weight") = trunk.transpose() * d_values;
  grad("critic.bias")(0, 0) = d_values.sum();
  Matrix d_x = d_logits * params.view("actor.weight").transpose() +
               d_values * params.view("critic.weight").transpose();

  for (int k = cfg.mlp_layers - 1; k >= 0; --k) {
    const std::string name = "mlp." + std::to_string(k);
    const Matrix& out = tr.mlp_out[static_cast<std::size_t>(k)];
    const Matrix& in = k == 0 ? tr.core : tr.mlp_out[static_cast<std::size_t>(k - 1)];
    Matrix d_pre = d_x.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
    grad(name + ".weight") = in.transpose() * d_pre;
    grad(name + ".bias") = d_pre.colwise().sum();
    d_x = d_pre * params.view(name + ".weight").transpose();
  }

  Matrix d_enc;
  if (cfg.recurrent) {
    const int h = cfg.hidden_dim;
    const int seqs = batch.sequences;
    const auto w_ih = params.view("lstm.weight_ih");
    const auto w_hh = params.view("lstm.weight_hh");
    auto g_ih = grad("lstm.weight_ih");
    auto g_hh = grad("lstm.weight_hh");
    auto g_b = grad("lstm.bias");
    d_enc.resize(rows, h);
    Matrix dh_next = Matrix::Zero(seqs, h);
    Matrix dc_next = Matrix::Zero(seqs, h);
    for (int t = batch.length - 1; t >= 0; --t) {
      const auto ts = static_cast<std::size_t>(t);
      const auto rsel = Eigen::seqN(static_cast<Eigen::Index>(t) * seqs, seqs);
      const Matrix& g = tr.gates[ts];
      const auto gi = g.leftCols(h);
      const auto gf = g.middleCols(h, h);
      const auto gg = g.middleCols(2 * h, h);
      const auto go = g.rightCols(h);
      Matrix dh = d_x(rsel, Eigen::all) + dh_next;
      Matrix dc = dc_next + dh.cwiseProduct(go).cwiseProduct(
                                (1.0 - tr.tanh_c[ts].array().square()).matrix());
      Matrix dz(seqs, 4 * h);
      dz.leftCols(h) = dc.cwiseProduct(gg).cwiseProduct(gi.cwiseProduct((1.0 - gi.array()).matrix()));
      dz.middleCols(h, h) = dc.cwiseProduct(tr.c_prev[ts]).cwiseProduct(gf.cwiseProduct((1.0 - gf.array()).matrix()));
      dz.middleCols(2 * h, h) = dc.cwiseProduct(gi).cwiseProduct((1.0 - gg.array().square()).matrix());
      dz.rightCols(h) = dh.cwiseProduct(tr.tanh_c[ts]).cwiseProduct(go.cwiseProduct((1.0 - go.array()).matrix()));
      g_ih += tr.enc(rsel, Eigen::all).transpose() * dz;
      g_hh += tr.h_prev[ts].transpose() * dz;
      g_b += dz.colwise().sum();
      d_enc(rsel, Eigen::all) = dz * w_ih.transpose();
      dh_next = dz * w_hh.transpose();
      dc_next = dc.cwiseProduct(gf);
      if (!batch.episode_start.empty()) {
        for (int s = 0; s < seqs; ++s) {
          if (batch.episode_start[static_cast<std::size_t>(t * seqs + s)]) {
            dh_next.row(s).setZero();
            dc_next.row(s).setZero();
          }
        }
      }
    }
  } else {
    d_enc = std::move(d_x);
  }

  Matrix d_pre = d_enc.cwiseProduct((tr.enc.array() > 0.0).cast<double>().matrix());
  grad("encoder.weight") = batch.obs.transpose() * d_pre;
  grad("encoder.bias") = d_pre.colwise().sum();
  return res;
}

}  // namespace bslab::policy
