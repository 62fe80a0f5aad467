#ifndef BSLAB_POLICY_NETWORK_HPP_
#define BSLAB_POLICY_NETWORK_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bslab/common/rng.hpp"
#include "bslab/env/world.hpp"

namespace bslab::policy {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct PolicyConfig {
  int input_dim = 0;
  int hidden_dim = 64;
  int mlp_layers = 2;
  bool recurrent = false;
  int action_count = env::kActionCount;

  void validate() const;
  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// One named parameter array inside the flat parameter vector.
struct ParamSlot {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;  // in elements

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Slots in storage order:
//   encoder.weight [in x H], encoder.bias [1 x H]
//   lstm.weight_ih [H x 4H], lstm.weight_hh [H x 4H], lstm.bias [1 x 4H]  (recurrent only)
//   mlp.<k>.weight [H x H], mlp.<k>.bias [1 x H]                          (k < mlp_layers)
//   actor.weight [H x A], actor.bias [1 x A], critic.weight [H x 1], critic.bias [1 x 1]
// LSTM gate columns are ordered input, forget, cell, output.
std::vector<ParamSlot> parameter_layout(const PolicyConfig& config);

// Conditional actor-critic parameters. Values are kept exactly representable
// as 32-bit floats so checkpoints round-trip bit for bit.
struct PolicyParameters {
  PolicyConfig config;
  std::uint64_t seed = 0;
  std::int64_t train_steps = 0;
  std::vector<ParamSlot> slots;
  std::vector<double> values;

  const ParamSlot& slot(const std::string& name) const;
  Eigen::Map<const Matrix> view(const ParamSlot& s) const {
    return Eigen::Map<const Matrix>(values.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<const Matrix> view(const std::string& name) const { return view(slot(name)); }
  // Rounds every value to the nearest 32-bit float.
  void quantize();
  bool all_finite() const;
};

// Orthogonal init with gain sqrt(2) for hidden layers, 1 for recurrent
// weights and the critic, 0.01 for the actor head; zero biases.
PolicyParameters init_params(const PolicyConfig& config, std::uint64_t seed);

struct RecurrentState {
  std::vector<double> h;
  std::vector<double> c;

  static RecurrentState zeros(const PolicyConfig& config);
  friend bool operator==(const RecurrentState&, const RecurrentState&) = default;
};

struct ActionDistribution {
  std::array<double, env::kActionCount> probs{};
  std::array<double, env::kActionCount> log_probs{};
};

struct ForwardResult {
  ActionDistribution dist;
  double value = 0.0;
  RecurrentState state;
};

// Single-observation forward. Throws ContractError on dimension mismatch.
ForwardResult forward(const PolicyParameters& params, std::span<const double> obs,
                      const RecurrentState& state);

struct BatchForward {
  Matrix log_probs;  // B x A
  Vector values;     // B
  Matrix h;          // B x H (recurrent only)
  Matrix c;
};

// Row-wise forward of B independent observations. h0/c0 may be empty for
// feedforward configs.
BatchForward forward_batch(const PolicyParameters& params, const Matrix& obs,
                           const Matrix& h0, const Matrix& c0);

env::Action sample_action(const ActionDistribution& dist, RngStream& rng);
// Lowest index wins ties.
env::Action argmax_action(const ActionDistribution& dist);
ActionDistribution distribution_from_log_probs(std::span<const double> log_probs);

// Training-time view of a minibatch: `sequences` streams of `length` steps,
// stored time-major (row = t * sequences + s). Feedforward batches use
// length 1 and ignore the recurrent fields.
struct SequenceBatch {
  int sequences = 0;
  int length = 1;
  Matrix obs;
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;  // already normalized
  std::vector<double> returns;
  std::vector<char> episode_start;  // zero the recurrent state before this row
  Matrix h0;
  Matrix c0;

  int rows() const { return sequences * length; }
};

struct LossCoefficients {
  double clip_eps = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
};

struct LossResult {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  std::vector<double> gradient;  // same layout as PolicyParameters::values
};

// Clipped-surrogate PPO loss
//   -mean(min(rA, clip(r, 1-eps, 1+eps)A)) + vf * mean((V - R)^2) - ent * mean(H)
// and its exact gradient with respect to every parameter.
LossResult loss_and_gradient(const PolicyParameters& params, const SequenceBatch& batch,
                             const LossCoefficients& coef);

}  // namespace bslab::policy

#endif  // BSLAB_POLICY_NETWORK_HPP_
