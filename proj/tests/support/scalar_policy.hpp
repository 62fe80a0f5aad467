#ifndef BSLAB_TESTS_SUPPORT_SCALAR_POLICY_HPP_
#define BSLAB_TESTS_SUPPORT_SCALAR_POLICY_HPP_

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bslab/policy/network.hpp"

namespace testsupport {

// Straight-line loops over the raw parameter storage. Shares nothing with the
// Eigen forward path except the parameter naming.
struct ScalarState {
  std::vector<double> h;
  std::vector<double> c;
};

struct ScalarOutput {
  std::array<double, 6> probs{};
  double value = 0.0;
  ScalarState state;
};

inline double param(const bslab::policy::PolicyParameters& p, const std::string& name, int r, int c) {
  for (const auto& s : p.slots) {
    if (s.name == name) return p.values[s.offset + static_cast<std::size_t>(r * s.cols + c)];
  }
  return std::nan("");
}

inline std::vector<double> dense(const bslab::policy::PolicyParameters& p, const std::string& name,
                                 const std::vector<double>& x, int out, bool relu) {
  std::vector<double> y(static_cast<std::size_t>(out));
  for (int j = 0; j < out; ++j) {
    double acc = param(p, name + ".bias", 0, j);
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * param(p, name + ".weight", static_cast<int>(i), j);
    y[static_cast<std::size_t>(j)] = relu && acc < 0.0 ? 0.0 : acc;
  }
  return y;
}

inline ScalarOutput scalar_forward(const bslab::policy::PolicyParameters& p,
                                   const std::vector<double>& obs, const ScalarState& state) {
  const int hidden = p.config.hidden_dim;
  std::vector<double> x = dense(p, "encoder", obs, hidden, true);
  ScalarOutput out;
  out.state = state;
  if (p.config.recurrent) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> h(static_cast<std::size_t>(hidden)), c(static_cast<std::size_t>(hidden));
    for (int j = 0; j < hidden; ++j) {
      double z[4];
      for (int g = 0; g < 4; ++g) {
        const int col = g * hidden + j;
        double acc = param(p, "lstm.bias", 0, col);
        for (int i = 0; i < hidden; ++i) {
          acc += x[static_cast<std::size_t>(i)] * param(p, "lstm.weight_ih", i, col);
          acc += state.h[static_cast<std::size_t>(i)] * param(p, "lstm.weight_hh", i, col);
        }
        z[g] = acc;
      }
      const double in = sig(z[0]), forget = sig(z[1]), cell = std::tanh(z[2]), o = sig(z[3]);
      c[static_cast<std::size_t>(j)] = forget * state.c[static_cast<std::size_t>(j)] + in * cell;
      h[static_cast<std::size_t>(j)] = o * std::tanh(c[static_cast<std::size_t>(j)]);
    }
    out.state = {h, c};
    x = h;
  }
  for (int k = 0; k < p.config.mlp_layers; ++k) x = dense(p, "mlp." + std::to_string(k), x, hidden, true);
  const auto logits = dense(p, "actor", x, 6, false);
  double z = 0;
  for (double l : logits) z += std::exp(l);
  for (std::size_t a = 0; a < 6; ++a) out.probs[a] = std::exp(logits[a]) / z;
  out.value = dense(p, "critic", x, 1, false)[0];
  return out;
}

}  // namespace testsupport

#endif  // BSLAB_TESTS_SUPPORT_SCALAR_POLICY_HPP_
