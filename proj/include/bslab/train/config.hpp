#ifndef BSLAB_TRAIN_CONFIG_HPP_
#define BSLAB_TRAIN_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bslab::train {

enum class Mode { SP, BS };

std::string_view to_string(Mode m);

// Every key is documented in docs/config.md. Defaults are the desk-scale
// values; the published regime is reachable by overriding them.
struct TrainConfig {
  std::string layout = "cramped_room";
  Mode mode = Mode::BS;
  std::uint64_t seed = 1;

  double gamma = 0.99;
  double lr = 0.0008;
  double gae_lambda = 0.99;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  double clip_eps = 0.2;
  double max_grad_norm = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int workers = 2;
  int envs_per_worker = 4;
  int rollout_length = 400;
  int minibatches = 4;
  int epochs = 4;
  std::int64_t total_env_steps = 2'000'000;

  int episode_length = 400;
  int hidden_dim = 64;
  int mlp_layers = 2;
  bool recurrent = false;
  int segment_length = 64;

  std::int64_t checkpoint_interval = 100'000;
  int eval_episodes = 10;
  bool eval_greedy = false;

  std::string behavior_spec =
      "delivery_act:normal(0,1);onion_in_pot:normal(0,1);plating:normal(0,1)";

  // Env steps gathered per PPO iteration.
  std::int64_t steps_per_iteration() const {
    return static_cast<std::int64_t>(workers) * envs_per_worker * rollout_length;
  }

  // Throws ConfigError listing every violated constraint.
  void validate() const;
};

// Names of all accepted keys, in documentation order.
const std::vector<std::string>& config_keys();

// Applies key=value pairs; unknown keys and bad values are collected and
// reported together in one ConfigError.
void apply_settings(TrainConfig& config, const std::vector<std::pair<std::string, std::string>>& kv);

// Parses `key = value` lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

TrainConfig load_train_config(const std::string& path);

// Canonical text form, one `key = value` per line in config_keys() order.
std::string format_config(const TrainConfig& config);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_CONFIG_HPP_
