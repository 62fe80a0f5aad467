#include "bslab/train/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "bslab/common/error.hpp"
#include "bslab/common/text.hpp"
#include "bslab/shaping/behavior.hpp"

namespace bslab::train {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw std::invalid_argument("not a number");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("not a boolean");
}

std::string fmt_double(double v) { return format_double(v); }

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number_field(const std::string& key, T TrainConfig::*member) {
  return Field{key,
               [member](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>(v); },
               [member](const TrainConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) {
                   return fmt_double(c.*member);
                 } else {
                   return std::to_string(c.*member);
                 }
               }};
}

Field bool_field(const std::string& key, bool TrainConfig::*member) {
  return Field{key, [member](TrainConfig& c, const std::string& v) { c.*member = parse_bool(v); },
               [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back({"layout", [](TrainConfig& c, const std::string& s) {
                   if (s.empty()) throw std::invalid_argument("empty");
                   c.layout = s;
                 },
                 [](const TrainConfig& c) { return c.layout; }});
    v.push_back({"mode",
                 [](TrainConfig& c, const std::string& s) {
                   if (s == "SP") c.mode = Mode::SP;
                   else if (s == "BS") c.mode = Mode::BS;
                   else throw std::invalid_argument("expected SP or BS");
                 },
                 [](const TrainConfig& c) { return std::string(to_string(c.mode)); }});
    v.push_back(number_field("seed", &TrainConfig::seed));
    v.push_back(number_field("gamma", &TrainConfig::gamma));
    v.push_back(number_field("lr", &TrainConfig::lr));
    v.push_back(number_field("gae_lambda", &TrainConfig::gae_lambda));
    v.push_back(number_field("vf_coef", &TrainConfig::vf_coef));
    v.push_back(number_field("ent_coef", &TrainConfig::ent_coef));
    v.push_back(number_field("clip_eps", &TrainConfig::clip_eps));
    v.push_back(number_field("max_grad_norm", &TrainConfig::max_grad_norm));
    v.push_back(number_field("adam_beta1", &TrainConfig::adam_beta1));
    v.push_back(number_field("adam_beta2", &TrainConfig::adam_beta2));
    v.push_back(number_field("adam_eps", &TrainConfig::adam_eps));
    v.push_back(number_field("workers", &TrainConfig::workers));
    v.push_back(number_field("envs_per_worker", &TrainConfig::envs_per_worker));
    v.push_back(number_field("rollout_length", &TrainConfig::rollout_length));
    v.push_back(number_field("minibatches", &TrainConfig::minibatches));
    v.push_back(number_field("epochs", &TrainConfig::epochs));
    v.push_back(number_field("total_env_steps", &TrainConfig::total_env_steps));
    v.push_back(number_field("episode_length", &TrainConfig::episode_length));
    v.push_back(number_field("hidden_dim", &TrainConfig::hidden_dim));
    v.push_back(number_field("mlp_layers", &TrainConfig::mlp_layers));
    v.push_back(bool_field("recurrent", &TrainConfig::recurrent));
    v.push_back(number_field("segment_length", &TrainConfig::segment_length));
    v.push_back(number_field("checkpoint_interval", &TrainConfig::checkpoint_interval));
    v.push_back(number_field("eval_episodes", &TrainConfig::eval_episodes));
    v.push_back(bool_field("eval_greedy", &TrainConfig::eval_greedy));
    v.push_back({"behavior_spec",
                 [](TrainConfig& c, const std::string& s) {
                   shaping::parse_spec(s);
                   c.behavior_spec = s;
                 },
                 [](const TrainConfig& c) { return c.behavior_spec; }});
    return v;
  }();
  return f;
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::SP ? "SP" : "BS"; }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_settings(TrainConfig& config, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::string> problems;
  for (const auto& [key, value] : kv) {
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (f.key == key) field = &f;
    }
    if (!field) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      field->set(config, value);
    } catch (const std::exception& e) {
      problems.push_back("invalid value '" + value + "' for '" + key + "': " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  TrainConfig c;
  apply_settings(c, parse_key_values(os.str()));
  return c;
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  need(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  need(gae_lambda > 0.0 && gae_lambda <= 1.0, "gae_lambda must be in (0, 1]");
  need(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps must be in (0, 1)");
  need(lr > 0.0, "lr must be positive");
  need(vf_coef > 0.0, "vf_coef must be positive");
  need(ent_coef > 0.0, "ent_coef must be positive");
  need(max_grad_norm > 0.0, "max_grad_norm must be positive");
  need(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  need(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  need(adam_eps > 0.0, "adam_eps must be positive");
  need(workers > 0, "workers must be positive");
  need(envs_per_worker > 0, "envs_per_worker must be positive");
  need(rollout_length > 0, "rollout_length must be positive");
  need(minibatches > 0, "minibatches must be positive");
  need(epochs > 0, "epochs must be positive");
  need(total_env_steps > 0, "total_env_steps must be positive");
  need(episode_length > 0, "episode_length must be positive");
  need(hidden_dim > 0, "hidden_dim must be positive");
  need(mlp_layers >= 0, "mlp_layers must be non-negative");
  need(checkpoint_interval > 0, "checkpoint_interval must be positive");
  need(eval_episodes > 0, "eval_episodes must be positive");
  if (recurrent) {
    need(segment_length > 0 && rollout_length % segment_length == 0,
         "rollout_length must be a multiple of segment_length when recurrent");
  }
  const std::int64_t units = recurrent
                                 ? static_cast<std::int64_t>(workers) * envs_per_worker * 2 *
                                       (segment_length > 0 ? rollout_length / segment_length : 0)
                                 : steps_per_iteration() * 2;
  need(minibatches <= units, "more minibatches than training units in a batch");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

}  // namespace bslab::train
