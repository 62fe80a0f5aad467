#include "bslab/shaping/behavior.hpp"

#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "bslab/common/error.hpp"

namespace bslab::shaping {

std::string_view to_string(BehaviorId id) {
  switch (id) {
    case BehaviorId::DeliveryAct: return "delivery_act";
    case BehaviorId::OnionInPot: return "onion_in_pot";
    case BehaviorId::Plating: return "plating";
  }
  return "?";
}

BehaviorId parse_behavior_id(std::string_view s) {
  for (auto id : {BehaviorId::DeliveryAct, BehaviorId::OnionInPot, BehaviorId::Plating}) {
    if (to_string(id) == s) return id;
  }
  throw ParseError("unknown behavior id '" + std::string(s) + "'");
}

double WeightDistribution::sample(RngStream& rng) const {
  switch (kind) {
    case Kind::Normal: return rng.normal(a, b);
    case Kind::Uniform: return a + (b - a) * rng.uniform();
    case Kind::Constant: return a;
  }
  return 0.0;
}

void BehaviorSpec::validate() const {
  std::set<BehaviorId> seen;
  for (const auto& b : behaviors) {
    if (!seen.insert(b.id).second) {
      throw ContractError("behavior spec: duplicate id " + std::string(to_string(b.id)));
    }
    const auto& d = b.distribution;
    if (!std::isfinite(d.a) || !std::isfinite(d.b)) {
      throw ContractError("behavior spec: non-finite distribution parameter");
    }
    if (d.kind == WeightDistribution::Kind::Normal && d.b <= 0.0) {
      throw ContractError("behavior spec: normal stddev must be positive");
    }
    if (d.kind == WeightDistribution::Kind::Uniform && d.b < d.a) {
      throw ContractError("behavior spec: uniform high < low");
    }
  }
}

BehaviorSpec overcooked_spec() {
  const WeightDistribution std_normal{WeightDistribution::Kind::Normal, 0.0, 1.0};
  return BehaviorSpec{{{BehaviorId::DeliveryAct, std_normal},
                       {BehaviorId::OnionInPot, std_normal},
                       {BehaviorId::Plating, std_normal}}};
}

std::string format_spec(const BehaviorSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < spec.behaviors.size(); ++i) {
    const auto& b = spec.behaviors[i];
    if (i) os << ';';
    os << to_string(b.id) << ':';
    switch (b.distribution.kind) {
      case WeightDistribution::Kind::Normal:
        os << "normal(" << b.distribution.a << ',' << b.distribution.b << ')';
        break;
      case WeightDistribution::Kind::Uniform:
        os << "uniform(" << b.distribution.a << ',' << b.distribution.b << ')';
        break;
      case WeightDistribution::Kind::Constant:
        os << "constant(" << b.distribution.a << ')';
        break;
    }
  }
  return os.str();
}

BehaviorSpec parse_spec(std::string_view text) {
  static const std::regex entry(
      R"(\s*([a-z_]+)\s*:\s*(normal|uniform|constant)\s*\(\s*([^,\)\s]+)\s*(?:,\s*([^\)\s]+)\s*)?\)\s*)");
  BehaviorSpec spec;
  std::string s(text);
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(';', start);
    const std::string item = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    std::smatch m;
    if (!std::regex_match(item, m, entry)) {
      throw ParseError("behavior spec: malformed entry '" + item + "'");
    }
    Behavior b{parse_behavior_id(m[1].str()), {}};
    try {
      b.distribution.a = std::stod(m[3].str());
      if (m[2] == "normal") {
        b.distribution.kind = WeightDistribution::Kind::Normal;
        b.distribution.b = m[4].matched ? std::stod(m[4].str()) : 1.0;
      } else if (m[2] == "uniform") {
        if (!m[4].matched) throw ParseError("behavior spec: uniform needs two bounds");
        b.distribution.kind = WeightDistribution::Kind::Uniform;
        b.distribution.b = std::stod(m[4].str());
      } else {
        b.distribution.kind = WeightDistribution::Kind::Constant;
        b.distribution.b = 0.0;
      }
    } catch (const std::invalid_argument&) {
      throw ParseError("behavior spec: bad number in '" + item + "'");
    }
    spec.behaviors.push_back(b);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what());
  }
  return spec;
}

BehaviorWeights sample_weights(const BehaviorSpec& spec, RngStream& rng) {
  BehaviorWeights w;
  w.reserve(spec.size());
  for (const auto& b : spec.behaviors) w.push_back(b.distribution.sample(rng));
  return w;
}

bool event_flag(const env::AgentEvents& events, BehaviorId id) {
  switch (id) {
    case BehaviorId::DeliveryAct: return events.delivered;
    case BehaviorId::OnionInPot: return events.onion_in_pot;
    case BehaviorId::Plating: return events.plated;
  }
  return false;
}

std::array<double, 2> shaped_reward(const BehaviorSpec& spec,
                                    const std::array<double, 2>& base,
                                    const std::array<env::AgentEvents, 2>& events,
                                    const std::array<BehaviorWeights, 2>& weights) {
  std::array<double, 2> out = base;
  for (std::size_t i = 0; i < 2; ++i) {
    if (weights[i].size() != spec.size()) {
      throw ContractError("shaped_reward: weight vector length " +
                          std::to_string(weights[i].size()) + " != " +
                          std::to_string(spec.size()));
    }
    for (std::size_t k = 0; k < spec.size(); ++k) {
      if (event_flag(events[i], spec.behaviors[k].id)) out[i] += weights[i][k];
    }
  }
  return out;
}

env::FeatureVector augment_observation(env::FeatureVector features,
                                       const BehaviorWeights& weights) {
  features.insert(features.end(), weights.begin(), weights.end());
  return features;
}

std::string_view to_string(ControlSetting s) {
  switch (s) {
    case ControlSetting::Discourage: return "Discourage";
    case ControlSetting::Neutral: return "Neutral";
    case ControlSetting::Encourage: return "Encourage";
  }
  return "?";
}

ControlSetting parse_control_setting(std::string_view s) {
  for (auto c : {ControlSetting::Discourage, ControlSetting::Neutral, ControlSetting::Encourage}) {
    if (to_string(c) == s) return c;
  }
  throw ParseError("unknown control setting '" + std::string(s) + "'");
}

BehaviorWeights settings_to_weights(const ControlPair& controls) {
  const double dishes = static_cast<int>(controls.dishes);
  const double onions = static_cast<int>(controls.onions);
  return {dishes, onions, dishes};
}

const std::array<ControlPair, 8>& allowed_condition_pairs() {
  using C = ControlSetting;
  static const std::array<ControlPair, 8> pairs{{
      {C::Discourage, C::Neutral},
      {C::Discourage, C::Encourage},
      {C::Neutral, C::Discourage},
      {C::Neutral, C::Neutral},
      {C::Neutral, C::Encourage},
      {C::Encourage, C::Discourage},
      {C::Encourage, C::Neutral},
      {C::Encourage, C::Encourage},
  }};
  return pairs;
}

ControlPair sample_condition_weights(RngStream& rng) {
  return allowed_condition_pairs()[rng.below(8)];
}

}  // namespace bslab::shaping
