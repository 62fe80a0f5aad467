#include "bslab/server/registry.hpp"

#include <algorithm>

#include "bslab/common/error.hpp"

namespace bslab::server {

namespace fs = std::filesystem;

Registry::Registry(std::vector<RegistryEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const RegistryEntry& a, const RegistryEntry& b) { return a.id < b.id; });
}

Registry Registry::load(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("registry directory " + root.string() + " does not exist");
  std::vector<RegistryEntry> entries;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_directory() || !fs::exists(e.path() / "meta.json")) continue;
    RegistryEntry r;
    r.id = fs::relative(e.path(), root).generic_string();
    r.checkpoint = std::make_shared<const policy::Checkpoint>(policy::load_checkpoint(e.path()));
    entries.push_back(std::move(r));
  }
  return Registry(std::move(entries));
}

const RegistryEntry* Registry::find(const std::string& layout, const std::string& mode) const {
  const RegistryEntry* best = nullptr;
  for (const auto& e : entries_) {
    if (e.layout() != layout || e.mode() != mode) continue;
    const auto& m = e.checkpoint->meta;
    if (!best || m.eval_score > best->checkpoint->meta.eval_score ||
        (m.eval_score == best->checkpoint->meta.eval_score && m.env_steps > best->checkpoint->meta.env_steps)) {
      best = &e;
    }
  }
  return best;
}

const RegistryEntry* Registry::by_id(const std::string& id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

nlohmann::json Registry::summary() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries_) {
    const auto& m = e.checkpoint->meta;
    out.push_back({{"id", e.id},
                   {"layout", m.layout},
                   {"mode", m.mode},
                   {"env_steps", m.env_steps},
                   {"eval_score", m.eval_score}});
  }
  return out;
}

}  // namespace bslab::server
