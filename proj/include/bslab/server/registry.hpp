#ifndef BSLAB_SERVER_REGISTRY_HPP_
#define BSLAB_SERVER_REGISTRY_HPP_

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/policy/checkpoint.hpp"

namespace bslab::server {

struct RegistryEntry {
  std::string id;  // path relative to the registry root
  std::shared_ptr<const policy::Checkpoint> checkpoint;

  const std::string& layout() const { return checkpoint->meta.layout; }
  const std::string& mode() const { return checkpoint->meta.mode; }
};

// Immutable set of checkpoints the server may pair participants with.
// Policy inference reads the shared snapshots concurrently.
class Registry {
 public:
  Registry() = default;
  explicit Registry(std::vector<RegistryEntry> entries);

  // Every directory below `root` holding meta.json is loaded as a checkpoint.
  static Registry load(const std::filesystem::path& root);

  // Best (eval score, then later step) checkpoint for layout and mode, or null.
  const RegistryEntry* find(const std::string& layout, const std::string& mode) const;
  const RegistryEntry* by_id(const std::string& id) const;
  const std::vector<RegistryEntry>& entries() const { return entries_; }
  nlohmann::json summary() const;

 private:
  std::vector<RegistryEntry> entries_;
};

}  // namespace bslab::server

#endif  // BSLAB_SERVER_REGISTRY_HPP_
