#include "bslab/policy/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "bslab/common/error.hpp"
#include "bslab/common/text.hpp"

namespace bslab::policy {
namespace fs = std::filesystem;
namespace {

constexpr const char* kManifestHeader = "# bslab array manifest v1";

std::string dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(const std::string& in, std::size_t pos) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return bits;
}

}  // namespace

void write_arrays(const fs::path& manifest_path, const fs::path& blob_path,
                  const std::vector<NamedArray>& arrays, Dtype dtype) {
  std::string manifest = std::string(kManifestHeader) + "\n";
  std::string blob;
  for (const auto& a : arrays) {
    if (a.values.size() != static_cast<std::size_t>(a.rows) * static_cast<std::size_t>(a.cols)) {
      throw ContractError("array '" + a.name + "' size does not match its shape");
    }
    manifest += a.name + " " + dtype_name(dtype) + " " + std::to_string(a.rows) + "," +
                std::to_string(a.cols) + " " + std::to_string(blob.size()) + "\n";
    for (double v : a.values) {
      if (dtype == Dtype::F32) {
        put_le(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(blob, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  write_file(manifest_path, manifest);
  write_file(blob_path, blob);
}

std::vector<NamedArray> read_arrays(const fs::path& manifest_path, const fs::path& blob_path) {
  const std::string manifest = read_file(manifest_path);
  const std::string blob = read_file(blob_path);
  const std::string stem = manifest_path.filename().string();
  std::istringstream is(manifest);
  std::string line;
  std::getline(is, line);
  if (line != kManifestHeader) throw DataError("bad manifest header in " + stem);
  std::vector<NamedArray> arrays;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    NamedArray a;
    std::string dtype, shape;
    std::size_t offset = 0;
    char comma = 0;
    if (!(ls >> a.name >> dtype >> shape >> offset)) {
      throw DataError(stem + " line " + std::to_string(line_no) + ": malformed entry");
    }
    std::istringstream ss(shape);
    if (!(ss >> a.rows >> comma >> a.cols) || comma != ',' || a.rows <= 0 || a.cols <= 0) {
      throw DataError(stem + " line " + std::to_string(line_no) + ": bad shape '" + shape + "'");
    }
    const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (width == 0) throw DataError("unknown dtype '" + dtype + "'");
    const std::size_t n = static_cast<std::size_t>(a.rows) * static_cast<std::size_t>(a.cols);
    if (offset + n * width > blob.size()) {
      throw DataError(blob_path.filename().string() + " is truncated (array '" + a.name + "')");
    }
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pos = offset + i * width;
      a.values[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(blob, pos)))
                               : std::bit_cast<double>(get_le<std::uint64_t>(blob, pos));
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

nlohmann::json config_to_json(const PolicyConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"mlp_layers", c.mlp_layers},
          {"recurrent", c.recurrent},
          {"action_count", c.action_count}};
}

PolicyConfig config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.mlp_layers = j.at("mlp_layers").get<int>();
  c.recurrent = j.at("recurrent").get<bool>();
  c.action_count = j.at("action_count").get<int>();
  return c;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  std::vector<NamedArray> arrays;
  const auto& p = ckpt.params;
  for (const auto& s : p.slots) {
    arrays.push_back(NamedArray{s.name, s.rows, s.cols,
                                std::vector<double>(p.values.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                                    p.values.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size()))});
  }
  fs::create_directories(dir);
  write_arrays(dir / "manifest.txt", dir / "params.bin", arrays, Dtype::F32);

  const auto& m = ckpt.meta;
  nlohmann::json meta = {{"format", "bslab-checkpoint-1"},
                         {"config", config_to_json(p.config)},
                         {"init_seed", p.seed},
                         {"train_steps", p.train_steps},
                         {"layout", m.layout},
                         {"mode", m.mode},
                         {"seed", m.seed},
                         {"env_steps", m.env_steps},
                         {"updates", m.updates},
                         {"eval_score", m.eval_score},
                         {"episode_length", m.episode_length},
                         {"behavior_spec", m.behavior_spec},
                         {"extra", m.extra}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed meta.json in " + dir.string() + ": " + e.what());
  }
  const std::vector<NamedArray> arrays = read_arrays(dir / "manifest.txt", dir / "params.bin");

  Checkpoint ck;
  try {
    ck.params.config = config_from_json(meta.at("config"));
    ck.params.seed = meta.at("init_seed").get<std::uint64_t>();
    ck.params.train_steps = meta.at("train_steps").get<std::int64_t>();
    auto& m = ck.meta;
    m.layout = meta.at("layout").get<std::string>();
    m.mode = meta.at("mode").get<std::string>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.env_steps = meta.at("env_steps").get<std::int64_t>();
    m.updates = meta.at("updates").get<std::int64_t>();
    m.eval_score = meta.at("eval_score").get<double>();
    m.episode_length = meta.at("episode_length").get<int>();
    m.behavior_spec = meta.at("behavior_spec").get<std::string>();
    m.extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("incomplete meta.json in " + dir.string() + ": " + e.what());
  }
  ck.params.slots = parameter_layout(ck.params.config);
  ck.params.values.assign(ck.params.slots.back().offset + ck.params.slots.back().size(), 0.0);
  if (arrays.size() != ck.params.slots.size()) {
    throw DataError("checkpoint " + dir.string() + " has " + std::to_string(arrays.size()) +
                    " arrays, config expects " + std::to_string(ck.params.slots.size()));
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const auto& s = ck.params.slots[i];
    const auto& a = arrays[i];
    if (a.name != s.name || a.rows != s.rows || a.cols != s.cols) {
      throw DataError("checkpoint array '" + a.name + "' does not match expected '" + s.name + "'");
    }
    std::copy(a.values.begin(), a.values.end(),
              ck.params.values.begin() + static_cast<std::ptrdiff_t>(s.offset));
  }
  return ck;
}

}  // namespace bslab::policy
