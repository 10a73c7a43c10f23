#include <fstream>
#include <cstring>
#include <map>
#include <sstream>

#include "zigan/errors.hpp"
#include "zigan/training.hpp"
#include "zigan/util.hpp"

namespace zigan {
namespace fs = std::filesystem;
namespace {

[[noreturn]] void corrupt(const std::string& msg) { throw Error(ErrorCode::CorruptCheckpoint, msg); }

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kUInt8: return "uint8";
    default: corrupt(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  if (name == "uint8") return torch::kUInt8;
  corrupt("unknown dtype '" + name + "' in manifest");
}

std::string shape_text(const torch::Tensor& t) {
  std::string s;
  for (auto d : t.sizes()) s += (s.empty() ? "" : "x") + std::to_string(d);
  return s.empty() ? "scalar" : s;
}

std::vector<int64_t> parse_shape(const std::string& s) {
  std::vector<int64_t> dims;
  if (s == "scalar") return dims;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    try {
      std::size_t used = 0;
      const auto d = std::stoll(item, &used);
      if (used != item.size() || d < 0) corrupt("bad shape '" + s + "' in manifest");
      dims.push_back(d);
    } catch (const std::logic_error&) {
      corrupt("bad shape '" + s + "' in manifest");
    }
  }
  return dims;
}

// Tensor names double as file names; only dots, underscores and alphanumerics occur.
std::string file_for(const std::string& name) { return name + ".bin"; }

void write_tensor(const fs::path& path, const torch::Tensor& t) {
  const auto c = t.detach().contiguous().cpu();
  write_file_atomic(path, std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(c.data_ptr()), c.nbytes()));
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) corrupt("missing tensor file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  auto tmp = dir;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp / "params", ec);
  fs::create_directories(tmp / "optimizer", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + tmp.string());

  std::string manifest = "# section\tname\tdtype\tshape\tbyte_order\tfile\n";
  auto emit = [&](const std::string& section, const std::string& name, const torch::Tensor& t) {
    const auto rel = fs::path(section) / file_for(name);
    write_tensor(tmp / rel, t);
    manifest += section + "\t" + name + "\t" + dtype_name(t.scalar_type()) + "\t" + shape_text(t) + "\tlittle\t" +
                rel.generic_string() + "\n";
  };
  for (const auto& [name, t] : checkpoint.model) emit("params", name, t);
  for (const auto& [name, t] : checkpoint.optimizer) emit("optimizer", name, t);
  write_file_atomic(tmp / "manifest.tsv", manifest);

  write_file_atomic(tmp / "optimizer" / "state.txt",
                    "generator_steps = " + std::to_string(checkpoint.generator_steps) + "\n" +
                        "discriminator_steps = " + std::to_string(checkpoint.discriminator_steps) + "\n");
  if (checkpoint.rng_state.defined()) write_tensor(tmp / "rng.bin", checkpoint.rng_state);
  write_file_atomic(tmp / "config.txt", checkpoint.config.serialize());

  std::ostringstream meta;
  meta << "epoch = " << checkpoint.epoch << "\n"
       << "global_step = " << checkpoint.global_step << "\n"
       << "seed = " << checkpoint.config.seed << "\n"
       << "config_hash = " << checkpoint.config.hash() << "\n"
       << "rng_bytes = " << (checkpoint.rng_state.defined() ? checkpoint.rng_state.nbytes() : 0) << "\n";
  write_file_atomic(tmp / "meta.txt", meta.str());

  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot move checkpoint into " + dir.string());
}

namespace {

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  if (!fs::exists(path)) corrupt("missing " + path.string());
  std::map<std::string, std::string> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) corrupt("malformed line '" + line + "' in " + path.string());
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

long long number_at(const std::map<std::string, std::string>& kv, const std::string& key, const fs::path& from) {
  auto it = kv.find(key);
  if (it == kv.end()) corrupt("missing '" + key + "' in " + from.string());
  try {
    return std::stoll(it->second);
  } catch (const std::logic_error&) {
    corrupt("bad value for '" + key + "' in " + from.string());
  }
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) corrupt("checkpoint directory " + dir.string() + " does not exist");
  Checkpoint c;

  const auto config_kv = read_key_values(dir / "config.txt");
  try {
    const auto unknown = c.config.apply(config_kv);
    if (!unknown.empty()) corrupt("unknown config key '" + unknown.front() + "'");
    c.config.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptCheckpoint) throw;
    corrupt(std::string("invalid stored config: ") + e.what());
  }

  const auto meta_path = dir / "meta.txt";
  const auto meta = read_key_values(meta_path);
  c.epoch = static_cast<int>(number_at(meta, "epoch", meta_path));
  c.global_step = static_cast<long>(number_at(meta, "global_step", meta_path));
  if (meta.count("config_hash") == 0 || meta.at("config_hash") != std::to_string(c.config.hash())) {
    corrupt("config hash does not match the stored config");
  }

  const auto state_path = dir / "optimizer" / "state.txt";
  const auto state = read_key_values(state_path);
  c.generator_steps = number_at(state, "generator_steps", state_path);
  c.discriminator_steps = number_at(state, "discriminator_steps", state_path);

  if (!fs::exists(dir / "manifest.tsv")) corrupt("missing manifest.tsv");
  std::istringstream manifest(read_text_file(dir / "manifest.tsv"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 6) corrupt("malformed manifest line '" + line + "'");
    const auto& [section, name, dtype, shape, order, file] =
        std::tie(fields[0], fields[1], fields[2], fields[3], fields[4], fields[5]);
    if (order != "little") corrupt("unsupported byte order '" + order + "'");
    if (section != "params" && section != "optimizer") corrupt("unknown section '" + section + "'");
    const auto type = dtype_from(dtype);
    const auto dims = parse_shape(shape);
    const auto bytes = read_bytes(dir / file);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(type));
    if (static_cast<std::size_t>(t.nbytes()) != bytes.size()) {
      corrupt("tensor " + name + " holds " + std::to_string(bytes.size()) + " bytes; manifest shape " + shape +
              " needs " + std::to_string(t.nbytes()));
    }
    std::memcpy(t.data_ptr(), bytes.data(), bytes.size());
    (section == "params" ? c.model : c.optimizer).emplace_back(name, t);
  }
  if (c.model.empty()) corrupt("checkpoint holds no parameters");

  const auto rng_bytes = number_at(meta, "rng_bytes", meta_path);
  if (rng_bytes > 0) {
    const auto bytes = read_bytes(dir / "rng.bin");
    if (static_cast<long long>(bytes.size()) != rng_bytes) corrupt("rng.bin has the wrong size");
    c.rng_state = torch::empty({rng_bytes}, torch::kUInt8);
    std::memcpy(c.rng_state.data_ptr(), bytes.data(), bytes.size());
  }

  // The stored tensors must fit the architecture the stored config describes.
  auto probe = ZiGanModel::create(c.config);
  std::map<std::string, torch::Tensor> stored(c.model.begin(), c.model.end());
  const auto expected = probe.named_state();
  if (stored.size() != expected.size()) corrupt("tensor count does not match the configured architecture");
  for (const auto& [name, t] : expected) {
    auto it = stored.find(name);
    if (it == stored.end()) corrupt("missing tensor " + name);
    if (it->second.sizes() != t.sizes() || it->second.scalar_type() != t.scalar_type()) {
      corrupt("tensor " + name + " does not match the configured architecture");
    }
  }
  return c;
}

}  // namespace zigan
