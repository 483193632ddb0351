#include "pugan/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pugan {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kMagic = "PUGANCKPT\n";

void append_le(std::string& out, const Tensor<float>& t) {
  const std::size_t start = out.size();
  out.resize(start + t.size() * 4);
  char* dst = out.data() + start;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, t.data(), t.size() * 4);
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(t[i]);
      for (int b = 0; b < 4; ++b) dst[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
  }
}

void read_le(const char* src, Tensor<float>& t) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(t.data(), src, t.size() * 4);
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[i * 4 + b])) << (8 * b);
      t[i] = std::bit_cast<float>(bits);
    }
  }
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::require_stage(Stage expected, const std::string& consumer) const {
  if (stage != expected)
    throw CheckpointStageError(consumer + " needs a stage=" + to_string(expected) + " checkpoint, got stage=" +
                               to_string(stage));
}

RunConfig Checkpoint::run_config() const {
  if (config.empty()) return RunConfig{};
  try {
    return parse_run_config(config, RunConfig{});
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("checkpoint config snapshot is invalid: ") + e.what());
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json manifest;
  manifest["schema_version"] = ckpt.schema_version;
  manifest["stage"] = to_string(ckpt.stage);
  manifest["epoch"] = ckpt.epoch;
  manifest["step"] = ckpt.step;
  manifest["config"] = ckpt.config.empty() ? json::object() : json::parse(ckpt.config);
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    table.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}, {"count", t.value.size()}});
    offset += t.value.size();
  }
  manifest["tensors"] = std::move(table);
  const std::string text = manifest.dump(1);

  std::string out;
  out.reserve(kMagic.size() + 16 + text.size() + offset * 4);
  out += kMagic;
  out += std::to_string(text.size());
  out += '\n';
  out += text;
  for (const auto& t : ckpt.tensors) append_le(out, t.value);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source) {
  if (bytes.size() < kMagic.size()) {
    if (kMagic.substr(0, bytes.size()) == bytes) throw CheckpointTruncatedError(source + ": truncated before header");
    throw CheckpointFormatError(source + ": not a checkpoint file");
  }
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CheckpointFormatError(source + ": not a checkpoint file");
  std::size_t pos = kMagic.size();
  const std::size_t eol = bytes.find('\n', pos);
  if (eol == std::string_view::npos) throw CheckpointTruncatedError(source + ": truncated inside header");
  std::size_t manifest_len = 0;
  auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + eol, manifest_len);
  if (ec != std::errc() || end != bytes.data() + eol)
    throw CheckpointFormatError(source + ": malformed manifest length");
  pos = eol + 1;
  if (bytes.size() - pos < manifest_len) throw CheckpointTruncatedError(source + ": truncated inside manifest");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, manifest_len));
  } catch (const json::exception& e) {
    throw CheckpointFormatError(source + ": malformed manifest: " + e.what());
  }
  pos += manifest_len;
  const std::string_view payload = bytes.substr(pos);

  Checkpoint ckpt;
  try {
    ckpt.schema_version = manifest.at("schema_version").get<int>();
    if (ckpt.schema_version != kCheckpointSchemaVersion)
      throw CheckpointVersionError(source + ": schema version " + std::to_string(ckpt.schema_version) +
                                   " is not supported (expected " + std::to_string(kCheckpointSchemaVersion) + ")");
    ckpt.stage = parse_stage(manifest.at("stage").get<std::string>());
    ckpt.epoch = manifest.at("epoch").get<int>();
    ckpt.step = manifest.at("step").get<long>();
    const json& cfg = manifest.at("config");
    ckpt.config = cfg.empty() ? std::string() : cfg.dump(2);

    for (const auto& entry : manifest.at("tensors")) {
      CheckpointTensor t;
      t.name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      for (int d : shape)
        if (d < 0) throw CheckpointShapeError(t.name, "negative extent in " + to_string(shape));
      if (count != numel(shape))
        throw CheckpointShapeError(t.name, "buffer holds " + std::to_string(count) + " values but shape " +
                                               to_string(shape) + " needs " + std::to_string(numel(shape)));
      if ((offset + count) * 4 > payload.size())
        throw CheckpointTruncatedError(source + ": payload ends before tensor '" + t.name + "'");
      t.value = Tensor<float>(shape);
      read_le(payload.data() + offset * 4, t.value);
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointFormatError(source + ": malformed manifest: " + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write then rename so a crash never leaves a half-written file under the final name.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

template <typename T>
void export_module(nn::Module<T>& module, const std::string& prefix, Checkpoint& ckpt) {
  for (auto& [name, p] : module.named_parameters(prefix)) ckpt.tensors.push_back({name, p.value().template cast<float>()});
  for (auto& [name, b] : module.named_buffers(prefix)) ckpt.tensors.push_back({name, b->template cast<float>()});
}

template <typename T>
void import_module(nn::Module<T>& module, const std::string& prefix, const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& name, const Shape& expected) -> const Tensor<float>& {
    const CheckpointTensor* t = ckpt.find(name);
    if (!t) throw CheckpointFormatError("checkpoint has no tensor '" + name + "'");
    if (t->value.shape() != expected)
      throw CheckpointShapeError(name, "checkpoint has " + to_string(t->value.shape()) + ", model expects " +
                                           to_string(expected));
    return t->value;
  };
  // Validate everything before touching the module so a failed load leaves it intact.
  auto params = module.named_parameters(prefix);
  auto buffers = module.named_buffers(prefix);
  for (auto& [name, p] : params) fetch(name, p.shape());
  for (auto& [name, b] : buffers) fetch(name, b->shape());
  for (auto& [name, p] : params) p.mutable_value() = fetch(name, p.shape()).template cast<T>();
  for (auto& [name, b] : buffers) *b = fetch(name, b->shape()).template cast<T>();
}

template void export_module(nn::Module<float>&, const std::string&, Checkpoint&);
template void export_module(nn::Module<double>&, const std::string&, Checkpoint&);
template void import_module(nn::Module<float>&, const std::string&, const Checkpoint&);
template void import_module(nn::Module<double>&, const std::string&, const Checkpoint&);

}  // namespace pugan
