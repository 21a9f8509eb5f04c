#include "fas/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace fas {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'A', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError(path.string() + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const std::filesystem::path& path) {
  if (n > (std::uint64_t{1} << 24)) throw DataError(path.string() + ": implausible checkpoint field length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError(path.string() + ": truncated checkpoint");
  return s;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : sections)
    if (n == name) return &t;
  return nullptr;
}

void Checkpoint::add(const std::string& prefix, const std::vector<NamedTensor>& tensors) {
  for (const auto& [name, t] : tensors) sections.emplace_back(prefix + name, t);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  std::string header = "format_version=" + std::to_string(Checkpoint::kFormatVersion) + "\n";
  for (const auto& [key, value] : checkpoint.header) {
    if (key == "format_version") continue;
    header += key + "=" + value + "\n";
  }
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u64(out, checkpoint.sections.size());
  for (const auto& [name, t] : checkpoint.sections) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + ": not a checkpoint file");
  Checkpoint ckpt;
  std::istringstream header(get_bytes(in, get_u64(in, path), path));
  for (std::string line; std::getline(header, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": malformed header line '" + line + "'");
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (ckpt.header["format_version"] != std::to_string(Checkpoint::kFormatVersion)) {
    throw DataError(path.string() + ": unsupported checkpoint version '" + ckpt.header["format_version"] + "'");
  }
  const std::uint64_t count = get_u64(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get_u64(in, path), path);
    ckpt.sections.emplace_back(std::move(name), read_tensor(in));
  }
  return ckpt;
}

void put_config(Checkpoint& checkpoint, const ViTConfig& config) {
  auto& h = checkpoint.header;
  h["vit.image_height"] = std::to_string(config.image_height);
  h["vit.image_width"] = std::to_string(config.image_width);
  h["vit.channels"] = std::to_string(config.channels);
  h["vit.patch_size"] = std::to_string(config.patch_size);
  h["vit.embed_dim"] = std::to_string(config.embed_dim);
  h["vit.depth"] = std::to_string(config.depth);
  h["vit.heads"] = std::to_string(config.heads);
  h["vit.mlp_ratio"] = format_double(config.mlp_ratio);
  h["vit.num_classes"] = std::to_string(config.num_classes);
  h["vit.layernorm_eps"] = format_double(config.layernorm_eps);
}

ViTConfig config_from_header(const Checkpoint& checkpoint) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = checkpoint.header.find(key);
    if (it == checkpoint.header.end()) throw DataError("checkpoint header lacks '" + key + "'");
    return it->second;
  };
  ViTConfig c;
  try {
    c.image_height = std::stoul(get("vit.image_height"));
    c.image_width = std::stoul(get("vit.image_width"));
    c.channels = std::stoul(get("vit.channels"));
    c.patch_size = std::stoul(get("vit.patch_size"));
    c.embed_dim = std::stoul(get("vit.embed_dim"));
    c.depth = std::stoul(get("vit.depth"));
    c.heads = std::stoul(get("vit.heads"));
    c.mlp_ratio = std::stod(get("vit.mlp_ratio"));
    c.num_classes = std::stoul(get("vit.num_classes"));
    c.layernorm_eps = std::stod(get("vit.layernorm_eps"));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint header holds a non-numeric model dimension");
  }
  return c;
}

void load_into(const Checkpoint& checkpoint, const std::string& prefix, const ViTParams& target, bool skip_head) {
  std::string problems;
  std::vector<std::pair<Tensor, const Tensor*>> copies;
  for (const auto& [name, t] : target.named_parameters()) {
    if (skip_head && name.rfind("head.", 0) == 0) continue;
    const Tensor* found = checkpoint.find(prefix + name);
    if (!found) {
      problems += "\n  " + prefix + name + ": expected " + shape_to_string(t.shape()) + ", found nothing";
    } else if (found->shape() != t.shape()) {
      problems += "\n  " + prefix + name + ": expected " + shape_to_string(t.shape()) + ", found " +
                  shape_to_string(found->shape());
    } else {
      copies.emplace_back(t, found);
    }
  }
  if (!problems.empty()) throw ShapeError("checkpoint does not match the model:" + problems);
  for (auto& [dst, src] : copies) {
    auto d = dst.data();
    auto s = src->data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace fas
