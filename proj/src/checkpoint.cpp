#include "dlseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dlseg/errors.hpp"

namespace dlseg {

namespace {

constexpr char kMagic[8] = {'D', 'L', 'S', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint: " + path.string());
  return v;
}

std::string take_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = take<std::uint32_t>(in, path);
  if (n > (1u << 28)) throw IoError("corrupt checkpoint string length: " + path.string());
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError("truncated checkpoint: " + path.string());
  return s;
}

}  // namespace

void Checkpoint::add(const std::string& name, const torch::Tensor& t) {
  if (has(name)) throw ValidationError("duplicate checkpoint tensor: " + name);
  tensors.emplace_back(name, t.detach().to(torch::kFloat32).contiguous().clone());
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw IoError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::add_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(true)) add(prefix + item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) add(prefix + item.key(), item.value());
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& module) const {
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    const auto& src = get(prefix + name);
    if (src.sizes() != dst.sizes()) throw IoError("shape mismatch for checkpoint tensor '" + prefix + name + "'");
    dst.copy_(src);
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, ckpt.kind);
    put_string(out, ckpt.meta.serialize());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      put_string(out, name);
      auto c = t.to(torch::kFloat32).contiguous();
      put<std::uint32_t>(out, static_cast<std::uint32_t>(c.dim()));
      for (auto d : c.sizes()) put<std::int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(c.data_ptr<float>()), static_cast<std::streamsize>(c.numel() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path.string());
  const auto version = take<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  Checkpoint ckpt;
  ckpt.kind = take_string(in, path);
  if (!expected_kind.empty() && ckpt.kind != expected_kind)
    throw IoError(path.string() + " holds a '" + ckpt.kind + "' checkpoint, expected '" + expected_kind + "'");
  ckpt.meta = KvConfig::parse(take_string(in, path));
  const auto count = take<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = take_string(in, path);
    const auto ndim = take<std::uint32_t>(in, path);
    if (ndim > 8) throw IoError("corrupt tensor rank in " + path.string());
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = take<std::int64_t>(in, path);
    auto t = torch::empty(dims, torch::kFloat32);
    const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(float));
    if (bytes && !in.read(reinterpret_cast<char*>(t.data_ptr<float>()), bytes)) throw IoError("truncated checkpoint: " + path.string());
    ckpt.tensors.emplace_back(std::move(name), t);
  }
  return ckpt;
}

}  // namespace dlseg
