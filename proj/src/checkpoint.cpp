#include "stsr/checkpoint.hpp"

#include <array>
#include <fstream>

#include "stsr/grid.hpp"

namespace stsr {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'T', 'S', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("checkpoint is truncated");
  return v;
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    auto t = tensor.detach().cpu().contiguous();
    std::uint32_t code = 0;
    if (t.scalar_type() == torch::kFloat64) {
      code = 1;
    } else {
      t = t.to(torch::kFloat32);
    }
    put<std::uint32_t>(out, code);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(out, d);
    out.write(static_cast<const char*>(t.data_ptr()),
              static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kMagic) throw ValidationError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::string meta(get<std::uint64_t>(in), '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  ckpt.meta = nlohmann::json::parse(meta);
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto code = get<std::uint32_t>(in);
    const auto rank = get<std::uint32_t>(in);
    std::vector<std::int64_t> dims;
    for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(get<std::int64_t>(in));
    auto t = torch::empty(dims, code == 1 ? torch::kFloat64 : torch::kFloat32);
    in.read(static_cast<char*>(t.data_ptr()),
            static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!in) throw ValidationError("checkpoint is truncated");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void append_state(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix) {
  for (const auto& item : module.named_parameters()) {
    ckpt.tensors.emplace_back(prefix + "." + item.key(), item.value().detach().clone());
  }
  for (const auto& item : module.named_buffers()) {
    ckpt.tensors.emplace_back(prefix + "." + item.key(), item.value().detach().clone());
  }
}

void restore_state(const Checkpoint& ckpt, torch::nn::Module& module, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  const auto copy_into = [&](const std::string& key, torch::Tensor& dst) {
    const auto* src = ckpt.find(prefix + "." + key);
    if (src == nullptr) {
      throw ValidationError("checkpoint is missing tensor '" + prefix + "." + key + "'");
    }
    if (src->sizes() != dst.sizes()) {
      throw ValidationError("checkpoint tensor '" + prefix + "." + key + "' has the wrong shape");
    }
    dst.copy_(*src);
  };
  for (auto& item : module.named_parameters()) copy_into(item.key(), item.value());
  for (auto& item : module.named_buffers()) copy_into(item.key(), item.value());
}

}  // namespace stsr
