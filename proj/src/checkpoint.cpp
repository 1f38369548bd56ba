#include "wsod/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wsod {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(bytes, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int k = 0; k < 4; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(bytes, 4);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[k]) << (8 * k);
  return v;
}

void put_head(std::ostream& out, const HeadParams& head, std::size_t noise_dim, NoiseLayout layout) {
  const HeadLayout& l = head.layout();
  put_u64(out, l.classes);
  put_u64(out, l.input_dim);
  put_u64(out, l.hidden);
  put_u64(out, noise_dim);
  put_u64(out, static_cast<std::uint64_t>(layout));
  put_u64(out, head.values().size());
  for (double v : head.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

HeadParams get_head(std::istream& in, std::size_t& noise_dim, NoiseLayout& layout) {
  HeadLayout l;
  l.classes = get_u64(in);
  l.input_dim = get_u64(in);
  l.hidden = get_u64(in);
  noise_dim = get_u64(in);
  const std::uint64_t layout_code = get_u64(in);
  if (layout_code > 1) throw std::runtime_error("checkpoint has an unknown noise layout");
  layout = static_cast<NoiseLayout>(layout_code);
  const std::uint64_t count = get_u64(in);
  if (l.classes < 2 || l.input_dim == 0 || noise_dim > l.input_dim || count != l.parameter_count()) {
    throw std::runtime_error("checkpoint head header is inconsistent");
  }
  HeadParams head(l);
  for (double& v : head.values()) v = std::bit_cast<double>(get_u64(in));
  return head;
}

}  // namespace

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto side = path;
  side += ".meta";
  return side;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  put_u32(out, kCheckpointVersion);
  put_u32(out, 2);
  put_u64(out, ckpt.completed_rounds);
  put_head(out, ckpt.pred.head, 0, NoiseLayout::kShared);
  put_head(out, ckpt.cond.head, ckpt.cond.noise_dim, ckpt.cond.noise_layout);
  if (!out) throw std::runtime_error("failed writing " + path.string());

  std::ofstream meta(checkpoint_sidecar(path), std::ios::trunc);
  meta << "format = wsod-checkpoint\n"
       << "version = " << kCheckpointVersion << '\n'
       << "num_classes = " << ckpt.pred.num_classes() << '\n'
       << "feature_dim = " << ckpt.pred.feature_dim() << '\n'
       << "noise_dim = " << ckpt.cond.noise_dim << '\n'
       << "noise_layout = " << (ckpt.cond.noise_layout == NoiseLayout::kShared ? "shared" : "per_proposal") << '\n'
       << "hidden = " << ckpt.pred.head.layout().hidden << '\n'
       << "completed_rounds = " << ckpt.completed_rounds << '\n'
       << "config_hash = " << ckpt.config_hash << '\n';
  if (!meta) throw std::runtime_error("failed writing checkpoint sidecar");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kCheckpointMagic) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  if (get_u32(in) != 2) throw std::runtime_error("checkpoint must hold two heads");

  Checkpoint ckpt;
  ckpt.completed_rounds = get_u64(in);
  std::size_t noise = 0;
  NoiseLayout layout = NoiseLayout::kShared;
  ckpt.pred.head = get_head(in, noise, layout);
  if (noise != 0) throw std::runtime_error("prediction head cannot take noise");
  ckpt.cond.head = get_head(in, noise, layout);
  ckpt.cond.noise_dim = noise;
  ckpt.cond.noise_layout = layout;
  if (ckpt.cond.num_classes() != ckpt.pred.num_classes() || ckpt.cond.feature_dim() != ckpt.pred.feature_dim()) {
    throw std::runtime_error("checkpoint heads disagree on dimensions");
  }

  std::ifstream meta(checkpoint_sidecar(path));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(' ') + 1);
    value.erase(0, value.find_first_not_of(' '));
    if (key == "config_hash") ckpt.config_hash = value;
  }
  return ckpt;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wsod
