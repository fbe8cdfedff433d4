#include "fsloc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "fsloc/error.hpp"

namespace fsloc {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'L', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kFloat64 = 1;

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("checkpoint truncated", 0);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

Checkpoint Checkpoint::capture(const ParameterStore& store, const Adam* adam,
                               const std::map<std::string, double>& meta) {
  Checkpoint c;
  for (const auto& p : store.parameters()) {
    c.entries["param/" + p.name] = p.value;
    if (!p.trainable) c.entries["frozen/" + p.name] = Tensor::scalar(1.0);
  }
  for (const auto& b : store.buffers()) c.entries["buffer/" + b.name] = b.value;
  if (adam && adam->steps() > 0) {
    const auto& m = adam->first_moments();
    const auto& v = adam->second_moments();
    for (std::size_t s = 0; s < store.size(); ++s) {
      c.entries["adam/m/" + store[s].name] = m[s];
      c.entries["adam/v/" + store[s].name] = v[s];
    }
    const auto& cfg = adam->config();
    c.entries["adam/state/step"] = Tensor::scalar(static_cast<double>(adam->steps()));
    c.entries["adam/state/lr"] = Tensor::scalar(cfg.lr);
    c.entries["adam/state/weight_decay"] = Tensor::scalar(cfg.weight_decay);
    c.entries["adam/state/beta1"] = Tensor::scalar(cfg.beta1);
    c.entries["adam/state/beta2"] = Tensor::scalar(cfg.beta2);
    c.entries["adam/state/eps"] = Tensor::scalar(cfg.eps);
  }
  for (const auto& [k, v] : meta) c.entries["meta/" + k] = Tensor::scalar(v);
  return c;
}

void Checkpoint::restore(ParameterStore& store) const {
  auto fetch = [&](const std::string& key, const Tensor& like) -> const Tensor& {
    auto it = entries.find(key);
    if (it == entries.end()) throw ParseError("checkpoint has no entry " + key, 0);
    if (it->second.shape() != like.shape())
      throw ParseError("checkpoint entry " + key + " has shape " + shape_string(it->second.shape()) +
                           ", model expects " + shape_string(like.shape()),
                       0);
    return it->second;
  };
  for (auto& p : store.parameters()) {
    p.value = fetch("param/" + p.name, p.value);
    p.trainable = !entries.count("frozen/" + p.name);
  }
  for (auto& b : store.buffers()) b.value = fetch("buffer/" + b.name, b.value);
}

std::optional<Adam> Checkpoint::restore_adam(const ParameterStore& store) const {
  auto step = entries.find("adam/state/step");
  if (step == entries.end()) return std::nullopt;
  AdamConfig cfg;
  cfg.lr = entries.at("adam/state/lr").item();
  cfg.weight_decay = entries.at("adam/state/weight_decay").item();
  cfg.beta1 = entries.at("adam/state/beta1").item();
  cfg.beta2 = entries.at("adam/state/beta2").item();
  cfg.eps = entries.at("adam/state/eps").item();
  std::vector<Tensor> m, v;
  for (const auto& p : store.parameters()) {
    m.push_back(entries.at("adam/m/" + p.name));
    v.push_back(entries.at("adam/v/" + p.name));
  }
  Adam adam(cfg);
  adam.restore(static_cast<std::uint64_t>(step->second.item()), std::move(m), std::move(v));
  return adam;
}

std::optional<double> Checkpoint::meta(const std::string& key) const {
  auto it = entries.find("meta/" + key);
  if (it == entries.end()) return std::nullopt;
  return it->second.item();
}

double Checkpoint::meta_or(const std::string& key, double fallback) const {
  return meta(key).value_or(fallback);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& [name, t] : ckpt.entries) {  // std::map iterates name-sorted
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, kFloat64);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    for (double v : t.data()) put<double>(os, v);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not an FSLM checkpoint", 0);
  const auto version = get<std::uint16_t>(is);
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  const auto count = get<std::uint32_t>(is);
  Checkpoint c;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ParseError("checkpoint truncated in entry name", 0);
    if (get<std::uint8_t>(is) != kFloat64) throw ParseError("unsupported dtype in entry " + name, 0);
    const auto rank = get<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is));
    Tensor t(shape);
    for (double& v : t.data()) v = get<double>(is);
    c.entries.emplace(std::move(name), std::move(t));
  }
  return c;
}

}  // namespace fsloc
