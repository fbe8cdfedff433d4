#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "fsloc/adam.hpp"
#include "fsloc/layers.hpp"

namespace fsloc {

/// Flat, name-sorted view of everything a trained model needs.
///
/// File layout (all integers and floats little-endian):
///   "FSLM"  u16 version=1  u32 entry_count
///   per entry, sorted by name:
///     u32 name_length, name bytes (UTF-8)
///     u8  dtype tag (1 = float64)
///     u32 rank, rank x u64 dims
///     product(dims) x f64 payload
///
/// Entry names are namespaced: `param/<name>`, `buffer/<name>`,
/// `adam/m/<name>`, `adam/v/<name>`, `adam/state/{step,lr,weight_decay,
/// beta1,beta2,eps}`, `meta/<key>`, `frozen/<name>` (scalar 1 when the
/// parameter is not trainable).
struct Checkpoint {
  std::map<std::string, Tensor> entries;

  static Checkpoint capture(const ParameterStore& store, const Adam* adam,
                            const std::map<std::string, double>& meta);

  /// Copies parameter and buffer values into a store built with the same
  /// architecture. Throws if a name is missing or a shape differs.
  void restore(ParameterStore& store) const;
  /// Rebuilds optimizer state for `store`'s slot order.
  std::optional<Adam> restore_adam(const ParameterStore& store) const;

  std::optional<double> meta(const std::string& key) const;
  double meta_or(const std::string& key, double fallback) const;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsloc
