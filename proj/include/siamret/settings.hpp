#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "siamret/neural_core.hpp"
#include "siamret/siamese_ranker.hpp"

namespace siamret {

// Everything a training run needs besides its input files. Defaults: margin
// 0.15, lr 0.001 decaying linearly to 1% over 100 epochs, relu, 50 epochs.
struct RunSettings {
  TrainConfig train;
  NetKind text_kind = NetKind::bag;  // "mlp" or "sse" in config files
  std::size_t n_hu = 0;
  std::size_t n_emb = 300;
  std::size_t visual_n_hu = 0;
  std::size_t word_dim = 300;
  std::size_t kernels = 300;
  std::size_t window = 5;
  std::string embeddings;  // optional word2vec file
  bool strict = true;

  // Throws config on unknown keys or bad values. Keys that only annotate a
  // manifest (input.*, mode, feature_dim, vocab_size, tool_version) and the
  // fixed schedule keys are accepted so a manifest can be replayed.
  void set(std::string_view key, std::string_view value);
  void validate() const;

  NetSpec text_spec(std::size_t vocab_size) const;
  NetSpec visual_spec(std::size_t feature_dim) const;

  // key=value lines in a fixed order.
  std::string to_key_values() const;
  // Value of one key as written by to_key_values; not_found otherwise.
  std::string get(std::string_view key) const;

  static RunSettings parse(std::istream& in, std::string_view source = "<stream>");
  static RunSettings load(const std::string& path);

  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

std::string_view text_model_name(NetKind kind);

}  // namespace siamret
