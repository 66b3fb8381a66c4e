#pragma once

#include <cstdint>
#include <string>

#include "siamret/settings.hpp"
#include "siamret/siamese_ranker.hpp"
#include "siamret/text_pipeline.hpp"

namespace siamret {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  RunSettings settings;
  Vocabulary vocabulary;
  ScoreModel model;
  TrainHistory history;
};

// Little-endian binary: "SRCK", u32 version, settings and vocabulary text,
// both nets (spec + named float64 tensors), history, trailing CRC-32.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, std::string_view source = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace siamret
