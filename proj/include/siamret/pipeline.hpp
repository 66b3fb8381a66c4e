#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "siamret/checkpoint.hpp"
#include "siamret/corpus_io.hpp"
#include "siamret/retrieval_eval.hpp"
#include "siamret/settings.hpp"

namespace siamret {

inline constexpr const char* kToolVersion = SIAMRET_VERSION;

// File names inside the preprocess and training output directories.
inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kSplitFile = "split.txt";
inline constexpr const char* kTextCacheFile = "text_features.tsv";
inline constexpr const char* kPreprocessInfoFile = "preprocess.txt";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kHistoryFile = "history.tsv";
inline constexpr const char* kManifestFile = "manifest.txt";

struct PreprocessOptions {
  std::string captions_path;
  TermMode mode = TermMode::unigram;
  std::size_t max_vocab = 0;  // 0: 5000 for unigram, 50000 for n-grams
  Weighting weighting = Weighting::binary;
  std::size_t n_test = 1000;
  double val_frac = 0.05;
  std::uint64_t seed = 1;
  bool strict = true;
};

std::size_t default_max_vocab(TermMode mode);

// Writes vocab.txt (built from training captions only), split.txt, the
// featurized caption cache and a short info file.
void run_preprocess(const PreprocessOptions& options, const std::string& out_dir);

struct DataPaths {
  std::string captions;
  std::string features;
  std::string data_dir;  // preprocess output
};

// Writes manifest.txt before training, then model.ckpt and history.tsv.
Checkpoint run_train(const RunSettings& settings, const DataPaths& paths, const std::string& out_dir);

std::string manifest_text(const RunSettings& settings, const DataPaths& paths, TermMode mode,
                          std::size_t vocab_size, std::size_t feature_dim);

struct EvaluateOptions {
  DataPaths paths;
  std::vector<std::size_t> ks{1, 2, 5, 10};
  std::uint64_t rnd_seed = 1;
};

struct Evaluation {
  EvalReport annotation;
  EvalReport search;
};

// Scores the test split. Refuses a preprocess directory whose vocabulary
// differs from the checkpoint's. When out_dir is non-empty, writes
// {annotation,search}.{txt,kv}.
Evaluation run_evaluate(const Checkpoint& ckpt, const EvaluateOptions& options, const std::string& out_dir);

struct QueryOptions {
  DataPaths paths;  // data_dir optional: restricts the pool to the test split
  std::optional<std::string> sentence;
  std::optional<std::string> image_id;
  std::size_t top_k = 10;
};

struct QueryHit {
  std::string id;
  double score = 0.0;
  std::string text;  // caption text for annotation queries
};

std::vector<QueryHit> run_query(const Checkpoint& ckpt, const QueryOptions& options);

// Writes captions.tsv and features.txt.
void run_synth(const SyntheticParams& params, const std::string& out_dir);

}  // namespace siamret
