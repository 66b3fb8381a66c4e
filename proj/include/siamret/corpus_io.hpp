#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace siamret {

inline constexpr std::size_t kCaptionsPerImage = 5;

struct ImageRecord {
  std::string image_id;
  std::vector<double> features;
};

struct Caption {
  std::string image_id;
  int caption_index = 0;
  std::string text;
  std::vector<std::string> tokens;  // filled by tokenize_captions()
};

// Immutable id -> feature vector table.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t dim, std::vector<ImageRecord> records);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<ImageRecord>& records() const { return records_; }

  const ImageRecord* find(std::string_view image_id) const;
  const ImageRecord& at(std::string_view image_id) const;  // throws not_found

 private:
  std::size_t dim_ = 0;
  std::vector<ImageRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Captions come back ordered by first appearance of their image, then by
// caption_index. In strict mode every image must have exactly five.
std::vector<Caption> load_captions(const std::string& path, bool strict = true);
std::vector<Caption> parse_captions(std::istream& in, bool strict = true,
                                    std::string_view source = "<stream>");
void write_captions(std::ostream& out, const std::vector<Caption>& captions);

FeatureStore load_image_features(const std::string& path);
FeatureStore parse_image_features(std::istream& in, std::string_view source = "<stream>");
void write_image_features(std::ostream& out, const FeatureStore& store);

// Distinct image ids in caption order.
std::vector<std::string> caption_image_ids(const std::vector<Caption>& captions);

struct JoinResult {
  std::vector<Caption> captions;
  std::size_t dropped = 0;
};

// Checks every caption's image against the store. Strict mode throws on the
// first unresolved image; lenient mode drops those captions with a warning.
JoinResult join_captions(std::vector<Caption> captions, const FeatureStore& store, bool strict);

struct SplitDataset {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

// Seeded shuffle; the first n_test images form the test split, the next
// round-half-up(val_frac * remaining) the validation split, the rest train.
SplitDataset split_dataset(const std::vector<std::string>& image_ids, std::size_t n_test,
                           double val_frac, std::uint64_t seed);

// Same sizes as split_dataset, but images are shuffled within each group and
// then dealt round-robin across groups, so small splits cover distinct groups.
SplitDataset split_dataset_stratified(const std::vector<std::string>& image_ids,
                                      const std::vector<std::size_t>& group_of,
                                      std::size_t n_test, double val_frac, std::uint64_t seed);

std::vector<Caption> captions_for(const std::vector<Caption>& captions,
                                  const std::vector<std::string>& image_ids);

void write_split(std::ostream& out, const SplitDataset& split);
SplitDataset parse_split(std::istream& in, std::string_view source = "<stream>");
SplitDataset load_split(const std::string& path);

struct PretrainedEmbeddings {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t duplicate_count = 0;
};

// word2vec text format. An optional leading "count dim" header is skipped.
PretrainedEmbeddings load_word_embeddings(const std::string& path);
PretrainedEmbeddings parse_word_embeddings(std::istream& in, std::string_view source = "<stream>");

struct SyntheticParams {
  std::size_t n_clusters = 4;
  std::size_t images_per_cluster = 10;
  std::size_t feature_dim = 32;
  std::size_t vocab_per_cluster = 12;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  FeatureStore images;
  std::vector<Caption> captions;
  std::vector<std::size_t> cluster_of_image;  // parallel to images.records()
  std::vector<std::vector<double>> prototypes;
};

// Clustered fixture: each cluster has a unit-norm prototype and its own token
// set; images are prototype + N(0, sigma^2) noise, captions 4-8 tokens drawn
// from the cluster's tokens.
SyntheticCorpus generate_synthetic_corpus(const SyntheticParams& params);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// CRC-32 of a byte string, as eight lowercase hex digits.
std::string crc32_hex(std::string_view bytes);
std::uint32_t crc32_of(std::string_view bytes);

}  // namespace siamret
