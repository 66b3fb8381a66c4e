#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "siamret/corpus_io.hpp"
#include "siamret/neural_core.hpp"
#include "siamret/rng.hpp"
#include "siamret/text_pipeline.hpp"

namespace siamret {

enum class Methodology { i2t, t2i };

std::string_view to_string(Methodology m);
Methodology parse_methodology(std::string_view text);

struct TrainConfig {
  double margin = 0.15;
  double lr0 = 0.001;
  std::size_t max_epochs = 50;
  Methodology methodology = Methodology::i2t;
  std::uint64_t seed = 1;
  Weighting weighting = Weighting::binary;
  std::size_t val_pairs_per_epoch = 1000;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Textual and visual towers projecting into a shared n_emb space.
struct ScoreModel {
  Net text;
  Net visual;

  void validate() const;
  friend bool operator==(const ScoreModel&, const ScoreModel&) = default;
};

ScoreModel init_score_model(const NetSpec& text_spec, const NetSpec& visual_spec, std::uint64_t seed,
                            const PretrainedEmbeddings* pretrained = nullptr, const Vocabulary* vocab = nullptr);

// Throws zero_norm when either vector has zero length.
double cosine_score(std::span<const double> v_img, std::span<const double> v_txt);

struct MarginLoss {
  double loss = 0.0;
  double d_pos = 0.0;
  double d_neg = 0.0;
};

// max(0, s_neg - s_pos + margin) with the piecewise derivatives; zero branch
// when s_pos >= s_neg + margin.
MarginLoss margin_loss(double s_pos, double s_neg, double margin);

struct CosineGrads {
  std::vector<double> grad_img;
  std::vector<double> grad_txt;
};

CosineGrads cosine_backward(std::span<const double> v_img, std::span<const double> v_txt, double d_score);

// Featurized captions and image features for one split.
struct PairDataset {
  struct CaptionItem {
    std::size_t image = 0;  // index into image_ids
    int caption_index = 0;
    NetInput input;
    bool usable = false;  // false when the caption has no in-vocabulary terms
  };

  std::vector<std::string> image_ids;
  std::vector<std::vector<double>> features;
  std::vector<CaptionItem> captions;
  std::vector<std::vector<std::size_t>> captions_of_image;
  std::vector<std::size_t> usable_captions;

  std::size_t unusable_count() const { return captions.size() - usable_captions.size(); }
  std::string caption_id(std::size_t caption) const;
};

// Captions must be tokenized; their images must exist in the store.
PairDataset build_pair_dataset(const std::vector<std::string>& image_ids, const std::vector<Caption>& captions,
                               const FeatureStore& store, const Vocabulary& vocab, NetKind text_kind,
                               Weighting weighting);

NetInput featurize_text(std::span<const std::string> tokens, const Vocabulary& vocab, NetKind text_kind,
                        Weighting weighting);

struct PositivePair {
  std::size_t image = 0;
  std::size_t caption = 0;
};

// I2T keeps the image and draws a caption of another image; T2I keeps the
// caption and draws another image.
PositivePair sample_negative(const PositivePair& pos, const PairDataset& data, Methodology methodology, Rng& rng);

// All (image, usable caption) pairs in image-major order.
std::vector<PositivePair> positive_pairs(const PairDataset& data);

struct TripletStep {
  double s_pos = 0.0;
  double s_neg = 0.0;
  MarginLoss loss;
  Gradients text;    // empty when the loss is zero
  Gradients visual;
};

// Scores, loss and parameter gradients of one triplet. Exactly one of
// negative_caption (I2T) and negative_image (T2I) is given; the shared side
// goes through one backward pass. Throws zero_norm for a zero embedding.
TripletStep triplet_step(const ScoreModel& model, std::span<const double> image, const NetInput& caption,
                         const NetInput* negative_caption, const std::vector<double>* negative_image,
                         double margin);

struct EpochStats {
  double error_pct = 0.0;  // share of scored pairs with s_pos <= s_neg
  std::size_t scored = 0;
  std::size_t skipped = 0;  // pairs with a zero-norm embedding
};

// Optional observer of every (positive, negative) pair drawn during training.
using PairObserver = std::function<void(const PositivePair& pos, const PositivePair& neg)>;

EpochStats train_epoch(ScoreModel& model, const PairDataset& data, const TrainConfig& config, std::size_t epoch,
                       Rng& rng, const PairObserver& observer = {});

EpochStats validate(const ScoreModel& model, const PairDataset& data, const TrainConfig& config, Rng& rng);

// Seed of the validation draw after the given epoch.
std::uint64_t validation_seed(std::uint64_t seed, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_error = 0.0;
  double val_error = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

// 1-based index of the earliest minimum, 0 for an empty sequence.
std::size_t best_epoch_of(std::span<const double> val_errors);

void write_history(std::ostream& out, const TrainHistory& history);

struct TrainResult {
  ScoreModel best;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Snapshots the model whenever validation error strictly improves.
TrainResult train(ScoreModel model, const PairDataset& train_data, const PairDataset& val_data,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace siamret
