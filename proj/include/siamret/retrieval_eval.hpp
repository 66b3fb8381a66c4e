#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "siamret/corpus_io.hpp"
#include "siamret/siamese_ranker.hpp"

namespace siamret {

enum class Direction { annotation, search };
enum class RecallVariant { first_txt, rnd_txt, avg_txt, any_txt };

std::string_view to_string(Direction d);
std::string_view to_string(RecallVariant v);

struct RankedResult {
  std::string query_id;
  std::vector<std::string> candidates;  // descending score, ties by id
  std::vector<double> scores;
};

// Orders candidates by descending score; equal scores fall back to
// lexicographic id order.
RankedResult rank_by_scores(std::string query_id, std::span<const std::string> ids, std::span<const double> scores);

struct EmbeddedPool {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> embeddings;
};

// Ranks every pool entry against the query embedding by cosine. Throws
// zero_norm for a zero query; zero-norm candidates sort last.
RankedResult rank_candidates(const std::string& query_id, std::span<const double> query_embedding,
                             const EmbeddedPool& pool);

// Cosine scores of every test image against every test caption:
// scores[i * 5N + (i2 * 5 + j)] pairs image i with caption j of image i2.
// Pairs involving a zero-norm embedding (or an unusable caption) score -inf.
struct ScoreGrid {
  std::vector<std::string> image_ids;
  std::vector<double> scores;

  std::size_t images() const { return image_ids.size(); }
  double at(std::size_t image, std::size_t caption_image, std::size_t j) const {
    return scores[image * images() * kCaptionsPerImage + caption_image * kCaptionsPerImage + j];
  }
  static std::string caption_id(const std::string& image_id, std::size_t j);
};

// Every test image must have exactly five captions.
ScoreGrid score_grid(const ScoreModel& model, const PairDataset& test);

// ranks[i][j] is the 1-based rank of the relevant item when caption j takes
// part in run j:
//   annotation: image i queries the pool {caption j of every image};
//   search:     caption j of image i queries the pool of all images.
struct RankTable {
  Direction direction = Direction::annotation;
  std::size_t pool_size = 0;
  std::vector<std::string> image_ids;
  std::vector<std::array<std::size_t, kCaptionsPerImage>> ranks;
  // Annotation only: relevant captions in the top 5 of the full 5N pool.
  std::vector<std::size_t> top5_relevant;
};

RankTable annotation_ranks(const ScoreGrid& grid);
RankTable search_ranks(const ScoreGrid& grid);

// One caption index per image for rnd_txt, drawn from the seed.
std::vector<std::size_t> random_caption_choice(std::size_t n_images, std::uint64_t seed);

// Percentage in [0, 100]. any_txt is annotation-only. rnd_choice is required
// for rnd_txt.
double recall_at_k(const RankTable& table, std::size_t k, RecallVariant variant,
                   std::span<const std::size_t> rnd_choice = {});

// Smallest k with avg_txt recall >= 50%.
std::size_t median_rank(const RankTable& table);

// Mean share of relevant captions in the top R, as a percentage.
double r_precision(const RankTable& table, std::size_t r = 5);

// Clipped unigram precision: sum_w min(c_s(w), max_r c_r(w)) / sum_w c_s(w).
double bleu(std::span<const std::string> candidate, const std::vector<std::vector<std::string>>& references);

// Pooled clipped recall: sum_r sum_w min(c_s(w), c_r(w)) / sum_r |r|.
double rouge(std::span<const std::string> candidate, const std::vector<std::vector<std::string>>& references);

struct EvalReport {
  Direction direction = Direction::annotation;
  std::vector<std::size_t> ks{1, 2, 5, 10};
  std::map<RecallVariant, std::vector<double>> recall;  // parallel to ks
  std::size_t median_rank = 0;
  std::optional<double> r_precision_5;
  std::size_t query_count = 0;
  std::size_t pool_size = 0;
  std::uint64_t rnd_seed = 0;
  // Annotation only: BLEU / ROUGE of the top-ranked caption against the
  // query image's five references, averaged over queries.
  std::optional<double> bleu_top1;
  std::optional<double> rouge_top1;
};

EvalReport make_report(const RankTable& table, std::span<const std::size_t> ks, std::uint64_t rnd_seed);

// Adds bleu_top1 / rouge_top1 to an annotation report.
void add_caption_overlap(EvalReport& report, const ScoreGrid& grid,
                         const std::vector<std::array<std::vector<std::string>, kCaptionsPerImage>>& tokens);

// Aligned text table in the usual metric-by-k layout.
std::string format_table(const EvalReport& report);
// One key=value per line.
std::string format_key_values(const EvalReport& report);

}  // namespace siamret
