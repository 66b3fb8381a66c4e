#include "siamret/retrieval_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "siamret/error.hpp"
#include "siamret/rng.hpp"

namespace siamret {

std::string_view to_string(Direction d) { return d == Direction::annotation ? "annotation" : "search"; }

std::string_view to_string(RecallVariant v) {
  switch (v) {
    case RecallVariant::first_txt: return "first_txt";
    case RecallVariant::rnd_txt: return "rnd_txt";
    case RecallVariant::avg_txt: return "avg_txt";
    case RecallVariant::any_txt: return "any_txt";
  }
  return "avg_txt";
}

RankedResult rank_by_scores(std::string query_id, std::span<const std::string> ids, std::span<const double> scores) {
  if (ids.size() != scores.size()) fail(ErrorCode::invalid_argument, "ids and scores differ in length");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  RankedResult r{std::move(query_id), {}, {}};
  r.candidates.reserve(order.size());
  r.scores.reserve(order.size());
  for (std::size_t i : order) {
    r.candidates.push_back(ids[i]);
    r.scores.push_back(scores[i]);
  }
  return r;
}

namespace {

constexpr double kUnscorable = -std::numeric_limits<double>::infinity();

double safe_cosine(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return kUnscorable;
  try {
    return cosine_score(a, b);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::zero_norm) throw;
    return kUnscorable;
  }
}

}  // namespace

RankedResult rank_candidates(const std::string& query_id, std::span<const double> query_embedding,
                             const EmbeddedPool& pool) {
  if (pool.ids.empty()) fail(ErrorCode::empty_input, "empty candidate pool");
  if (std::all_of(query_embedding.begin(), query_embedding.end(), [](double v) { return v == 0.0; }))
    fail(ErrorCode::zero_norm, "query '" + query_id + "' has a zero-norm embedding");
  std::vector<double> scores(pool.ids.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = safe_cosine(pool.embeddings[i], query_embedding);
  return rank_by_scores(query_id, pool.ids, scores);
}

std::string ScoreGrid::caption_id(const std::string& image_id, std::size_t j) {
  return image_id + "#" + std::to_string(j);
}

ScoreGrid score_grid(const ScoreModel& model, const PairDataset& test) {
  const std::size_t n = test.image_ids.size();
  if (n == 0) fail(ErrorCode::empty_input, "no test images");
  // caption_slot[i][j] -> caption item index
  std::vector<std::array<std::size_t, kCaptionsPerImage>> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& caps = test.captions_of_image[i];
    if (caps.size() != kCaptionsPerImage)
      fail(ErrorCode::invalid_argument, "test image '" + test.image_ids[i] + "' needs exactly 5 captions");
    std::array<bool, kCaptionsPerImage> seen{};
    for (std::size_t c : caps) {
      const auto j = static_cast<std::size_t>(test.captions[c].caption_index);
      seen[j] = true;
      slot[i][j] = c;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      fail(ErrorCode::invalid_argument, "test image '" + test.image_ids[i] + "' lacks a caption index");
  }
  std::vector<std::vector<double>> img(n);
  std::vector<std::vector<double>> txt(test.captions.size());
  for (std::size_t i = 0; i < n; ++i) img[i] = embed(model.visual, test.features[i]);
  for (std::size_t c : test.usable_captions) txt[c] = embed(model.text, test.captions[c].input);

  ScoreGrid grid{test.image_ids, std::vector<double>(n * n * kCaptionsPerImage)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t i2 = 0; i2 < n; ++i2)
      for (std::size_t j = 0; j < kCaptionsPerImage; ++j)
        grid.scores[(i * n + i2) * kCaptionsPerImage + j] = safe_cosine(img[i], txt[slot[i2][j]]);
  return grid;
}

namespace {

std::size_t position_of(const RankedResult& r, const std::string& id) {
  auto it = std::find(r.candidates.begin(), r.candidates.end(), id);
  return static_cast<std::size_t>(it - r.candidates.begin()) + 1;
}

}  // namespace

RankTable annotation_ranks(const ScoreGrid& grid) {
  const std::size_t n = grid.images();
  RankTable t{Direction::annotation, n, grid.image_ids, std::vector<std::array<std::size_t, kCaptionsPerImage>>(n), {}};
  std::array<std::vector<std::string>, kCaptionsPerImage> run_ids;
  for (std::size_t j = 0; j < kCaptionsPerImage; ++j)
    for (const auto& id : grid.image_ids) run_ids[j].push_back(ScoreGrid::caption_id(id, j));
  std::vector<std::string> all_ids;
  for (const auto& id : grid.image_ids)
    for (std::size_t j = 0; j < kCaptionsPerImage; ++j) all_ids.push_back(ScoreGrid::caption_id(id, j));

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kCaptionsPerImage; ++j) {
      for (std::size_t i2 = 0; i2 < n; ++i2) scores[i2] = grid.at(i, i2, j);
      t.ranks[i][j] = position_of(rank_by_scores(grid.image_ids[i], run_ids[j], scores), run_ids[j][i]);
    }
    std::span<const double> row(grid.scores.data() + i * n * kCaptionsPerImage, n * kCaptionsPerImage);
    const auto full = rank_by_scores(grid.image_ids[i], all_ids, row);
    std::size_t hits = 0;
    const std::string prefix = grid.image_ids[i] + "#";
    for (std::size_t r = 0; r < std::min<std::size_t>(5, full.candidates.size()); ++r) {
      const auto& cid = full.candidates[r];
      if (cid.size() == prefix.size() + 1 && cid.compare(0, prefix.size(), prefix) == 0) ++hits;
    }
    t.top5_relevant.push_back(hits);
  }
  return t;
}

RankTable search_ranks(const ScoreGrid& grid) {
  const std::size_t n = grid.images();
  RankTable t{Direction::search, n, grid.image_ids, std::vector<std::array<std::size_t, kCaptionsPerImage>>(n), {}};
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kCaptionsPerImage; ++j) {
      for (std::size_t i2 = 0; i2 < n; ++i2) scores[i2] = grid.at(i2, i, j);
      t.ranks[i][j] = position_of(rank_by_scores(ScoreGrid::caption_id(grid.image_ids[i], j), grid.image_ids, scores),
                                  grid.image_ids[i]);
    }
  return t;
}

std::vector<std::size_t> random_caption_choice(std::size_t n_images, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> choice(n_images);
  for (auto& c : choice) c = rng.uniform_index(kCaptionsPerImage);
  return choice;
}

double recall_at_k(const RankTable& table, std::size_t k, RecallVariant variant, std::span<const std::size_t> rnd_choice) {
  const std::size_t n = table.ranks.size();
  if (n == 0) fail(ErrorCode::empty_input, "no rankings");
  if (k == 0) fail(ErrorCode::invalid_argument, "k must be at least 1");
  std::size_t hits = 0, total = n;
  switch (variant) {
    case RecallVariant::first_txt:
      for (const auto& r : table.ranks) hits += r[0] <= k;
      break;
    case RecallVariant::rnd_txt:
      if (rnd_choice.size() != n) fail(ErrorCode::invalid_argument, "rnd_txt needs one caption choice per image");
      for (std::size_t i = 0; i < n; ++i) hits += table.ranks[i][rnd_choice[i] % kCaptionsPerImage] <= k;
      break;
    case RecallVariant::avg_txt:
      // Five equal-sized runs, so the mean of their recalls is the pooled rate.
      for (const auto& r : table.ranks)
        for (std::size_t rank : r) hits += rank <= k;
      total = n * kCaptionsPerImage;
      break;
    case RecallVariant::any_txt:
      if (table.direction != Direction::annotation)
        fail(ErrorCode::invalid_argument, "any_txt is only defined for annotation");
      for (const auto& r : table.ranks) hits += *std::min_element(r.begin(), r.end()) <= k;
      break;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

std::size_t median_rank(const RankTable& table) {
  std::vector<std::size_t> all;
  for (const auto& r : table.ranks) all.insert(all.end(), r.begin(), r.end());
  if (all.empty()) fail(ErrorCode::empty_input, "no rankings");
  std::sort(all.begin(), all.end());
  // Need count(rank <= k) * 2 >= total.
  return all[(all.size() + 1) / 2 - 1];
}

double r_precision(const RankTable& table, std::size_t r) {
  if (table.direction != Direction::annotation) fail(ErrorCode::invalid_argument, "rPrecision is only defined for annotation");
  if (r != kCaptionsPerImage) fail(ErrorCode::invalid_argument, "rPrecision is computed at R = 5");
  if (table.top5_relevant.empty()) fail(ErrorCode::empty_input, "no rankings");
  std::size_t hits = std::accumulate(table.top5_relevant.begin(), table.top5_relevant.end(), std::size_t{0});
  return 100.0 * static_cast<double>(hits) / static_cast<double>(table.top5_relevant.size() * r);
}

namespace {

std::unordered_map<std::string, std::size_t> counts(std::span<const std::string> tokens) {
  std::unordered_map<std::string, std::size_t> c;
  for (const auto& t : tokens) ++c[t];
  return c;
}

}  // namespace

double bleu(std::span<const std::string> candidate, const std::vector<std::vector<std::string>>& references) {
  if (candidate.empty()) fail(ErrorCode::empty_input, "BLEU of an empty candidate");
  if (references.empty()) fail(ErrorCode::empty_input, "BLEU needs at least one reference");
  const auto cand = counts(candidate);
  std::vector<std::unordered_map<std::string, std::size_t>> refs;
  for (const auto& r : references) refs.push_back(counts(r));
  std::size_t num = 0;
  for (const auto& [w, c] : cand) {
    std::size_t max_ref = 0;
    for (const auto& r : refs)
      if (auto it = r.find(w); it != r.end()) max_ref = std::max(max_ref, it->second);
    num += std::min(c, max_ref);
  }
  return static_cast<double>(num) / static_cast<double>(candidate.size());
}

double rouge(std::span<const std::string> candidate, const std::vector<std::vector<std::string>>& references) {
  const auto cand = counts(candidate);
  std::size_t num = 0, den = 0;
  for (const auto& r : references) {
    for (const auto& [w, c] : counts(r)) {
      auto it = cand.find(w);
      num += std::min(c, it == cand.end() ? std::size_t{0} : it->second);
      den += c;
    }
  }
  if (den == 0) fail(ErrorCode::empty_input, "ROUGE needs at least one reference token");
  return static_cast<double>(num) / static_cast<double>(den);
}

EvalReport make_report(const RankTable& table, std::span<const std::size_t> ks, std::uint64_t rnd_seed) {
  EvalReport rep;
  rep.direction = table.direction;
  rep.ks.assign(ks.begin(), ks.end());
  rep.query_count = table.ranks.size() * (table.direction == Direction::search ? kCaptionsPerImage : 1);
  rep.pool_size = table.pool_size;
  rep.rnd_seed = rnd_seed;
  const auto choice = random_caption_choice(table.ranks.size(), rnd_seed);
  std::vector<RecallVariant> variants{RecallVariant::first_txt, RecallVariant::rnd_txt, RecallVariant::avg_txt};
  if (table.direction == Direction::annotation) variants.push_back(RecallVariant::any_txt);
  for (auto v : variants) {
    auto& row = rep.recall[v];
    for (auto k : rep.ks) row.push_back(recall_at_k(table, k, v, choice));
  }
  rep.median_rank = median_rank(table);
  if (table.direction == Direction::annotation) rep.r_precision_5 = r_precision(table, 5);
  return rep;
}

void add_caption_overlap(EvalReport& report, const ScoreGrid& grid,
                         const std::vector<std::array<std::vector<std::string>, kCaptionsPerImage>>& tokens) {
  if (report.direction != Direction::annotation) return;
  const std::size_t n = grid.images();
  double bleu_sum = 0.0, rouge_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best_i = 0, best_j = 0;
    double best = kUnscorable;
    std::string best_id;
    for (std::size_t i2 = 0; i2 < n; ++i2)
      for (std::size_t j = 0; j < kCaptionsPerImage; ++j) {
        const double s = grid.at(i, i2, j);
        std::string id = ScoreGrid::caption_id(grid.image_ids[i2], j);
        if (best_id.empty() || s > best || (s == best && id < best_id)) {
          best = s;
          best_id = std::move(id);
          best_i = i2;
          best_j = j;
        }
      }
    const auto& cand = tokens[best_i][best_j];
    std::vector<std::vector<std::string>> refs(tokens[i].begin(), tokens[i].end());
    std::size_t ref_tokens = 0;
    for (const auto& r : refs) ref_tokens += r.size();
    if (cand.empty() || ref_tokens == 0) continue;
    bleu_sum += bleu(cand, refs);
    rouge_sum += rouge(cand, refs);
    ++used;
  }
  if (used) {
    report.bleu_top1 = bleu_sum / static_cast<double>(used);
    report.rouge_top1 = rouge_sum / static_cast<double>(used);
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_table(const EvalReport& rep) {
  std::ostringstream out;
  constexpr std::size_t label = 16, cell = 9;
  out << "Image " << (rep.direction == Direction::annotation ? "Annotation" : "Search") << " (queries "
      << rep.query_count << ", pool " << rep.pool_size << ")\n";
  if (rep.r_precision_5) out << pad("rPrecision(5)", label) << fmt(*rep.r_precision_5) << '\n';
  out << pad("med r", label) << rep.median_rank << '\n';
  if (rep.bleu_top1) out << pad("BLEU top-1", label) << fmt(*rep.bleu_top1 * 100.0) << '\n';
  if (rep.rouge_top1) out << pad("ROUGE top-1", label) << fmt(*rep.rouge_top1 * 100.0) << '\n';
  out << pad("k", label);
  for (auto k : rep.ks) out << pad(std::to_string(k), cell);
  out << '\n';
  for (const auto& [variant, values] : rep.recall) {
    out << pad("R@K: " + std::string(to_string(variant)), label);
    for (double v : values) out << pad(fmt(v), cell);
    out << '\n';
  }
  return out.str();
}

std::string format_key_values(const EvalReport& rep) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "direction=" << to_string(rep.direction) << '\n';
  out << "queries=" << rep.query_count << '\n';
  out << "pool=" << rep.pool_size << '\n';
  out << "rnd_seed=" << rep.rnd_seed << '\n';
  out << "med_r=" << rep.median_rank << '\n';
  if (rep.r_precision_5) out << "r_precision_5=" << num(*rep.r_precision_5) << '\n';
  if (rep.bleu_top1) out << "bleu_top1=" << num(*rep.bleu_top1) << '\n';
  if (rep.rouge_top1) out << "rouge_top1=" << num(*rep.rouge_top1) << '\n';
  for (const auto& [variant, values] : rep.recall)
    for (std::size_t i = 0; i < rep.ks.size(); ++i)
      out << "recall." << to_string(variant) << ".r" << rep.ks[i] << '=' << num(values[i]) << '\n';
  return out.str();
}

}  // namespace siamret
