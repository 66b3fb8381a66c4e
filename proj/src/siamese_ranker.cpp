#include "siamret/siamese_ranker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "siamret/error.hpp"
#include "siamret/log.hpp"

namespace siamret {

std::string_view to_string(Methodology m) { return m == Methodology::i2t ? "i2t" : "t2i"; }

Methodology parse_methodology(std::string_view text) {
  if (text == "i2t" || text == "I2T") return Methodology::i2t;
  if (text == "t2i" || text == "T2I") return Methodology::t2i;
  fail(ErrorCode::invalid_argument, "unknown methodology '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(margin > 0.0) || !std::isfinite(margin)) fail(ErrorCode::config, "margin must be positive");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail(ErrorCode::config, "learning rate must be positive");
  if (val_pairs_per_epoch == 0) fail(ErrorCode::config, "val_pairs_per_epoch must be positive");
}

void ScoreModel::validate() const {
  if (text.spec().n_emb != visual.spec().n_emb)
    fail(ErrorCode::mismatch, "textual and visual embedding widths differ");
  for (const Net* net : {&text, &visual})
    for (const auto& t : net->params())
      for (double v : t.data)
        if (!std::isfinite(v)) fail(ErrorCode::numeric, "non-finite parameter '" + t.name + "'");
}

ScoreModel init_score_model(const NetSpec& text_spec, const NetSpec& visual_spec, std::uint64_t seed,
                            const PretrainedEmbeddings* pretrained, const Vocabulary* vocab) {
  if (text_spec.n_emb != visual_spec.n_emb) fail(ErrorCode::config, "textual and visual n_emb must match");
  ScoreModel m{init_net(text_spec, derive_seed(seed, 1), pretrained, vocab),
               init_net(visual_spec, derive_seed(seed, 2))};
  return m;
}

namespace {

struct Norms {
  double dot = 0.0, aa = 0.0, bb = 0.0;
};

Norms norms(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::invalid_argument, "cosine of vectors with different lengths");
  Norms n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    n.dot += a[i] * b[i];
    n.aa += a[i] * a[i];
    n.bb += b[i] * b[i];
  }
  if (n.aa == 0.0 || n.bb == 0.0) fail(ErrorCode::zero_norm, "cosine of a zero-norm vector");
  return n;
}

}  // namespace

double cosine_score(std::span<const double> v_img, std::span<const double> v_txt) {
  const Norms n = norms(v_img, v_txt);
  return std::clamp(n.dot / (std::sqrt(n.aa) * std::sqrt(n.bb)), -1.0, 1.0);
}

MarginLoss margin_loss(double s_pos, double s_neg, double margin) {
  if (s_pos >= s_neg + margin) return {};
  return {s_neg - s_pos + margin, -1.0, 1.0};
}

CosineGrads cosine_backward(std::span<const double> v_img, std::span<const double> v_txt, double d_score) {
  const Norms n = norms(v_img, v_txt);
  const double na = std::sqrt(n.aa), nb = std::sqrt(n.bb);
  const double s = n.dot / (na * nb);
  CosineGrads g{std::vector<double>(v_img.size()), std::vector<double>(v_txt.size())};
  for (std::size_t i = 0; i < v_img.size(); ++i) {
    g.grad_img[i] = d_score * (v_txt[i] / (na * nb) - s * v_img[i] / n.aa);
    g.grad_txt[i] = d_score * (v_img[i] / (na * nb) - s * v_txt[i] / n.bb);
  }
  return g;
}

std::string PairDataset::caption_id(std::size_t caption) const {
  const auto& c = captions.at(caption);
  return image_ids[c.image] + "#" + std::to_string(c.caption_index);
}

NetInput featurize_text(std::span<const std::string> tokens, const Vocabulary& vocab, NetKind text_kind,
                        Weighting weighting) {
  if (text_kind == NetKind::bag) return featurize(tokens, vocab, weighting);
  try {
    return encode_sequence(tokens, vocab);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty_input) throw;
    return TokenSequence{};
  }
}

namespace {

bool input_usable(const NetInput& in) {
  if (const auto* sv = std::get_if<SparseVector>(&in)) return !sv->empty();
  if (const auto* ts = std::get_if<TokenSequence>(&in)) return !ts->ids.empty();
  return true;
}

}  // namespace

PairDataset build_pair_dataset(const std::vector<std::string>& image_ids, const std::vector<Caption>& captions,
                               const FeatureStore& store, const Vocabulary& vocab, NetKind text_kind,
                               Weighting weighting) {
  PairDataset d;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& id : image_ids) {
    if (!slot.emplace(id, d.image_ids.size()).second) fail(ErrorCode::invalid_argument, "image '" + id + "' listed twice");
    d.image_ids.push_back(id);
    d.features.push_back(store.at(id).features);
  }
  d.captions_of_image.resize(d.image_ids.size());
  for (const auto& c : captions) {
    auto it = slot.find(c.image_id);
    if (it == slot.end()) continue;
    PairDataset::CaptionItem item{it->second, c.caption_index, featurize_text(c.tokens, vocab, text_kind, weighting), false};
    item.usable = input_usable(item.input);
    const std::size_t idx = d.captions.size();
    d.captions_of_image[it->second].push_back(idx);
    if (item.usable) d.usable_captions.push_back(idx);
    d.captions.push_back(std::move(item));
  }
  return d;
}

std::vector<PositivePair> positive_pairs(const PairDataset& data) {
  std::vector<PositivePair> out;
  out.reserve(data.usable_captions.size());
  for (std::size_t img = 0; img < data.captions_of_image.size(); ++img)
    for (std::size_t c : data.captions_of_image[img])
      if (data.captions[c].usable) out.push_back({img, c});
  return out;
}

PositivePair sample_negative(const PositivePair& pos, const PairDataset& data, Methodology methodology, Rng& rng) {
  if (data.image_ids.size() < 2) fail(ErrorCode::invalid_argument, "negative sampling needs at least two images");
  if (methodology == Methodology::t2i) {
    std::size_t img = rng.uniform_index(data.image_ids.size() - 1);
    if (img >= pos.image) ++img;
    return {img, pos.caption};
  }
  std::size_t own_usable = 0;
  for (std::size_t c : data.captions_of_image[pos.image])
    if (data.captions[c].usable) ++own_usable;
  if (own_usable == data.usable_captions.size())
    fail(ErrorCode::invalid_argument, "no usable caption of another image to sample");
  // Rejection keeps the draw uniform over captions of other images.
  for (;;) {
    const std::size_t c = data.usable_captions[rng.uniform_index(data.usable_captions.size())];
    if (data.captions[c].image != pos.image) return {pos.image, c};
  }
}

TripletStep triplet_step(const ScoreModel& model, std::span<const double> image, const NetInput& caption,
                         const NetInput* negative_caption, const std::vector<double>* negative_image,
                         double margin) {
  if ((negative_caption == nullptr) == (negative_image == nullptr))
    fail(ErrorCode::invalid_argument, "a triplet needs exactly one negative");
  const bool same_image = negative_caption != nullptr;  // I2T
  auto txt_pos = forward(model.text, caption);
  auto img_pos = forward(model.visual, image);
  auto txt_neg = same_image ? forward(model.text, *negative_caption) : ForwardResult{};
  auto img_neg = same_image ? ForwardResult{} : forward(model.visual, std::span<const double>(*negative_image));
  const auto& v_txt_neg = same_image ? txt_neg.embedding : txt_pos.embedding;
  const auto& v_img_neg = same_image ? img_pos.embedding : img_neg.embedding;

  TripletStep step;
  step.s_pos = cosine_score(img_pos.embedding, txt_pos.embedding);
  step.s_neg = cosine_score(v_img_neg, v_txt_neg);
  step.loss = margin_loss(step.s_pos, step.s_neg, margin);
  if (step.loss.loss <= 0.0) return step;

  auto g_pos = cosine_backward(img_pos.embedding, txt_pos.embedding, step.loss.d_pos);
  auto g_neg = cosine_backward(v_img_neg, v_txt_neg, step.loss.d_neg);
  if (same_image) {
    for (std::size_t i = 0; i < g_pos.grad_img.size(); ++i) g_pos.grad_img[i] += g_neg.grad_img[i];
    step.visual = backward(img_pos.tape, g_pos.grad_img).grads;
    step.text = backward(txt_pos.tape, g_pos.grad_txt).grads;
    step.text.accumulate(backward(txt_neg.tape, g_neg.grad_txt).grads);
  } else {
    for (std::size_t i = 0; i < g_pos.grad_txt.size(); ++i) g_pos.grad_txt[i] += g_neg.grad_txt[i];
    step.text = backward(txt_pos.tape, g_pos.grad_txt).grads;
    step.visual = backward(img_pos.tape, g_pos.grad_img).grads;
    step.visual.accumulate(backward(img_neg.tape, g_neg.grad_img).grads);
  }
  return step;
}

EpochStats train_epoch(ScoreModel& model, const PairDataset& data, const TrainConfig& config, std::size_t epoch,
                       Rng& rng, const PairObserver& observer) {
  auto positives = positive_pairs(data);
  rng.shuffle(positives);
  const double lr = lr_schedule(config.lr0, epoch);
  std::size_t errors = 0;
  EpochStats stats;
  for (const auto& pos : positives) {
    const PositivePair neg = sample_negative(pos, data, config.methodology, rng);
    if (observer) observer(pos, neg);
    const bool same_image = neg.image == pos.image;

    TripletStep step;
    try {
      step = triplet_step(model, data.features[pos.image], data.captions[pos.caption].input,
                          same_image ? &data.captions[neg.caption].input : nullptr,
                          same_image ? nullptr : &data.features[neg.image], config.margin);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::zero_norm) throw;
      ++stats.skipped;
      continue;
    }
    ++stats.scored;
    if (step.s_pos <= step.s_neg) ++errors;
    if (step.loss.loss <= 0.0) continue;
    try {
      sgd_step(model.text, step.text, lr);
      sgd_step(model.visual, step.visual, lr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric) throw;
      fail(ErrorCode::numeric, "training aborted in epoch " + std::to_string(epoch + 1) + " at pair (" +
                                   data.caption_id(pos.caption) + "): " + e.what());
    }
  }
  stats.error_pct = stats.scored ? 100.0 * static_cast<double>(errors) / static_cast<double>(stats.scored) : 0.0;
  return stats;
}

EpochStats validate(const ScoreModel& model, const PairDataset& data, const TrainConfig& config, Rng& rng) {
  const auto positives = positive_pairs(data);
  if (positives.empty()) fail(ErrorCode::empty_input, "validation split has no usable pairs");
  // Embeddings do not change during validation, so compute each once.
  std::vector<std::vector<double>> img_emb(data.image_ids.size()), txt_emb(data.captions.size());
  for (std::size_t i = 0; i < img_emb.size(); ++i) img_emb[i] = embed(model.visual, data.features[i]);
  for (std::size_t c : data.usable_captions) txt_emb[c] = embed(model.text, data.captions[c].input);

  EpochStats stats;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < config.val_pairs_per_epoch; ++i) {
    const auto& pos = positives[i % positives.size()];
    const auto neg = sample_negative(pos, data, config.methodology, rng);
    try {
      const double s_pos = cosine_score(img_emb[pos.image], txt_emb[pos.caption]);
      const double s_neg = cosine_score(img_emb[neg.image], txt_emb[neg.caption]);
      ++stats.scored;
      if (s_pos <= s_neg) ++errors;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::zero_norm) throw;
      ++stats.skipped;
    }
  }
  stats.error_pct = stats.scored ? 100.0 * static_cast<double>(errors) / static_cast<double>(stats.scored) : 100.0;
  return stats;
}

std::uint64_t validation_seed(std::uint64_t seed, std::size_t epoch) {
  return derive_seed(derive_seed(seed, 0x76616c), epoch);
}

std::size_t best_epoch_of(std::span<const double> val_errors) {
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < val_errors.size(); ++i)
    if (val_errors[i] < best_err) {
      best_err = val_errors[i];
      best = i + 1;
    }
  return best;
}

void write_history(std::ostream& out, const TrainHistory& history) {
  char buf[160];
  out << "epoch\tlr\ttrain_err\tval_err\n";
  for (const auto& r : history.epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\n", r.epoch, r.lr, r.train_error, r.val_error);
    out << buf;
  }
}

TrainResult train(ScoreModel model, const PairDataset& train_data, const PairDataset& val_data,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  TrainResult result{model, {}};
  Rng rng(derive_seed(config.seed, 0x747261696e));
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t e = 1; e <= config.max_epochs; ++e) {
    const EpochStats tr = train_epoch(model, train_data, config, e - 1, rng);
    Rng vrng(validation_seed(config.seed, e));
    const EpochStats va = validate(model, val_data, config, vrng);
    EpochRecord rec{e, lr_schedule(config.lr0, e - 1), tr.error_pct, va.error_pct};
    result.history.epochs.push_back(rec);
    if (va.error_pct < best_err) {
      best_err = va.error_pct;
      result.best = model;
      result.history.best_epoch = e;
    }
    if (tr.skipped || va.skipped)
      log::warn("epoch " + std::to_string(e) + ": skipped " + std::to_string(tr.skipped + va.skipped) +
                " pairs with zero-norm embeddings");
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace siamret
