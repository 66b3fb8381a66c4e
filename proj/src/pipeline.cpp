#include "siamret/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <variant>

#include "siamret/error.hpp"
#include "siamret/log.hpp"

namespace fs = std::filesystem;

namespace siamret {

namespace {

std::string join_path(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create directory '" + dir + "': " + ec.message());
}

std::string digest_of(const std::string& path) { return path.empty() ? "none" : crc32_hex(read_file(path)); }

struct LoadedData {
  std::vector<Caption> captions;
  FeatureStore store;
  SplitDataset split;
  Vocabulary vocab;
};

LoadedData load_data(const DataPaths& paths, bool strict, bool need_split) {
  LoadedData d;
  d.store = load_image_features(paths.features);
  auto joined = join_captions(load_captions(paths.captions, strict), d.store, strict);
  d.captions = std::move(joined.captions);
  tokenize_captions(d.captions);
  if (need_split) {
    d.split = load_split(join_path(paths.data_dir, kSplitFile));
    d.vocab = Vocabulary::load(join_path(paths.data_dir, kVocabFile));
  }
  return d;
}

// Split ids that still have features and captions after the join.
std::vector<std::string> present(const std::vector<std::string>& ids, const std::vector<Caption>& captions) {
  std::unordered_set<std::string> have;
  for (const auto& c : captions) have.insert(c.image_id);
  std::vector<std::string> out;
  for (const auto& id : ids)
    if (have.count(id)) out.push_back(id);
  return out;
}

bool input_empty(const NetInput& in) {
  if (const auto* sv = std::get_if<SparseVector>(&in)) return sv->empty();
  if (const auto* ts = std::get_if<TokenSequence>(&in)) return ts->ids.empty();
  return std::get<std::vector<double>>(in).empty();
}

}  // namespace

std::size_t default_max_vocab(TermMode mode) { return mode == TermMode::unigram ? 5000 : 50000; }

void run_preprocess(const PreprocessOptions& o, const std::string& out_dir) {
  auto captions = load_captions(o.captions_path, o.strict);
  if (captions.empty()) fail(ErrorCode::empty_input, "'" + o.captions_path + "' contains no captions");
  tokenize_captions(captions);
  const auto split = split_dataset(caption_image_ids(captions), o.n_test, o.val_frac, o.seed);
  const std::size_t max_vocab = o.max_vocab ? o.max_vocab : default_max_vocab(o.mode);
  const auto vocab = build_vocabulary(captions_for(captions, split.train), o.mode, max_vocab);

  ensure_dir(out_dir);
  write_file(join_path(out_dir, kVocabFile), vocab.serialize());
  std::ostringstream split_text;
  write_split(split_text, split);
  write_file(join_path(out_dir, kSplitFile), split_text.str());

  std::ostringstream cache;
  char buf[48];
  for (const auto& c : captions) {
    cache << c.image_id << '\t' << c.caption_index << '\t';
    const auto sv = featurize(c.tokens, vocab, o.weighting);
    for (std::size_t k = 0; k < sv.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%s%u:%.17g", k ? " " : "", sv.indices[k], sv.values[k]);
      cache << buf;
    }
    cache << '\n';
  }
  write_file(join_path(out_dir, kTextCacheFile), cache.str());

  std::ostringstream info;
  info << "captions=" << digest_of(o.captions_path) << '\n'
       << "mode=" << to_string(o.mode) << '\n'
       << "max_vocab=" << max_vocab << '\n'
       << "vocab_size=" << vocab.size() << '\n'
       << "weighting=" << to_string(o.weighting) << '\n'
       << "n_test=" << o.n_test << '\n'
       << "val_frac=" << o.val_frac << '\n'
       << "seed=" << o.seed << '\n'
       << "images.train=" << split.train.size() << '\n'
       << "images.val=" << split.val.size() << '\n'
       << "images.test=" << split.test.size() << '\n';
  write_file(join_path(out_dir, kPreprocessInfoFile), info.str());
  log::info("preprocess: " + std::to_string(vocab.size()) + " terms, " + std::to_string(split.train.size()) + "/" +
            std::to_string(split.val.size()) + "/" + std::to_string(split.test.size()) + " train/val/test images");
}

std::string manifest_text(const RunSettings& settings, const DataPaths& paths, TermMode mode,
                          std::size_t vocab_size, std::size_t feature_dim) {
  std::ostringstream out;
  out << "# training run manifest\n"
      << "tool_version=" << kToolVersion << '\n'
      << settings.to_key_values() << "mode=" << to_string(mode) << '\n'
      << "vocab_size=" << vocab_size << '\n'
      << "feature_dim=" << feature_dim << '\n'
      << "input.captions=" << digest_of(paths.captions) << '\n'
      << "input.features=" << digest_of(paths.features) << '\n'
      << "input.vocab=" << digest_of(join_path(paths.data_dir, kVocabFile)) << '\n'
      << "input.split=" << digest_of(join_path(paths.data_dir, kSplitFile)) << '\n'
      << "input.embeddings=" << digest_of(settings.embeddings) << '\n';
  return out.str();
}

Checkpoint run_train(const RunSettings& settings, const DataPaths& paths, const std::string& out_dir) {
  settings.validate();
  auto data = load_data(paths, settings.strict, true);
  if (settings.text_kind == NetKind::sequence && data.vocab.mode() != TermMode::unigram)
    fail(ErrorCode::config, "the sse text model needs a unigram vocabulary");

  const auto train_ids = present(data.split.train, data.captions);
  const auto val_ids = present(data.split.val, data.captions);
  const auto train_set = build_pair_dataset(train_ids, data.captions, data.store, data.vocab, settings.text_kind,
                                            settings.train.weighting);
  const auto val_set = build_pair_dataset(val_ids, data.captions, data.store, data.vocab, settings.text_kind,
                                          settings.train.weighting);
  if (train_set.unusable_count())
    log::warn("skipping " + std::to_string(train_set.unusable_count()) + " training captions with no in-vocabulary terms");

  const NetSpec text_spec = settings.text_spec(data.vocab.size());
  const NetSpec visual_spec = settings.visual_spec(data.store.dim());
  std::optional<PretrainedEmbeddings> pretrained;
  if (!settings.embeddings.empty()) pretrained = load_word_embeddings(settings.embeddings);

  ensure_dir(out_dir);
  write_file(join_path(out_dir, kManifestFile),
             manifest_text(settings, paths, data.vocab.mode(), data.vocab.size(), data.store.dim()));

  auto model = init_score_model(text_spec, visual_spec, settings.train.seed, pretrained ? &*pretrained : nullptr,
                                &data.vocab);
  auto result = train(std::move(model), train_set, val_set, settings.train, [](const EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %zu  lr %.6g  train_err %.2f%%  val_err %.2f%%", r.epoch, r.lr, r.train_error,
                  r.val_error);
    log::info(buf);
  });

  Checkpoint ckpt{kCheckpointVersion, settings, data.vocab, std::move(result.best), std::move(result.history)};
  save_checkpoint(ckpt, join_path(out_dir, kCheckpointFile));
  std::ostringstream hist;
  write_history(hist, ckpt.history);
  write_file(join_path(out_dir, kHistoryFile), hist.str());
  return ckpt;
}

Evaluation run_evaluate(const Checkpoint& ckpt, const EvaluateOptions& o, const std::string& out_dir) {
  auto data = load_data(o.paths, true, true);
  if (data.vocab.digest() != ckpt.vocabulary.digest())
    fail(ErrorCode::mismatch, "vocabulary in '" + o.paths.data_dir + "' (digest " + data.vocab.digest() +
                                  ") differs from the checkpoint's (digest " + ckpt.vocabulary.digest() + ")");
  if (data.store.dim() != ckpt.model.visual.spec().input_dim)
    fail(ErrorCode::mismatch, "feature dimension differs from the checkpoint's visual input");
  const auto test_ids = present(data.split.test, data.captions);
  const auto test = build_pair_dataset(test_ids, data.captions, data.store, ckpt.vocabulary, ckpt.settings.text_kind,
                                       ckpt.settings.train.weighting);
  const auto grid = score_grid(ckpt.model, test);

  std::vector<std::array<std::vector<std::string>, kCaptionsPerImage>> tokens(test_ids.size());
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < test_ids.size(); ++i) slot.emplace(test_ids[i], i);
  for (const auto& c : data.captions)
    if (auto it = slot.find(c.image_id); it != slot.end()) tokens[it->second][c.caption_index] = c.tokens;

  Evaluation ev{make_report(annotation_ranks(grid), o.ks, o.rnd_seed), make_report(search_ranks(grid), o.ks, o.rnd_seed)};
  add_caption_overlap(ev.annotation, grid, tokens);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_file(join_path(out_dir, "annotation.txt"), format_table(ev.annotation));
    write_file(join_path(out_dir, "annotation.kv"), format_key_values(ev.annotation));
    write_file(join_path(out_dir, "search.txt"), format_table(ev.search));
    write_file(join_path(out_dir, "search.kv"), format_key_values(ev.search));
  }
  return ev;
}

std::vector<QueryHit> run_query(const Checkpoint& ckpt, const QueryOptions& o) {
  if (o.sentence.has_value() == o.image_id.has_value())
    fail(ErrorCode::invalid_argument, "give exactly one of a sentence or an image id");
  if (o.top_k == 0) fail(ErrorCode::invalid_argument, "top_k must be positive");
  const bool use_split = !o.paths.data_dir.empty();
  auto data = load_data(o.paths, false, use_split);
  std::vector<std::string> pool_ids = use_split ? present(data.split.test, data.captions) : caption_image_ids(data.captions);

  EmbeddedPool pool;
  std::vector<std::string> texts;
  std::vector<double> query;
  std::string query_id;
  if (o.sentence) {
    const auto tokens = normalize_tokenize(*o.sentence);
    const auto input = featurize_text(tokens, ckpt.vocabulary, ckpt.settings.text_kind, ckpt.settings.train.weighting);
    if (input_empty(input)) fail(ErrorCode::empty_input, "sentence has no in-vocabulary terms");
    query = embed(ckpt.model.text, input);
    query_id = "sentence";
    for (const auto& id : pool_ids) {
      pool.ids.push_back(id);
      pool.embeddings.push_back(embed(ckpt.model.visual, data.store.at(id).features));
    }
  } else {
    query = embed(ckpt.model.visual, data.store.at(*o.image_id).features);
    query_id = *o.image_id;
    std::unordered_set<std::string> in_pool(pool_ids.begin(), pool_ids.end());
    std::unordered_map<std::string, std::string> text_of;
    for (const auto& c : data.captions) {
      if (!in_pool.count(c.image_id)) continue;
      const std::string id = ScoreGrid::caption_id(c.image_id, static_cast<std::size_t>(c.caption_index));
      const auto input = featurize_text(c.tokens, ckpt.vocabulary, ckpt.settings.text_kind, ckpt.settings.train.weighting);
      pool.ids.push_back(id);
      pool.embeddings.push_back(input_empty(input) ? std::vector<double>{} : embed(ckpt.model.text, input));
      text_of.emplace(id, c.text);
    }
    texts.reserve(pool.ids.size());
    for (const auto& id : pool.ids) texts.push_back(text_of[id]);
  }
  const auto ranked = rank_candidates(query_id, query, pool);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < pool.ids.size(); ++i) pos.emplace(pool.ids[i], i);
  std::vector<QueryHit> hits;
  for (std::size_t r = 0; r < std::min(o.top_k, ranked.candidates.size()); ++r) {
    QueryHit h{ranked.candidates[r], ranked.scores[r], {}};
    if (!texts.empty()) h.text = texts[pos.at(h.id)];
    hits.push_back(std::move(h));
  }
  return hits;
}

void run_synth(const SyntheticParams& params, const std::string& out_dir) {
  const auto corpus = generate_synthetic_corpus(params);
  ensure_dir(out_dir);
  std::ostringstream caps, feats;
  write_captions(caps, corpus.captions);
  write_image_features(feats, corpus.images);
  write_file(join_path(out_dir, "captions.tsv"), caps.str());
  write_file(join_path(out_dir, "features.txt"), feats.str());
}

}  // namespace siamret
