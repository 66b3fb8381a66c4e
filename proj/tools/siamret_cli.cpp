// siamret command line: preprocess, train, evaluate, query, synth.
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "siamret/siamret.h"

namespace {

struct Failure {
  std::string cls;
  std::string message;
};

void check(sr_status status) {
  if (status != SR_OK) throw Failure{sr_status_name(status), sr_last_error()};
}

std::string read_back(const sr_config* cfg, const char* key) {
  size_t needed = 0;
  check(sr_config_get(cfg, key, nullptr, 0, &needed));
  std::string value(needed, '\0');
  check(sr_config_get(cfg, key, value.data(), value.size(), &needed));
  value.resize(needed - 1);
  return value;
}

class Model {
 public:
  explicit Model(const std::string& path) { check(sr_model_load(path.c_str(), &model_)); }
  ~Model() { sr_model_free(model_); }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  const sr_model* get() const { return model_; }

 private:
  sr_model* model_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bidirectional image/sentence retrieval with siamese ranking networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sr_version()));
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  // synth
  sr_synth_params synth;
  sr_synth_defaults(&synth);
  std::string synth_out;
  auto* cmd_synth = app.add_subcommand("synth", "Write a clustered synthetic captions.tsv + features.txt");
  cmd_synth->add_option("--clusters", synth.n_clusters, "Number of clusters")->capture_default_str();
  cmd_synth->add_option("--images-per-cluster", synth.images_per_cluster)->capture_default_str();
  cmd_synth->add_option("--feature-dim", synth.feature_dim)->capture_default_str();
  cmd_synth->add_option("--vocab-per-cluster", synth.vocab_per_cluster)->capture_default_str();
  cmd_synth->add_option("--noise", synth.noise_sigma, "Feature noise sigma")->capture_default_str();
  cmd_synth->add_option("--seed", synth.seed)->capture_default_str();
  cmd_synth->add_option("--out", synth_out, "Output directory")->required();

  // preprocess
  sr_preprocess_params pre;
  sr_preprocess_defaults(&pre);
  std::string pre_captions, pre_mode = "unigram", pre_weighting = "binary", pre_out;
  bool pre_lenient = false;
  auto* cmd_pre = app.add_subcommand("preprocess", "Build the vocabulary, split and feature cache");
  cmd_pre->add_option("--captions", pre_captions, "Captions TSV")->required();
  cmd_pre->add_option("--mode", pre_mode, "Term family")
      ->check(CLI::IsMember({"unigram", "2g", "3g", "tk3"}))
      ->capture_default_str();
  cmd_pre->add_option("--max-vocab", pre.max_vocab, "Vocabulary cap (0: 5000 unigram, 50000 n-gram)");
  cmd_pre->add_option("--weighting", pre_weighting, "Cache weighting")
      ->check(CLI::IsMember({"binary", "tfidf"}))
      ->capture_default_str();
  cmd_pre->add_option("--n-test", pre.n_test, "Test images")->capture_default_str();
  cmd_pre->add_option("--val-frac", pre.val_frac, "Validation share of the remainder")->capture_default_str();
  cmd_pre->add_option("--seed", pre.seed, "Split seed")->capture_default_str();
  cmd_pre->add_flag("--lenient", pre_lenient, "Accept images with other than five captions");
  cmd_pre->add_option("--out", pre_out, "Output directory")->required();

  // train
  std::string tr_config, tr_captions, tr_features, tr_data, tr_out;
  std::map<std::string, std::string> overrides;
  auto* cmd_train = app.add_subcommand("train", "Train a model; writes model.ckpt, history.tsv, manifest.txt");
  cmd_train->add_option("--config", tr_config, "key = value settings file");
  cmd_train->add_option("--captions", tr_captions, "Captions TSV")->required();
  cmd_train->add_option("--features", tr_features, "Image features file")->required();
  cmd_train->add_option("--data", tr_data, "Preprocess output directory")->required();
  cmd_train->add_option("--out", tr_out, "Output directory")->required();
  const std::vector<std::pair<std::string, std::string>> train_flags = {
      {"--methodology", "methodology"}, {"--weighting", "weighting"}, {"--margin", "margin"},
      {"--lr", "lr"},                   {"--epochs", "epochs"},       {"--seed", "seed"},
      {"--n-hu", "n_hu"},               {"--n-emb", "n_emb"},         {"--visual-n-hu", "visual_n_hu"},
      {"--text-model", "text_model"},   {"--word-dim", "word_dim"},   {"--kernels", "kernels"},
      {"--window", "window"},           {"--val-pairs", "val_pairs"}, {"--embeddings", "embeddings"}};
  std::map<std::string, std::string> flag_values;
  for (const auto& [flag, key] : train_flags) {
    auto* opt = cmd_train->add_option(flag, flag_values[key], "Overrides '" + key + "'");
    if (key == "methodology") opt->check(CLI::IsMember({"i2t", "t2i"}));
    if (key == "weighting") opt->check(CLI::IsMember({"binary", "tfidf"}));
    if (key == "text_model") opt->check(CLI::IsMember({"mlp", "sse"}));
  }

  // evaluate
  std::string ev_ckpt, ev_captions, ev_features, ev_data, ev_out;
  std::vector<size_t> ev_ks{1, 2, 5, 10};
  uint64_t ev_rnd_seed = 1;
  auto* cmd_eval = app.add_subcommand("evaluate", "Score the test split in both directions");
  cmd_eval->add_option("--checkpoint", ev_ckpt)->required();
  cmd_eval->add_option("--captions", ev_captions)->required();
  cmd_eval->add_option("--features", ev_features)->required();
  cmd_eval->add_option("--data", ev_data, "Preprocess output directory")->required();
  cmd_eval->add_option("--k", ev_ks, "Recall cutoffs")->capture_default_str();
  cmd_eval->add_option("--rnd-seed", ev_rnd_seed, "Seed of the random-caption variant")->capture_default_str();
  cmd_eval->add_option("--out", ev_out, "Report directory");

  // query
  std::string q_ckpt, q_captions, q_features, q_data;
  std::optional<std::string> q_sentence, q_image;
  size_t q_top_k = 10;
  auto* cmd_query = app.add_subcommand("query", "Rank images for a sentence or captions for an image");
  cmd_query->add_option("--checkpoint", q_ckpt)->required();
  cmd_query->add_option("--captions", q_captions)->required();
  cmd_query->add_option("--features", q_features)->required();
  cmd_query->add_option("--data", q_data, "Restrict the pool to this preprocess run's test split");
  auto* sentence_opt = cmd_query->add_option("--sentence", q_sentence, "Sentence query");
  auto* image_opt = cmd_query->add_option("--image-id", q_image, "Image query");
  sentence_opt->excludes(image_opt);
  image_opt->excludes(sentence_opt);
  cmd_query->add_option("--top-k", q_top_k)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage_error: %s\n", e.what());
    return 2;
  }
  sr_set_log_level(quiet ? SR_LOG_QUIET : verbose ? SR_LOG_INFO : SR_LOG_WARN);

  try {
    if (*cmd_synth) {
      check(sr_synth(&synth, synth_out.c_str()));
    } else if (*cmd_pre) {
      pre.captions = pre_captions.c_str();
      pre.mode = pre_mode.c_str();
      pre.weighting = pre_weighting.c_str();
      pre.strict = pre_lenient ? 0 : 1;
      check(sr_preprocess(&pre, pre_out.c_str()));
    } else if (*cmd_train) {
      sr_config* cfg = nullptr;
      check(sr_config_new(&cfg));
      std::unique_ptr<sr_config, decltype(&sr_config_free)> guard(cfg, sr_config_free);
      if (!tr_config.empty()) check(sr_config_load(cfg, tr_config.c_str()));
      for (const auto& [flag, key] : train_flags)
        if (cmd_train->count(flag)) check(sr_config_set(cfg, key.c_str(), flag_values[key].c_str()));
      check(sr_config_validate(cfg));
      check(sr_train(cfg, tr_captions.c_str(), tr_features.c_str(), tr_data.c_str(), tr_out.c_str()));
      std::printf("trained: methodology=%s best checkpoint in %s\n", read_back(cfg, "methodology").c_str(),
                  tr_out.c_str());
    } else if (*cmd_eval) {
      Model model(ev_ckpt);
      sr_text* report = nullptr;
      check(sr_evaluate(model.get(), ev_captions.c_str(), ev_features.c_str(), ev_data.c_str(), ev_ks.data(),
                        ev_ks.size(), ev_rnd_seed, ev_out.empty() ? nullptr : ev_out.c_str(), &report));
      std::fputs(sr_text_str(report), stdout);
      sr_text_free(report);
    } else if (*cmd_query) {
      Model model(q_ckpt);
      if (!q_sentence && !q_image) throw Failure{"usage_error", "give --sentence or --image-id"};
      sr_results* results = nullptr;
      check(sr_query(model.get(), q_captions.c_str(), q_features.c_str(), q_data.empty() ? nullptr : q_data.c_str(),
                     q_sentence ? q_sentence->c_str() : nullptr, q_image ? q_image->c_str() : nullptr, q_top_k,
                     &results));
      for (size_t i = 0; i < sr_results_count(results); ++i) {
        const char* text = sr_results_text(results, i);
        std::printf("%zu\t%s\t%.6f%s%s\n", i + 1, sr_results_id(results, i), sr_results_score(results, i),
                    *text ? "\t" : "", text);
      }
      sr_results_free(results);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s: %s\n", f.cls.c_str(), f.message.c_str());
    return 1;
  }
  return 0;
}
