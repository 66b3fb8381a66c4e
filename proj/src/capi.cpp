#include "siamret/siamret.h"

#include <algorithm>
#include <exception>
#include <new>
#include <string>

#include "siamret/error.hpp"
#include "siamret/log.hpp"
#include "siamret/pipeline.hpp"

using namespace siamret;

struct sr_config {
  RunSettings settings;
};

struct sr_model {
  Checkpoint ckpt;
};

struct sr_text {
  std::string value;
};

struct sr_results {
  std::vector<QueryHit> hits;
};

namespace {

thread_local std::string g_last_error;

sr_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return SR_ERR_IO;
    case ErrorCode::parse: return SR_ERR_PARSE;
    case ErrorCode::invalid_argument: return SR_ERR_INVALID_ARGUMENT;
    case ErrorCode::config: return SR_ERR_CONFIG;
    case ErrorCode::checksum: return SR_ERR_CHECKSUM;
    case ErrorCode::version: return SR_ERR_VERSION;
    case ErrorCode::mismatch: return SR_ERR_MISMATCH;
    case ErrorCode::numeric: return SR_ERR_NUMERIC;
    case ErrorCode::empty_input: return SR_ERR_EMPTY_INPUT;
    case ErrorCode::not_found: return SR_ERR_NOT_FOUND;
    case ErrorCode::zero_norm: return SR_ERR_ZERO_NORM;
    case ErrorCode::tape_reuse: return SR_ERR_INTERNAL;
  }
  return SR_ERR_INTERNAL;
}

template <class F>
sr_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return SR_ERR_INTERNAL;
}

std::string str(const char* s) { return s ? s : ""; }

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* sr_status_name(sr_status status) {
  switch (status) {
    case SR_OK: return "ok";
    case SR_ERR_IO: return "io_error";
    case SR_ERR_PARSE: return "parse_error";
    case SR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SR_ERR_CONFIG: return "config_error";
    case SR_ERR_CHECKSUM: return "checksum_error";
    case SR_ERR_VERSION: return "version_error";
    case SR_ERR_MISMATCH: return "mismatch_error";
    case SR_ERR_NUMERIC: return "numeric_error";
    case SR_ERR_EMPTY_INPUT: return "empty_input";
    case SR_ERR_NOT_FOUND: return "not_found";
    case SR_ERR_ZERO_NORM: return "zero_norm";
    case SR_ERR_INTERNAL: return "internal_error";
  }
  return "internal_error";
}

const char* sr_last_error(void) { return g_last_error.c_str(); }

const char* sr_version(void) { return kToolVersion; }

void sr_set_log_level(sr_log_level level) {
  switch (level) {
    case SR_LOG_QUIET: log::set_level(log::Level::quiet); break;
    case SR_LOG_WARN: log::set_level(log::Level::warn); break;
    case SR_LOG_INFO: log::set_level(log::Level::info); break;
  }
}

void sr_synth_defaults(sr_synth_params* p) {
  if (!p) return;
  const SyntheticParams d;
  *p = {d.n_clusters, d.images_per_cluster, d.feature_dim, d.vocab_per_cluster, d.noise_sigma, d.seed};
}

sr_status sr_synth(const sr_synth_params* p, const char* out_dir) {
  return guarded([&] {
    require(p, "params");
    require(out_dir, "out_dir");
    SyntheticParams s;
    s.n_clusters = p->n_clusters;
    s.images_per_cluster = p->images_per_cluster;
    s.feature_dim = p->feature_dim;
    s.vocab_per_cluster = p->vocab_per_cluster;
    s.noise_sigma = p->noise_sigma;
    s.seed = p->seed;
    run_synth(s, out_dir);
  });
}

void sr_preprocess_defaults(sr_preprocess_params* p) {
  if (!p) return;
  const PreprocessOptions d;
  *p = {nullptr, "unigram", "binary", d.max_vocab, d.n_test, d.val_frac, d.seed, d.strict ? 1 : 0};
}

sr_status sr_preprocess(const sr_preprocess_params* p, const char* out_dir) {
  return guarded([&] {
    require(p, "params");
    require(p->captions, "captions");
    require(out_dir, "out_dir");
    PreprocessOptions o;
    o.captions_path = p->captions;
    o.mode = parse_term_mode(p->mode ? p->mode : "unigram");
    o.weighting = parse_weighting(p->weighting ? p->weighting : "binary");
    o.max_vocab = p->max_vocab;
    o.n_test = p->n_test;
    o.val_frac = p->val_frac;
    o.seed = p->seed;
    o.strict = p->strict != 0;
    if (!(o.val_frac >= 0.0 && o.val_frac < 1.0)) fail(ErrorCode::invalid_argument, "val_frac must be in [0, 1)");
    run_preprocess(o, out_dir);
  });
}

sr_status sr_config_new(sr_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new sr_config{};
  });
}

void sr_config_free(sr_config* config) { delete config; }

sr_status sr_config_load(sr_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->settings = RunSettings::load(path);
  });
}

sr_status sr_config_set(sr_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->settings.set(key, value);
  });
}

sr_status sr_config_get(const sr_config* config, const char* key, char* buf, size_t buf_size, size_t* needed) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    const auto value = config->settings.get(key);
    if (needed) *needed = value.size() + 1;
    if (buf && buf_size) {
      const size_t n = std::min(value.size(), buf_size - 1);
      value.copy(buf, n);
      buf[n] = '\0';
    }
  });
}

sr_status sr_config_validate(const sr_config* config) {
  return guarded([&] {
    require(config, "config");
    config->settings.validate();
  });
}

sr_status sr_train(const sr_config* config, const char* captions, const char* features, const char* data_dir,
                   const char* out_dir) {
  return guarded([&] {
    require(config, "config");
    require(captions, "captions");
    require(features, "features");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    run_train(config->settings, {captions, features, data_dir}, out_dir);
  });
}

sr_status sr_model_load(const char* checkpoint, sr_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new sr_model{load_checkpoint(checkpoint)};
  });
}

void sr_model_free(sr_model* model) { delete model; }

sr_status sr_evaluate(const sr_model* model, const char* captions, const char* features, const char* data_dir,
                      const size_t* ks, size_t n_ks, uint64_t rnd_seed, const char* out_dir, sr_text** report) {
  return guarded([&] {
    require(model, "model");
    require(captions, "captions");
    require(features, "features");
    require(data_dir, "data_dir");
    EvaluateOptions o;
    o.paths = {captions, features, data_dir};
    if (ks && n_ks) {
      o.ks.assign(ks, ks + n_ks);
      for (auto k : o.ks)
        if (k == 0) fail(ErrorCode::invalid_argument, "k must be positive");
    }
    o.rnd_seed = rnd_seed;
    const auto ev = run_evaluate(model->ckpt, o, str(out_dir));
    if (report) *report = new sr_text{format_table(ev.annotation) + "\n" + format_table(ev.search)};
  });
}

const char* sr_text_str(const sr_text* text) { return text ? text->value.c_str() : ""; }

void sr_text_free(sr_text* text) { delete text; }

sr_status sr_query(const sr_model* model, const char* captions, const char* features, const char* data_dir,
                   const char* sentence, const char* image_id, size_t top_k, sr_results** out) {
  return guarded([&] {
    require(model, "model");
    require(captions, "captions");
    require(features, "features");
    require(out, "out");
    QueryOptions o;
    o.paths = {captions, features, str(data_dir)};
    if (sentence) o.sentence = sentence;
    if (image_id) o.image_id = image_id;
    o.top_k = top_k;
    *out = new sr_results{run_query(model->ckpt, o)};
  });
}

size_t sr_results_count(const sr_results* r) { return r ? r->hits.size() : 0; }

const char* sr_results_id(const sr_results* r, size_t i) {
  return r && i < r->hits.size() ? r->hits[i].id.c_str() : nullptr;
}

double sr_results_score(const sr_results* r, size_t i) { return r && i < r->hits.size() ? r->hits[i].score : 0.0; }

const char* sr_results_text(const sr_results* r, size_t i) {
  return r && i < r->hits.size() ? r->hits[i].text.c_str() : nullptr;
}

void sr_results_free(sr_results* results) { delete results; }

}  // extern "C"
