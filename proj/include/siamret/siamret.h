/* C interface to the siamret retrieval engine. Every call returns an
 * sr_status; on failure sr_last_error() describes the problem for the
 * calling thread. Handles are opaque and owned by the caller. */
#ifndef SIAMRET_H
#define SIAMRET_H

#include <stddef.h>
#include <stdint.h>

#if defined(SIAMRET_BUILDING_LIBRARY)
#define SR_API __attribute__((visibility("default")))
#else
#define SR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sr_status {
  SR_OK = 0,
  SR_ERR_IO = 1,
  SR_ERR_PARSE = 2,
  SR_ERR_INVALID_ARGUMENT = 3,
  SR_ERR_CONFIG = 4,
  SR_ERR_CHECKSUM = 5,
  SR_ERR_VERSION = 6,
  SR_ERR_MISMATCH = 7,
  SR_ERR_NUMERIC = 8,
  SR_ERR_EMPTY_INPUT = 9,
  SR_ERR_NOT_FOUND = 10,
  SR_ERR_ZERO_NORM = 11,
  SR_ERR_INTERNAL = 99
} sr_status;

typedef enum sr_log_level { SR_LOG_QUIET = 0, SR_LOG_WARN = 1, SR_LOG_INFO = 2 } sr_log_level;

typedef struct sr_config sr_config;
typedef struct sr_model sr_model;
typedef struct sr_results sr_results;
typedef struct sr_text sr_text;

/* Short machine-readable class name, e.g. "config_error". */
SR_API const char* sr_status_name(sr_status status);
/* Message of the last failed call on this thread ("" if none). */
SR_API const char* sr_last_error(void);
SR_API const char* sr_version(void);
SR_API void sr_set_log_level(sr_log_level level);

typedef struct sr_synth_params {
  size_t n_clusters;
  size_t images_per_cluster;
  size_t feature_dim;
  size_t vocab_per_cluster;
  double noise_sigma;
  uint64_t seed;
} sr_synth_params;

SR_API void sr_synth_defaults(sr_synth_params* params);
/* Writes captions.tsv and features.txt into out_dir. */
SR_API sr_status sr_synth(const sr_synth_params* params, const char* out_dir);

typedef struct sr_preprocess_params {
  const char* captions;
  const char* mode;      /* unigram, 2g, 3g, tk3 */
  const char* weighting; /* binary, tfidf */
  size_t max_vocab;      /* 0 picks the default for the mode */
  size_t n_test;
  double val_frac;
  uint64_t seed;
  int strict;
} sr_preprocess_params;

SR_API void sr_preprocess_defaults(sr_preprocess_params* params);
SR_API sr_status sr_preprocess(const sr_preprocess_params* params, const char* out_dir);

/* Training configuration: key/value settings with validated defaults. */
SR_API sr_status sr_config_new(sr_config** out);
SR_API void sr_config_free(sr_config* config);
SR_API sr_status sr_config_load(sr_config* config, const char* path);
SR_API sr_status sr_config_set(sr_config* config, const char* key, const char* value);
/* Copies the current value of key into buf (NUL terminated). *needed gets
 * the full length including the terminator. */
SR_API sr_status sr_config_get(const sr_config* config, const char* key, char* buf, size_t buf_size, size_t* needed);
SR_API sr_status sr_config_validate(const sr_config* config);

/* data_dir is a preprocess output directory. */
SR_API sr_status sr_train(const sr_config* config, const char* captions, const char* features, const char* data_dir,
                          const char* out_dir);

SR_API sr_status sr_model_load(const char* checkpoint, sr_model** out);
SR_API void sr_model_free(sr_model* model);

/* Scores the test split in both directions. ks may be NULL for 1,2,5,10.
 * When out_dir is set, writes annotation/search reports (.txt and .kv)
 * there. When report is set, it receives both tables as text. */
SR_API sr_status sr_evaluate(const sr_model* model, const char* captions, const char* features, const char* data_dir,
                             const size_t* ks, size_t n_ks, uint64_t rnd_seed, const char* out_dir,
                             sr_text** report);
SR_API const char* sr_text_str(const sr_text* text);
SR_API void sr_text_free(sr_text* text);

/* Exactly one of sentence / image_id must be non-NULL. data_dir may be NULL
 * to search every image in the features file. */
SR_API sr_status sr_query(const sr_model* model, const char* captions, const char* features, const char* data_dir,
                          const char* sentence, const char* image_id, size_t top_k, sr_results** out);
SR_API size_t sr_results_count(const sr_results* results);
SR_API const char* sr_results_id(const sr_results* results, size_t i);
SR_API double sr_results_score(const sr_results* results, size_t i);
/* Caption text for annotation results, "" otherwise. */
SR_API const char* sr_results_text(const sr_results* results, size_t i);
SR_API void sr_results_free(sr_results* results);

#ifdef __cplusplus
}
#endif

#endif
