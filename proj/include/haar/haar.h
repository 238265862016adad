/* Copyright (C) 2026 The haar-strands Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef HAAR_HAAR_H
#define HAAR_HAAR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(HAAR_BUILDING_LIBRARY)
#    define HAAR_API __declspec(dllexport)
#  else
#    define HAAR_API __declspec(dllimport)
#  endif
#else
#  define HAAR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum haar_status {
    HAAR_OK = 0,
    HAAR_ERR_INVALID_ARGUMENT = 1,
    HAAR_ERR_IO = 2,
    HAAR_ERR_FORMAT = 3,
    HAAR_ERR_NUMERIC = 4,
    HAAR_ERR_SHAPE = 5,
    HAAR_ERR_NULL_POINTER = 6,
    HAAR_ERR_OUT_OF_MEMORY = 7,
    HAAR_ERR_INTERNAL = 8
} haar_status;

/* Message of the last failed call on this thread ("" after a success). */
HAAR_API const char* haar_last_error(void);
/* Upper-case identifier such as "FORMAT". */
HAAR_API const char* haar_status_name(haar_status status);
HAAR_API const char* haar_version(void);

typedef struct haar_grid haar_grid;
typedef struct haar_hair haar_hair;
typedef struct haar_latent haar_latent;
typedef struct haar_codec haar_codec;
typedef struct haar_model haar_model;
typedef struct haar_embedding haar_embedding;
typedef struct haar_edit haar_edit;

/* Called once per epoch / iteration / optimizer step. */
typedef void (*haar_progress_fn)(int step, double loss, void* user);

/* ---- scalp grids ---- */

/* Unit upper hemisphere parametrized by azimuthal-equidistant UVs. */
HAAR_API haar_status haar_grid_hemisphere(int width, int height, haar_grid** out);
/* Triangle mesh with per-corner UVs read from a Wavefront OBJ file. */
HAAR_API haar_status haar_grid_from_obj(const char* path, int width, int height, haar_grid** out);
HAAR_API haar_status haar_grid_info(const haar_grid* grid, int* width, int* height, int64_t* valid);
HAAR_API void haar_grid_free(haar_grid* grid);

/* ---- hair maps (local-space strands per texel) ---- */

HAAR_API haar_status haar_hair_read(const char* path, haar_hair** out);
HAAR_API haar_status haar_hair_write(const haar_hair* hair, const char* path);
/* Imports a cyHair file, aligns every strand to its nearest texel and resamples to `points`. */
HAAR_API haar_status haar_hair_import_cyhair(const char* path, const haar_grid* grid, int points, haar_hair** out);
/* Procedural hairstyle with a randomly drawn base style. */
HAAR_API haar_status haar_hair_synthetic(const haar_grid* grid, uint64_t seed, int points, haar_hair** out);
HAAR_API haar_status haar_hair_info(const haar_hair* hair, int* width, int* height, int* points, int64_t* strands);
/* Copies the L*3 local coordinates of a valid texel into `xyz`. */
HAAR_API haar_status haar_hair_strand(const haar_hair* hair, int64_t texel, float* xyz, size_t capacity);
/* Copy without the strands whose texel is off the grid's scalp; `dropped` may be NULL. */
HAAR_API haar_status haar_hair_restrict(const haar_hair* hair, const haar_grid* grid, haar_hair** out, int64_t* dropped);
HAAR_API haar_status haar_hair_export_obj(const haar_hair* hair, const haar_grid* grid, const char* path);
HAAR_API void haar_hair_free(haar_hair* hair);

typedef struct haar_augment_ranges {
    double scale_min, scale_max;
    double cut_min, cut_max;
    double curl_amplitude_min, curl_amplitude_max;
    double curl_frequency_min, curl_frequency_max;
} haar_augment_ranges;

HAAR_API void haar_augment_ranges_default(haar_augment_ranges* r);
/* Variant v of base map b in an expansion with `variants` variants per map.
 * The dataset (b, v) ordering is style-major: output index b * variants + v. */
HAAR_API haar_status haar_hair_augment(const haar_hair* base, const haar_augment_ranges* ranges, uint64_t seed,
                                       size_t b, size_t v, size_t variants, haar_hair** out);

/* ---- latent maps ---- */

HAAR_API haar_status haar_latent_read(const char* path, haar_latent** out);
HAAR_API haar_status haar_latent_write(const haar_latent* latent, const char* path);
HAAR_API haar_status haar_latent_info(const haar_latent* latent, int* width, int* height, int* channels,
                                      int64_t* valid);
/* Dense channel-major (M, H, W) values; masked texels are zero. */
HAAR_API haar_status haar_latent_data(const haar_latent* latent, float* out, size_t capacity);
HAAR_API haar_status haar_latent_equal(const haar_latent* a, const haar_latent* b, int* equal);
HAAR_API haar_status haar_latent_distance(const haar_latent* a, const haar_latent* b, double* out);
HAAR_API haar_status haar_latent_upsample(const haar_latent* guide, const haar_codec* codec, int width, int height,
                                          int noise, uint64_t seed, haar_latent** out);
HAAR_API void haar_latent_free(haar_latent* latent);

typedef struct haar_metric_report {
    double mmd;
    double cov;
    double one_nna;
    int has_one_nna;
} haar_metric_report;

HAAR_API haar_status haar_metrics(const haar_latent* const* generated, size_t n_generated,
                                  const haar_latent* const* reference, size_t n_reference, haar_metric_report* out);
/* "metric,value" CSV. */
HAAR_API haar_status haar_metrics_write_csv(const haar_metric_report* report, const char* path);

/* ---- strand codec ---- */

typedef struct haar_codec_config {
    int points;
    int latent;
    int hidden;
    double beta;
    double warmup;
    int epochs;
    int batch;
    double lr;
    uint64_t seed;
} haar_codec_config;

HAAR_API void haar_codec_config_default(haar_codec_config* cfg);
/* Trains on every strand of the given maps plus `synthetic_strands` procedural strands. */
HAAR_API haar_status haar_codec_train(const haar_hair* const* maps, size_t n_maps, int synthetic_strands,
                                      const haar_codec_config* cfg, haar_progress_fn progress, void* user,
                                      haar_codec** out);
HAAR_API haar_status haar_codec_read(const char* path, haar_codec** out);
HAAR_API haar_status haar_codec_write(const haar_codec* codec, const char* path);
HAAR_API haar_status haar_codec_info(const haar_codec* codec, int* points, int* latent);
/* sample = 0 encodes posterior means; otherwise texel t draws with seed mix(seed, t). */
HAAR_API haar_status haar_codec_encode(const haar_codec* codec, const haar_hair* hair, int sample, uint64_t seed,
                                       haar_latent** out);
HAAR_API haar_status haar_codec_decode(const haar_codec* codec, const haar_latent* latent, haar_hair** out);
HAAR_API void haar_codec_free(haar_codec* codec);

/* ---- prompt embeddings ---- */

/* Deterministic hashed-token embedding; empty text gives the null context. */
HAAR_API haar_status haar_embedding_from_text(const char* text, int tokens, int dim, haar_embedding** out);
HAAR_API haar_status haar_embedding_from_data(int tokens, int dim, const float* data, haar_embedding** out);
HAAR_API haar_status haar_embedding_null(int tokens, int dim, haar_embedding** out);
HAAR_API haar_status haar_embedding_read(const char* path, haar_embedding** out);
HAAR_API haar_status haar_embedding_write(const haar_embedding* e, const char* path);
HAAR_API haar_status haar_embedding_average(const haar_embedding* const* list, size_t n, haar_embedding** out);
HAAR_API haar_status haar_embedding_lerp(const haar_embedding* a, const haar_embedding* b, double alpha,
                                         haar_embedding** out);
HAAR_API haar_status haar_embedding_info(const haar_embedding* e, int* tokens, int* dim);
HAAR_API haar_status haar_embedding_data(const haar_embedding* e, float* out, size_t capacity);
HAAR_API void haar_embedding_free(haar_embedding* e);

/* ---- denoiser ---- */

#define HAAR_MAX_LEVELS 8

typedef struct haar_unet_config {
    int image_size;
    int in_channels;
    int model_channels;
    int n_channel_mult;
    int channel_mult[HAAR_MAX_LEVELS];
    int num_res_blocks;
    int num_heads;
    int n_attention;
    int attention_resolutions[HAAR_MAX_LEVELS];
    int context_dim;
    int norm_groups;
} haar_unet_config;

typedef struct haar_train_config {
    int batch;
    double lr;
    double beta1, beta2, eps, weight_decay;
    int iterations;
    double ema_decay;
    double null_prob;
    double gamma;
    int stride;
    double p_mean, p_std;
    uint64_t seed;
    /* <= 0 estimates it from the training latents. */
    double sigma_data;
} haar_train_config;

typedef struct haar_sample_options {
    int steps;
    double guidance;
    double sigma_min, sigma_max, rho;
    int use_ema;
} haar_sample_options;

/* Small desk-scale network. */
HAAR_API void haar_unet_config_default(haar_unet_config* cfg);
/* Full-size 32x32x64 network with 320 base channels. */
HAAR_API void haar_unet_config_reference(haar_unet_config* cfg);
HAAR_API haar_status haar_unet_param_count(const haar_unet_config* cfg, int64_t* out);
HAAR_API void haar_train_config_default(haar_train_config* cfg);
/* 50 steps, guidance 1.5, EMA weights. */
HAAR_API void haar_sample_options_default(haar_sample_options* opt);

/* contexts[k] conditions maps[k]. */
HAAR_API haar_status haar_model_train(const haar_latent* const* maps, const haar_embedding* const* contexts, size_t n,
                                      const haar_unet_config* unet, const haar_train_config* cfg,
                                      haar_progress_fn progress, void* user, haar_model** out);
HAAR_API haar_status haar_model_read(const char* path, haar_model** out);
HAAR_API haar_status haar_model_write(const haar_model* model, const char* path);
HAAR_API haar_status haar_model_info(const haar_model* model, haar_unet_config* cfg, double* sigma_data,
                                     int64_t* params);
HAAR_API void haar_model_free(haar_model* model);

/* NULL context samples unconditionally. */
HAAR_API haar_status haar_generate(const haar_model* model, const haar_embedding* context,
                                   const haar_sample_options* opt, uint64_t seed, haar_latent** out);
/* One sample per alpha along lerp(a, b, alpha), all sharing `seed`; out has n slots. */
HAAR_API haar_status haar_interpolate(const haar_model* model, const haar_embedding* a, const haar_embedding* b,
                                      const double* alphas, size_t n, const haar_sample_options* opt, uint64_t seed,
                                      haar_latent** out);

/* ---- editing ---- */

typedef struct haar_edit_config {
    int inversion_steps;
    double inversion_lr;
    int finetune_steps;
    double finetune_lr;
    int panel;
    uint64_t seed;
    double gamma;
} haar_edit_config;

HAAR_API void haar_edit_config_default(haar_edit_config* cfg);
/* Inverts `target` against `input`, then fine-tunes a copy of the model. */
HAAR_API haar_status haar_edit_create(const haar_model* model, const haar_latent* input, const haar_embedding* target,
                                      const haar_edit_config* cfg, haar_progress_fn progress, void* user,
                                      haar_edit** out);
/* which = 0: inversion, 1: fine-tuning. Initial and best objective values. */
HAAR_API haar_status haar_edit_losses(const haar_edit* edit, int which, double* initial, double* best);
/* Sample conditioned on lerp(e_opt, e_target, eta) with the fine-tuned weights. */
HAAR_API haar_status haar_edit_sample(const haar_edit* edit, double eta, const haar_sample_options* opt, uint64_t seed,
                                      haar_latent** out);
HAAR_API void haar_edit_free(haar_edit* edit);

#ifdef __cplusplus
}
#endif

#endif
