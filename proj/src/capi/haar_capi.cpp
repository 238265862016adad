// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "haar/haar.h"

#include <cstring>
#include <new>
#include <string>

#include "augmentation.hpp"
#include "codec.hpp"
#include "diffusion.hpp"
#include "editing.hpp"
#include "io/binio.hpp"
#include "io/formats.hpp"
#include "metrics.hpp"
#include "synthetic.hpp"
#include "upsampler.hpp"

struct haar_grid {
    haar::ScalpGrid grid;
};
struct haar_hair {
    haar::HairMap map;
};
struct haar_latent {
    haar::LatentMap map;
};
struct haar_codec {
    haar::CodecParams params;
};
struct haar_model {
    haar::DenoiserParams params;
};
struct haar_embedding {
    haar::PromptEmbedding e;
};
struct haar_edit {
    haar::EditSession session;
};

namespace {

thread_local std::string g_last_error;

haar_status to_status(haar::ErrorCode c) {
    switch (c) {
        case haar::ErrorCode::InvalidArgument: return HAAR_ERR_INVALID_ARGUMENT;
        case haar::ErrorCode::Io: return HAAR_ERR_IO;
        case haar::ErrorCode::Format: return HAAR_ERR_FORMAT;
        case haar::ErrorCode::Numeric: return HAAR_ERR_NUMERIC;
        case haar::ErrorCode::Shape: return HAAR_ERR_SHAPE;
        case haar::ErrorCode::Internal: return HAAR_ERR_INTERNAL;
    }
    return HAAR_ERR_INTERNAL;
}

haar_status set_error(haar_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

template <class F>
haar_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return HAAR_OK;
    } catch (const haar::Error& e) {
        return set_error(to_status(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return set_error(HAAR_ERR_OUT_OF_MEMORY, "out of memory");
    } catch (const std::exception& e) {
        return set_error(HAAR_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(HAAR_ERR_INTERNAL, "unknown exception");
    }
}

#define HAAR_CHECK_NULL(p)                                                     \
    do {                                                                       \
        if (!(p)) return set_error(HAAR_ERR_NULL_POINTER, "null pointer: " #p); \
    } while (0)

haar::TrainConfig train_config(const haar_train_config& c) {
    haar::TrainConfig t;
    t.batch = c.batch;
    t.lr = c.lr;
    t.beta1 = c.beta1;
    t.beta2 = c.beta2;
    t.eps = c.eps;
    t.weight_decay = c.weight_decay;
    t.iterations = c.iterations;
    t.ema_decay = c.ema_decay;
    t.null_prob = c.null_prob;
    t.gamma = c.gamma;
    t.stride = c.stride;
    t.p_mean = c.p_mean;
    t.p_std = c.p_std;
    t.seed = c.seed;
    return t;
}

haar::UNetConfig unet_config(const haar_unet_config& c) {
    haar::require(c.n_channel_mult >= 1 && c.n_channel_mult <= HAAR_MAX_LEVELS && c.n_attention >= 0 &&
                      c.n_attention <= HAAR_MAX_LEVELS,
                  haar::ErrorCode::InvalidArgument, "unet config: level list length out of range");
    haar::UNetConfig u;
    u.image_size = c.image_size;
    u.in_channels = c.in_channels;
    u.model_channels = c.model_channels;
    u.channel_mult.assign(c.channel_mult, c.channel_mult + c.n_channel_mult);
    u.num_res_blocks = c.num_res_blocks;
    u.num_heads = c.num_heads;
    u.attention_resolutions.assign(c.attention_resolutions, c.attention_resolutions + c.n_attention);
    u.context_dim = c.context_dim;
    u.norm_groups = c.norm_groups;
    u.validate();
    return u;
}

void export_unet_config(const haar::UNetConfig& u, haar_unet_config* c) {
    haar::require(u.channel_mult.size() <= HAAR_MAX_LEVELS && u.attention_resolutions.size() <= HAAR_MAX_LEVELS,
                  haar::ErrorCode::Shape, "unet config has more levels than the C API can describe");
    std::memset(c, 0, sizeof *c);
    c->image_size = u.image_size;
    c->in_channels = u.in_channels;
    c->model_channels = u.model_channels;
    c->n_channel_mult = static_cast<int>(u.channel_mult.size());
    for (size_t i = 0; i < u.channel_mult.size(); ++i) c->channel_mult[i] = u.channel_mult[i];
    c->num_res_blocks = u.num_res_blocks;
    c->num_heads = u.num_heads;
    c->n_attention = static_cast<int>(u.attention_resolutions.size());
    for (size_t i = 0; i < u.attention_resolutions.size(); ++i) c->attention_resolutions[i] = u.attention_resolutions[i];
    c->context_dim = u.context_dim;
    c->norm_groups = u.norm_groups;
}

haar::SampleOptions sample_options(const haar_sample_options* o) {
    haar::SampleOptions s;
    if (!o) return s;
    s.schedule.steps = o->steps;
    s.schedule.sigma_min = o->sigma_min;
    s.schedule.sigma_max = o->sigma_max;
    s.schedule.rho = o->rho;
    s.guidance = o->guidance;
    s.use_ema = o->use_ema != 0;
    return s;
}

haar::AugmentRanges augment_ranges(const haar_augment_ranges& r) {
    haar::AugmentRanges a;
    a.scale_min = r.scale_min;
    a.scale_max = r.scale_max;
    a.cut_min = r.cut_min;
    a.cut_max = r.cut_max;
    a.curl_amplitude_min = r.curl_amplitude_min;
    a.curl_amplitude_max = r.curl_amplitude_max;
    a.curl_frequency_min = r.curl_frequency_min;
    a.curl_frequency_max = r.curl_frequency_max;
    return a;
}

void copy_out(const std::vector<float>& v, float* out, size_t capacity) {
    haar::require(capacity >= v.size(), haar::ErrorCode::InvalidArgument,
                  "output buffer holds " + std::to_string(capacity) + " floats, " + std::to_string(v.size()) +
                      " needed");
    std::memcpy(out, v.data(), v.size() * sizeof(float));
}

}  // namespace

extern "C" {

const char* haar_last_error(void) { return g_last_error.c_str(); }

const char* haar_status_name(haar_status s) {
    switch (s) {
        case HAAR_OK: return "OK";
        case HAAR_ERR_INVALID_ARGUMENT: return "INVALID_ARGUMENT";
        case HAAR_ERR_IO: return "IO";
        case HAAR_ERR_FORMAT: return "FORMAT";
        case HAAR_ERR_NUMERIC: return "NUMERIC";
        case HAAR_ERR_SHAPE: return "SHAPE";
        case HAAR_ERR_NULL_POINTER: return "NULL_POINTER";
        case HAAR_ERR_OUT_OF_MEMORY: return "OUT_OF_MEMORY";
        case HAAR_ERR_INTERNAL: return "INTERNAL";
    }
    return "UNKNOWN";
}

const char* haar_version(void) { return "0.1.0"; }

// ---- grids

haar_status haar_grid_hemisphere(int width, int height, haar_grid** out) {
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_grid{haar::hemisphere_grid(width, height)}; });
}

haar_status haar_grid_from_obj(const char* path, int width, int height, haar_grid** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_grid{haar::build_scalp_grid(haar::load_obj_mesh(path), width, height)}; });
}

haar_status haar_grid_info(const haar_grid* grid, int* width, int* height, int64_t* valid) {
    HAAR_CHECK_NULL(grid);
    return guarded([&] {
        if (width) *width = grid->grid.width;
        if (height) *height = grid->grid.height;
        if (valid) *valid = grid->grid.valid_count();
    });
}

void haar_grid_free(haar_grid* grid) { delete grid; }

// ---- hair maps

haar_status haar_hair_read(const char* path, haar_hair** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_hair{haar::io::read_haar(path)}; });
}

haar_status haar_hair_write(const haar_hair* hair, const char* path) {
    HAAR_CHECK_NULL(hair);
    HAAR_CHECK_NULL(path);
    return guarded([&] { haar::io::write_haar(path, hair->map); });
}

haar_status haar_hair_import_cyhair(const char* path, const haar_grid* grid, int points, haar_hair** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(grid);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        auto strands = haar::io::import_cyhair(path, points);
        *out = new haar_hair{haar::align_strands(strands, grid->grid, points)};
    });
}

haar_status haar_hair_synthetic(const haar_grid* grid, uint64_t seed, int points, haar_hair** out) {
    HAAR_CHECK_NULL(grid);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        haar::Rng rng(seed);
        auto style = haar::random_style(rng);
        *out = new haar_hair{haar::synthetic_hairstyle(grid->grid, style, rng.next_u64(), points)};
    });
}

haar_status haar_hair_info(const haar_hair* hair, int* width, int* height, int* points, int64_t* strands) {
    HAAR_CHECK_NULL(hair);
    if (width) *width = hair->map.width();
    if (height) *height = hair->map.height();
    if (points) *points = hair->map.points();
    if (strands) *strands = hair->map.strand_count();
    g_last_error.clear();
    return HAAR_OK;
}

haar_status haar_hair_strand(const haar_hair* hair, int64_t texel, float* xyz, size_t capacity) {
    HAAR_CHECK_NULL(hair);
    HAAR_CHECK_NULL(xyz);
    return guarded([&] {
        const auto& m = hair->map;
        haar::require(texel >= 0 && texel < m.texels() && m.has(texel), haar::ErrorCode::InvalidArgument,
                      "texel " + std::to_string(texel) + " holds no strand");
        const float* src = m.slot_data(m.slot(texel));
        std::vector<float> v(src, src + static_cast<size_t>(m.points()) * 3);
        copy_out(v, xyz, capacity);
    });
}

haar_status haar_hair_restrict(const haar_hair* hair, const haar_grid* grid, haar_hair** out, int64_t* dropped) {
    HAAR_CHECK_NULL(hair);
    HAAR_CHECK_NULL(grid);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        auto kept = haar::restrict_to_grid(hair->map, grid->grid);
        if (dropped) *dropped = hair->map.strand_count() - kept.strand_count();
        *out = new haar_hair{std::move(kept)};
    });
}

haar_status haar_hair_export_obj(const haar_hair* hair, const haar_grid* grid, const char* path) {
    HAAR_CHECK_NULL(hair);
    HAAR_CHECK_NULL(grid);
    HAAR_CHECK_NULL(path);
    return guarded([&] { haar::io::export_obj(path, hair->map, grid->grid); });
}

void haar_hair_free(haar_hair* hair) { delete hair; }

void haar_augment_ranges_default(haar_augment_ranges* r) {
    if (!r) return;
    haar::AugmentRanges a;
    *r = {a.scale_min,          a.scale_max,          a.cut_min,           a.cut_max,
          a.curl_amplitude_min, a.curl_amplitude_max, a.curl_frequency_min, a.curl_frequency_max};
}

haar_status haar_hair_augment(const haar_hair* base, const haar_augment_ranges* ranges, uint64_t seed, size_t b,
                              size_t v, size_t variants, haar_hair** out) {
    HAAR_CHECK_NULL(base);
    HAAR_CHECK_NULL(ranges);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        haar::require(variants >= 1 && v < variants, haar::ErrorCode::InvalidArgument,
                      "augment: variant index out of range");
        auto p = haar::draw_augment(augment_ranges(*ranges), seed, b, v, variants);
        *out = new haar_hair{haar::apply_augment(base->map, p)};
    });
}

// ---- latents

haar_status haar_latent_read(const char* path, haar_latent** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_latent{haar::io::read_hlat(path)}; });
}

haar_status haar_latent_write(const haar_latent* latent, const char* path) {
    HAAR_CHECK_NULL(latent);
    HAAR_CHECK_NULL(path);
    return guarded([&] { haar::io::write_hlat(path, latent->map); });
}

haar_status haar_latent_info(const haar_latent* latent, int* width, int* height, int* channels, int64_t* valid) {
    HAAR_CHECK_NULL(latent);
    if (width) *width = latent->map.width();
    if (height) *height = latent->map.height();
    if (channels) *channels = latent->map.channels();
    if (valid) *valid = latent->map.valid_count();
    g_last_error.clear();
    return HAAR_OK;
}

haar_status haar_latent_data(const haar_latent* latent, float* out, size_t capacity) {
    HAAR_CHECK_NULL(latent);
    HAAR_CHECK_NULL(out);
    return guarded([&] { copy_out(latent->map.data(), out, capacity); });
}

haar_status haar_latent_equal(const haar_latent* a, const haar_latent* b, int* equal) {
    HAAR_CHECK_NULL(a);
    HAAR_CHECK_NULL(b);
    HAAR_CHECK_NULL(equal);
    *equal = a->map == b->map ? 1 : 0;
    g_last_error.clear();
    return HAAR_OK;
}

haar_status haar_latent_distance(const haar_latent* a, const haar_latent* b, double* out) {
    HAAR_CHECK_NULL(a);
    HAAR_CHECK_NULL(b);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = haar::latent_distance(a->map, b->map); });
}

haar_status haar_latent_upsample(const haar_latent* guide, const haar_codec* codec, int width, int height, int noise,
                                 uint64_t seed, haar_latent** out) {
    HAAR_CHECK_NULL(guide);
    HAAR_CHECK_NULL(codec);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        haar::UpsampleOptions opt;
        opt.width = width;
        opt.height = height;
        opt.noise = noise != 0;
        opt.seed = seed;
        *out = new haar_latent{haar::upsample(guide->map, codec->params, opt)};
    });
}

void haar_latent_free(haar_latent* latent) { delete latent; }

haar_status haar_metrics(const haar_latent* const* generated, size_t n_generated, const haar_latent* const* reference,
                         size_t n_reference, haar_metric_report* out) {
    HAAR_CHECK_NULL(generated);
    HAAR_CHECK_NULL(reference);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        std::vector<haar::LatentMap> g, r;
        for (size_t i = 0; i < n_generated; ++i) {
            haar::require(generated[i] != nullptr, haar::ErrorCode::InvalidArgument, "metrics: null generated map");
            g.push_back(generated[i]->map);
        }
        for (size_t i = 0; i < n_reference; ++i) {
            haar::require(reference[i] != nullptr, haar::ErrorCode::InvalidArgument, "metrics: null reference map");
            r.push_back(reference[i]->map);
        }
        auto rep = haar::evaluate_metrics(g, r);
        *out = {rep.mmd, rep.cov, rep.one_nna, rep.has_one_nna ? 1 : 0};
    });
}

haar_status haar_metrics_write_csv(const haar_metric_report* report, const char* path) {
    HAAR_CHECK_NULL(report);
    HAAR_CHECK_NULL(path);
    return guarded([&] {
        haar::MetricReport r;
        r.mmd = report->mmd;
        r.cov = report->cov;
        r.one_nna = report->one_nna;
        r.has_one_nna = report->has_one_nna != 0;
        haar::io::write_text_atomic(path, haar::metrics_csv(r));
    });
}

// ---- codec

void haar_codec_config_default(haar_codec_config* cfg) {
    if (!cfg) return;
    haar::CodecConfig c;
    *cfg = {c.points, c.latent, c.hidden, c.beta, c.warmup, c.epochs, c.batch, c.lr, c.seed};
}

haar_status haar_codec_train(const haar_hair* const* maps, size_t n_maps, int synthetic_strands,
                             const haar_codec_config* cfg, haar_progress_fn progress, void* user, haar_codec** out) {
    HAAR_CHECK_NULL(cfg);
    HAAR_CHECK_NULL(out);
    if (n_maps > 0) HAAR_CHECK_NULL(maps);
    return guarded([&] {
        haar::CodecConfig c;
        c.points = cfg->points;
        c.latent = cfg->latent;
        c.hidden = cfg->hidden;
        c.beta = cfg->beta;
        c.warmup = cfg->warmup;
        c.epochs = cfg->epochs;
        c.batch = cfg->batch;
        c.lr = cfg->lr;
        c.seed = cfg->seed;
        haar::require(synthetic_strands >= 0, haar::ErrorCode::InvalidArgument, "negative synthetic strand count");
        std::vector<haar::Strand> data;
        for (size_t k = 0; k < n_maps; ++k) {
            haar::require(maps[k] != nullptr, haar::ErrorCode::InvalidArgument, "codec train: null map");
            const auto& m = maps[k]->map;
            haar::require(m.points() == c.points, haar::ErrorCode::Shape,
                          "codec train: map " + std::to_string(k) + " has " + std::to_string(m.points()) +
                              " points per strand, config expects " + std::to_string(c.points));
            for (int64_t t = 0; t < m.texels(); ++t)
                if (m.has(t)) data.push_back(m.strand(t));
        }
        if (synthetic_strands > 0) {
            auto syn = haar::synthetic_strands(synthetic_strands, c.seed ^ 0x5EEDULL, c.points);
            data.insert(data.end(), syn.begin(), syn.end());
        }
        haar::CodecProgress cb;
        if (progress)
            cb = [&](int epoch, const haar::CodecEpoch& e) { progress(epoch, e.loss, user); };
        *out = new haar_codec{haar::train_codec(data, c, nullptr, cb)};
    });
}

haar_status haar_codec_read(const char* path, haar_codec** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_codec{haar::io::read_hvae(path)}; });
}

haar_status haar_codec_write(const haar_codec* codec, const char* path) {
    HAAR_CHECK_NULL(codec);
    HAAR_CHECK_NULL(path);
    return guarded([&] { haar::io::write_hvae(path, codec->params); });
}

haar_status haar_codec_info(const haar_codec* codec, int* points, int* latent) {
    HAAR_CHECK_NULL(codec);
    if (points) *points = codec->params.points;
    if (latent) *latent = codec->params.latent;
    g_last_error.clear();
    return HAAR_OK;
}

haar_status haar_codec_encode(const haar_codec* codec, const haar_hair* hair, int sample, uint64_t seed,
                              haar_latent** out) {
    HAAR_CHECK_NULL(codec);
    HAAR_CHECK_NULL(hair);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        auto mode = sample ? haar::EncodeMode::Sample : haar::EncodeMode::Mean;
        *out = new haar_latent{haar::encode_map(codec->params, hair->map, mode, seed)};
    });
}

haar_status haar_codec_decode(const haar_codec* codec, const haar_latent* latent, haar_hair** out) {
    HAAR_CHECK_NULL(codec);
    HAAR_CHECK_NULL(latent);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_hair{haar::decode_map(codec->params, latent->map)}; });
}

void haar_codec_free(haar_codec* codec) { delete codec; }

// ---- embeddings

haar_status haar_embedding_from_text(const char* text, int tokens, int dim, haar_embedding** out) {
    HAAR_CHECK_NULL(text);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_embedding{haar::embed_text_builtin(text, tokens, dim)}; });
}

haar_status haar_embedding_from_data(int tokens, int dim, const float* data, haar_embedding** out) {
    HAAR_CHECK_NULL(data);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        haar::require(tokens > 0 && dim > 0, haar::ErrorCode::InvalidArgument, "embedding needs positive shape");
        haar::PromptEmbedding e(tokens, dim, haar::Provenance::External);
        std::memcpy(e.data.data(), data, e.data.size() * sizeof(float));
        *out = new haar_embedding{std::move(e)};
    });
}

haar_status haar_embedding_null(int tokens, int dim, haar_embedding** out) {
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        haar::require(tokens > 0 && dim > 0, haar::ErrorCode::InvalidArgument, "embedding needs positive shape");
        *out = new haar_embedding{haar::PromptEmbedding::null(tokens, dim)};
    });
}

haar_status haar_embedding_read(const char* path, haar_embedding** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_embedding{haar::io::read_hemb(path)}; });
}

haar_status haar_embedding_write(const haar_embedding* e, const char* path) {
    HAAR_CHECK_NULL(e);
    HAAR_CHECK_NULL(path);
    return guarded([&] { haar::io::write_hemb(path, e->e); });
}

haar_status haar_embedding_average(const haar_embedding* const* list, size_t n, haar_embedding** out) {
    HAAR_CHECK_NULL(list);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        std::vector<haar::PromptEmbedding> v;
        for (size_t i = 0; i < n; ++i) {
            haar::require(list[i] != nullptr, haar::ErrorCode::InvalidArgument, "average: null embedding");
            v.push_back(list[i]->e);
        }
        *out = new haar_embedding{haar::average_embeddings(v)};
    });
}

haar_status haar_embedding_lerp(const haar_embedding* a, const haar_embedding* b, double alpha, haar_embedding** out) {
    HAAR_CHECK_NULL(a);
    HAAR_CHECK_NULL(b);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_embedding{haar::lerp_embeddings(a->e, b->e, alpha)}; });
}

haar_status haar_embedding_info(const haar_embedding* e, int* tokens, int* dim) {
    HAAR_CHECK_NULL(e);
    if (tokens) *tokens = e->e.tokens;
    if (dim) *dim = e->e.dim;
    g_last_error.clear();
    return HAAR_OK;
}

haar_status haar_embedding_data(const haar_embedding* e, float* out, size_t capacity) {
    HAAR_CHECK_NULL(e);
    HAAR_CHECK_NULL(out);
    return guarded([&] { copy_out(e->e.data, out, capacity); });
}

void haar_embedding_free(haar_embedding* e) { delete e; }

// ---- denoiser

void haar_unet_config_default(haar_unet_config* cfg) {
    if (cfg) export_unet_config(haar::UNetConfig{}, cfg);
}

void haar_unet_config_reference(haar_unet_config* cfg) {
    if (cfg) export_unet_config(haar::UNetConfig::reference(), cfg);
}

haar_status haar_unet_param_count(const haar_unet_config* cfg, int64_t* out) {
    HAAR_CHECK_NULL(cfg);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = haar::unet_param_count(unet_config(*cfg)); });
}

void haar_train_config_default(haar_train_config* cfg) {
    if (!cfg) return;
    haar::TrainConfig t;
    *cfg = {t.batch,      t.lr,        t.beta1,  t.beta2, t.eps,    t.weight_decay, t.iterations, t.ema_decay,
            t.null_prob,  t.gamma,     t.stride, t.p_mean, t.p_std, t.seed,         0.0};
}

void haar_sample_options_default(haar_sample_options* opt) {
    if (!opt) return;
    haar::SampleOptions s;
    *opt = {s.schedule.steps, s.guidance, s.schedule.sigma_min, s.schedule.sigma_max, s.schedule.rho,
            s.use_ema ? 1 : 0};
}

haar_status haar_model_train(const haar_latent* const* maps, const haar_embedding* const* contexts, size_t n,
                             const haar_unet_config* unet, const haar_train_config* cfg, haar_progress_fn progress,
                             void* user, haar_model** out) {
    HAAR_CHECK_NULL(maps);
    HAAR_CHECK_NULL(contexts);
    HAAR_CHECK_NULL(unet);
    HAAR_CHECK_NULL(cfg);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        std::vector<haar::LatentMap> m;
        std::vector<haar::PromptEmbedding> c;
        for (size_t i = 0; i < n; ++i) {
            haar::require(maps[i] && contexts[i], haar::ErrorCode::InvalidArgument, "model train: null input");
            m.push_back(maps[i]->map);
            c.push_back(contexts[i]->e);
        }
        haar::TrainProgress cb;
        if (progress) cb = [&](int it, double loss) { progress(it, loss, user); };
        *out = new haar_model{
            haar::train_diffusion(m, c, unet_config(*unet), train_config(*cfg), nullptr, cb, cfg->sigma_data)};
    });
}

haar_status haar_model_read(const char* path, haar_model** out) {
    HAAR_CHECK_NULL(path);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_model{haar::io::read_hunt(path)}; });
}

haar_status haar_model_write(const haar_model* model, const char* path) {
    HAAR_CHECK_NULL(model);
    HAAR_CHECK_NULL(path);
    return guarded([&] { haar::io::write_hunt(path, model->params); });
}

haar_status haar_model_info(const haar_model* model, haar_unet_config* cfg, double* sigma_data, int64_t* params) {
    HAAR_CHECK_NULL(model);
    return guarded([&] {
        if (cfg) export_unet_config(model->params.config, cfg);
        if (sigma_data) *sigma_data = model->params.sigma_data;
        if (params) *params = model->params.weights.scalar_count();
    });
}

void haar_model_free(haar_model* model) { delete model; }

haar_status haar_generate(const haar_model* model, const haar_embedding* context, const haar_sample_options* opt,
                          uint64_t seed, haar_latent** out) {
    HAAR_CHECK_NULL(model);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        const auto& cfg = model->params.config;
        auto ctx = context ? context->e : haar::PromptEmbedding::null(haar::kDefaultContextTokens, cfg.context_dim);
        *out = new haar_latent{haar::sample(model->params, ctx, sample_options(opt), seed)};
    });
}

haar_status haar_interpolate(const haar_model* model, const haar_embedding* a, const haar_embedding* b,
                             const double* alphas, size_t n, const haar_sample_options* opt, uint64_t seed,
                             haar_latent** out) {
    HAAR_CHECK_NULL(model);
    HAAR_CHECK_NULL(a);
    HAAR_CHECK_NULL(b);
    HAAR_CHECK_NULL(alphas);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        auto maps = haar::interpolate_prompts(model->params, a->e, b->e, std::vector<double>(alphas, alphas + n),
                                              sample_options(opt), seed);
        for (size_t i = 0; i < n; ++i) out[i] = nullptr;
        try {
            for (size_t i = 0; i < n; ++i) out[i] = new haar_latent{std::move(maps[i])};
        } catch (...) {
            for (size_t i = 0; i < n; ++i) {
                delete out[i];
                out[i] = nullptr;
            }
            throw;
        }
    });
}

// ---- editing

void haar_edit_config_default(haar_edit_config* cfg) {
    if (!cfg) return;
    haar::InversionConfig inv;
    haar::FinetuneConfig ft;
    *cfg = {inv.steps, inv.lr, ft.steps, ft.lr, inv.panel, inv.seed, inv.gamma};
}

haar_status haar_edit_create(const haar_model* model, const haar_latent* input, const haar_embedding* target,
                             const haar_edit_config* cfg, haar_progress_fn progress, void* user, haar_edit** out) {
    HAAR_CHECK_NULL(model);
    HAAR_CHECK_NULL(input);
    HAAR_CHECK_NULL(target);
    HAAR_CHECK_NULL(cfg);
    HAAR_CHECK_NULL(out);
    return guarded([&] {
        haar::InversionConfig inv;
        inv.steps = cfg->inversion_steps;
        inv.lr = cfg->inversion_lr;
        inv.panel = cfg->panel;
        inv.seed = cfg->seed;
        inv.gamma = cfg->gamma;
        haar::FinetuneConfig ft;
        ft.steps = cfg->finetune_steps;
        ft.lr = cfg->finetune_lr;
        ft.panel = cfg->panel;
        ft.seed = cfg->seed + 1;
        ft.gamma = cfg->gamma;
        haar::StepProgress inv_cb, ft_cb;
        if (progress) {
            inv_cb = [&](int step, double loss) { progress(step, loss, user); };
            ft_cb = [&](int step, double loss) { progress(cfg->inversion_steps + step, loss, user); };
        }
        *out = new haar_edit{haar::create_edit_session(model->params, input->map, target->e, inv, ft, inv_cb, ft_cb)};
    });
}

haar_status haar_edit_losses(const haar_edit* edit, int which, double* initial, double* best) {
    HAAR_CHECK_NULL(edit);
    return guarded([&] {
        haar::require(which == 0 || which == 1, haar::ErrorCode::InvalidArgument, "edit losses: which must be 0 or 1");
        const auto& r = which == 0 ? edit->session.inversion : edit->session.finetune;
        haar::require(!r.loss.empty(), haar::ErrorCode::Internal, "edit losses: no record");
        if (initial) *initial = r.loss.front();
        if (best) *best = r.best_loss;
    });
}

haar_status haar_edit_sample(const haar_edit* edit, double eta, const haar_sample_options* opt, uint64_t seed,
                             haar_latent** out) {
    HAAR_CHECK_NULL(edit);
    HAAR_CHECK_NULL(out);
    return guarded([&] { *out = new haar_latent{haar::edit(edit->session, eta, sample_options(opt), seed)}; });
}

void haar_edit_free(haar_edit* edit) { delete edit; }

}  // extern "C"
