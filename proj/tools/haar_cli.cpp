// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every operation goes through the C API.

#include <haar/haar.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kUsageExit = 2;
constexpr int kStatusExitBase = 10;

struct Failure {
    int exit_code;
    std::string code;
    std::string message;
};

[[noreturn]] void usage_error(const std::string& msg) { throw Failure{kUsageExit, "USAGE", msg}; }

void check(haar_status s) {
    if (s != HAAR_OK) throw Failure{kStatusExitBase + static_cast<int>(s), haar_status_name(s), haar_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Grid = std::unique_ptr<haar_grid, Deleter<haar_grid, haar_grid_free>>;
using Hair = std::unique_ptr<haar_hair, Deleter<haar_hair, haar_hair_free>>;
using Latent = std::unique_ptr<haar_latent, Deleter<haar_latent, haar_latent_free>>;
using Codec = std::unique_ptr<haar_codec, Deleter<haar_codec, haar_codec_free>>;
using Model = std::unique_ptr<haar_model, Deleter<haar_model, haar_model_free>>;
using Embedding = std::unique_ptr<haar_embedding, Deleter<haar_embedding, haar_embedding_free>>;
using Edit = std::unique_ptr<haar_edit, Deleter<haar_edit, haar_edit_free>>;

template <class Handle, class F>
Handle make(F&& f) {
    typename Handle::pointer raw = nullptr;
    check(f(&raw));
    return Handle(raw);
}

bool parse_switch(const std::string& v, const char* name) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    usage_error(std::string("--") + name + " expects on|off, got '" + v + "'");
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

struct Progress {
    std::string label;
    int total;
    int every;
};

void report_progress(int step, double loss, void* user) {
    auto* p = static_cast<Progress*>(user);
    if (step % p->every == 0 || step + 1 == p->total)
        std::fprintf(stderr, "%s %d/%d loss=%.6g\n", p->label.c_str(), step + 1, p->total, loss);
}

Progress progress_for(const std::string& label, int total) { return {label, total, std::max(1, total / 20)}; }

std::string file_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure{kStatusExitBase + HAAR_ERR_IO, "IO", "cannot open '" + path + "'"};
    char m[4] = {};
    in.read(m, 4);
    return std::string(m, static_cast<size_t>(in.gcount()));
}

Grid make_grid(const std::string& scalp, int size) {
    if (scalp.empty()) return make<Grid>([&](haar_grid** g) { return haar_grid_hemisphere(size, size, g); });
    return make<Grid>([&](haar_grid** g) { return haar_grid_from_obj(scalp.c_str(), size, size, g); });
}

Embedding prompt_or_embedding(const std::string& prompt, const std::string& embedding, int tokens, int dim) {
    if (!embedding.empty()) return make<Embedding>([&](haar_embedding** e) { return haar_embedding_read(embedding.c_str(), e); });
    return make<Embedding>([&](haar_embedding** e) { return haar_embedding_from_text(prompt.c_str(), tokens, dim, e); });
}

std::vector<std::string> read_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Failure{kStatusExitBase + HAAR_ERR_IO, "IO", "cannot open '" + path + "'"};
    std::vector<std::string> out;
    std::string line;
    const fs::path base = fs::path(path).parent_path();
    while (std::getline(in, line)) {
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        auto e = line.find_last_not_of(" \t\r");
        fs::path p = line.substr(b, e - b + 1);
        out.push_back(p.is_absolute() ? p.string() : (base / p).string());
    }
    return out;
}

// key=value config lines become `--key=value` unless the flag is already given.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw Failure{kStatusExitBase + HAAR_ERR_IO, "IO", "cannot open config '" + path + "'"};
    std::string line;
    int lineno = 0;
    std::vector<std::string> extra;
    while (std::getline(in, line)) {
        ++lineno;
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) usage_error("config " + path + ":" + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            auto x = s.find_first_not_of(" \t\r");
            auto y = s.find_last_not_of(" \t\r");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty() || key == "config") usage_error("config " + path + ":" + std::to_string(lineno) + ": bad key");
        bool given = false;
        for (const auto& a : args) given = given || a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
        if (!given) extra.push_back("--" + key + "=" + value);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

void say(const std::string& s) { std::printf("%s\n", s.c_str()); }

std::vector<int> level_list(const std::vector<int>& v, const char* name) {
    if (v.empty() || v.size() > HAAR_MAX_LEVELS) usage_error(std::string("--") + name + " needs 1 to 8 entries");
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"haar: text-conditioned strand hair generation toolkit"};
    app.fallthrough();
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "key=value file supplying defaults for any flag");
    app.set_version_flag("--version", haar_version());

    // dataset build
    auto* dataset = app.add_subcommand("dataset", "Dataset preparation");
    dataset->require_subcommand(1);
    auto* build = dataset->add_subcommand("build", "Import, align and augment hairstyles into HAAR maps");
    std::vector<std::string> db_inputs;
    int db_synthetic = 0, db_grid = 32, db_points = 100, db_variants = 1;
    uint64_t db_seed = 0;
    std::string db_scalp, db_out, db_augment = "on";
    build->add_option("--input", db_inputs, "cyHair files")->delimiter(',');
    build->add_option("--synthetic", db_synthetic, "Procedural hairstyles to add");
    build->add_option("--grid", db_grid, "Guide grid size");
    build->add_option("--scalp", db_scalp, "Scalp mesh (OBJ with UVs); default unit hemisphere");
    build->add_option("--points", db_points, "Points per strand");
    build->add_option("--variants", db_variants, "Augmented variants per hairstyle");
    build->add_option("--augment", db_augment, "on|off");
    build->add_option("--seed", db_seed);
    build->add_option("--out-dir", db_out)->required();

    // train-vae
    auto* vae = app.add_subcommand("train-vae", "Train the strand codec");
    std::vector<std::string> tv_data;
    std::string tv_manifest, tv_out;
    int tv_synthetic = 0;
    haar_codec_config tv_cfg;
    haar_codec_config_default(&tv_cfg);
    vae->add_option("--data", tv_data, "HAAR files")->delimiter(',');
    vae->add_option("--manifest", tv_manifest, "File listing HAAR paths");
    vae->add_option("--synthetic", tv_synthetic, "Procedural strands to add");
    vae->add_option("--epochs", tv_cfg.epochs);
    vae->add_option("--batch", tv_cfg.batch);
    vae->add_option("--lr", tv_cfg.lr);
    vae->add_option("--latent", tv_cfg.latent);
    vae->add_option("--hidden", tv_cfg.hidden);
    vae->add_option("--beta", tv_cfg.beta);
    vae->add_option("--warmup", tv_cfg.warmup);
    vae->add_option("--points", tv_cfg.points);
    vae->add_option("--seed", tv_cfg.seed);
    vae->add_option("--out", tv_out)->required();

    // encode / decode
    auto* enc = app.add_subcommand("encode", "Encode a HAAR map into a latent map");
    std::string en_codec, en_in, en_out, en_sample = "off";
    uint64_t en_seed = 0;
    enc->add_option("--codec", en_codec)->required();
    enc->add_option("--input", en_in)->required();
    enc->add_option("--out", en_out)->required();
    enc->add_option("--sample", en_sample, "on|off: draw from the posterior instead of taking its mean");
    enc->add_option("--seed", en_seed);

    auto* dec = app.add_subcommand("decode", "Decode a latent map into a HAAR map");
    std::string de_codec, de_in, de_out;
    dec->add_option("--codec", de_codec)->required();
    dec->add_option("--input", de_in)->required();
    dec->add_option("--out", de_out)->required();

    // embed
    auto* emb = app.add_subcommand("embed", "Write a prompt embedding (or the average of several)");
    std::vector<std::string> em_prompts, em_embs;
    int em_tokens = 16, em_dim = 64;
    std::string em_out;
    emb->add_option("--prompt", em_prompts);
    emb->add_option("--embedding", em_embs)->delimiter(',');
    emb->add_option("--tokens", em_tokens);
    emb->add_option("--dim", em_dim);
    emb->add_option("--out", em_out)->required();

    // train-diff
    auto* tdiff = app.add_subcommand("train-diff", "Train the latent denoiser");
    std::string td_manifest, td_out;
    haar_unet_config td_unet;
    haar_unet_config_default(&td_unet);
    haar_train_config td_cfg;
    haar_train_config_default(&td_cfg);
    std::vector<int> td_mult(td_unet.channel_mult, td_unet.channel_mult + td_unet.n_channel_mult);
    std::vector<int> td_attn(td_unet.attention_resolutions, td_unet.attention_resolutions + td_unet.n_attention);
    int td_tokens = 16;
    tdiff->add_option("--manifest", td_manifest, "Lines of 'latent.hlat | prompt' or 'latent.hlat | @embedding.hemb'")
        ->required();
    tdiff->add_option("--model-channels", td_unet.model_channels);
    tdiff->add_option("--channel-mult", td_mult)->delimiter(',');
    tdiff->add_option("--res-blocks", td_unet.num_res_blocks);
    tdiff->add_option("--heads", td_unet.num_heads);
    tdiff->add_option("--attention", td_attn)->delimiter(',');
    tdiff->add_option("--norm-groups", td_unet.norm_groups);
    tdiff->add_option("--tokens", td_tokens, "Context length for text prompts");
    tdiff->add_option("--context-dim", td_unet.context_dim);
    tdiff->add_option("--iterations", td_cfg.iterations);
    tdiff->add_option("--batch", td_cfg.batch);
    tdiff->add_option("--lr", td_cfg.lr);
    tdiff->add_option("--weight-decay", td_cfg.weight_decay);
    tdiff->add_option("--ema-decay", td_cfg.ema_decay);
    tdiff->add_option("--null-prob", td_cfg.null_prob);
    tdiff->add_option("--gamma", td_cfg.gamma);
    tdiff->add_option("--stride", td_cfg.stride);
    tdiff->add_option("--sigma-data", td_cfg.sigma_data, "<= 0 estimates it from the data");
    tdiff->add_option("--seed", td_cfg.seed);
    tdiff->add_option("--out", td_out)->required();

    // sampling options shared by generate / edit / interp
    haar_sample_options so;
    haar_sample_options_default(&so);
    std::string ema_flag = "on";
    auto add_sampling = [&](CLI::App* sc) {
        sc->add_option("--steps", so.steps);
        sc->add_option("--guidance", so.guidance);
        sc->add_option("--ema", ema_flag, "on|off: sample with the EMA weights");
    };

    // generate
    auto* gen = app.add_subcommand("generate", "Sample a guide latent map");
    std::string ge_model, ge_prompt, ge_emb, ge_out;
    uint64_t ge_seed = 0;
    gen->add_option("--model", ge_model)->required();
    auto* ge_p = gen->add_option("--prompt", ge_prompt);
    auto* ge_e = gen->add_option("--embedding", ge_emb);
    ge_p->excludes(ge_e);
    gen->add_option("--seed", ge_seed);
    add_sampling(gen);
    gen->add_option("--out", ge_out)->required();

    // upsample
    auto* up = app.add_subcommand("upsample", "Upsample a guide latent map");
    std::string up_codec, up_in, up_out, up_noise = "off";
    int up_target = 512;
    uint64_t up_seed = 0;
    up->add_option("--codec", up_codec)->required();
    up->add_option("--input", up_in)->required();
    up->add_option("--target", up_target, "Target resolution");
    up->add_option("--noise", up_noise, "on|off");
    up->add_option("--seed", up_seed);
    up->add_option("--out", up_out)->required();

    // export
    auto* exp = app.add_subcommand("export", "Export world-space strands");
    std::string ex_format = "obj", ex_in, ex_codec, ex_scalp, ex_out;
    exp->add_option("--format", ex_format, "obj");
    exp->add_option("--input", ex_in, "HAAR map or latent map")->required();
    exp->add_option("--codec", ex_codec, "Needed for latent input");
    exp->add_option("--scalp", ex_scalp, "Scalp mesh (OBJ with UVs); default unit hemisphere");
    exp->add_option("--out", ex_out)->required();

    // metrics
    auto* met = app.add_subcommand("metrics", "MMD, COV and 1-NNA between latent map sets");
    std::vector<std::string> me_gen, me_ref;
    std::string me_out;
    met->add_option("--generated", me_gen)->delimiter(',')->required();
    met->add_option("--reference", me_ref)->delimiter(',')->required();
    met->add_option("--out", me_out, "CSV output");

    // edit
    auto* ed = app.add_subcommand("edit", "Text-driven edit of an existing latent map");
    std::string ed_model, ed_in, ed_prompt, ed_emb, ed_out;
    double ed_eta = 0.5;
    uint64_t ed_seed = 0;
    haar_edit_config ed_cfg;
    haar_edit_config_default(&ed_cfg);
    ed->add_option("--model", ed_model)->required();
    ed->add_option("--input", ed_in)->required();
    auto* ed_p = ed->add_option("--prompt", ed_prompt);
    auto* ed_e = ed->add_option("--embedding", ed_emb);
    ed_p->excludes(ed_e);
    ed->add_option("--eta", ed_eta);
    ed->add_option("--seed", ed_seed);
    ed->add_option("--inversion-steps", ed_cfg.inversion_steps);
    ed->add_option("--inversion-lr", ed_cfg.inversion_lr);
    ed->add_option("--finetune-steps", ed_cfg.finetune_steps);
    ed->add_option("--finetune-lr", ed_cfg.finetune_lr);
    ed->add_option("--panel", ed_cfg.panel);
    ed->add_option("--edit-seed", ed_cfg.seed);
    add_sampling(ed);
    ed->add_option("--out", ed_out)->required();

    // interp
    auto* it = app.add_subcommand("interp", "Samples along a path between two prompts");
    std::string in_model, in_pa, in_pb, in_ea, in_eb, in_prefix;
    std::vector<double> in_alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    uint64_t in_seed = 0;
    it->add_option("--model", in_model)->required();
    it->add_option("--prompt-a", in_pa);
    it->add_option("--prompt-b", in_pb);
    it->add_option("--embedding-a", in_ea);
    it->add_option("--embedding-b", in_eb);
    it->add_option("--alphas", in_alphas)->delimiter(',');
    it->add_option("--seed", in_seed);
    add_sampling(it);
    it->add_option("--out-prefix", in_prefix)->required();

    try {
        auto args = expand_config(argc, argv);
        std::vector<std::string> rev(args.rbegin(), args.rend());
        try {
            app.parse(std::move(rev));
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) return app.exit(e);
            usage_error(e.what());
        }
        so.use_ema = parse_switch(ema_flag, "ema");

        if (build->parsed()) {
            if (db_inputs.empty() && db_synthetic <= 0) usage_error("dataset build needs --input or --synthetic");
            if (db_variants < 1) usage_error("--variants must be >= 1");
            haar_augment_ranges ranges;
            haar_augment_ranges_default(&ranges);
            if (!parse_switch(db_augment, "augment")) ranges = {1, 1, 1, 1, 0, 0, 0, 0};
            auto grid = make_grid(db_scalp, db_grid);
            std::vector<Hair> base;
            for (const auto& f : db_inputs)
                base.push_back(make<Hair>([&](haar_hair** h) {
                    return haar_hair_import_cyhair(f.c_str(), grid.get(), db_points, h);
                }));
            for (int k = 0; k < db_synthetic; ++k)
                base.push_back(make<Hair>([&](haar_hair** h) {
                    return haar_hair_synthetic(grid.get(), db_seed * 1000003ULL + static_cast<uint64_t>(k), db_points,
                                               h);
                }));
            std::error_code ec;
            fs::create_directories(db_out, ec);
            if (ec) throw Failure{kStatusExitBase + HAAR_ERR_IO, "IO", "cannot create '" + db_out + "': " + ec.message()};
            std::string manifest;
            size_t index = 0;
            for (size_t b = 0; b < base.size(); ++b)
                for (size_t v = 0; v < static_cast<size_t>(db_variants); ++v, ++index) {
                    auto h = make<Hair>([&](haar_hair** o) {
                        return haar_hair_augment(base[b].get(), &ranges, db_seed, b, v,
                                                 static_cast<size_t>(db_variants), o);
                    });
                    char name[32];
                    std::snprintf(name, sizeof name, "hair_%06zu.haar", index);
                    check(haar_hair_write(h.get(), (fs::path(db_out) / name).string().c_str()));
                    manifest += std::string(name) + "\n";
                }
            const auto listing = fs::path(db_out) / "manifest.txt";
            const auto tmp = fs::path(listing.string() + ".tmp");
            if (!(std::ofstream(tmp, std::ios::binary) << manifest))
                throw Failure{kStatusExitBase + HAAR_ERR_IO, "IO", "cannot write '" + tmp.string() + "'"};
            fs::rename(tmp, listing);
            say("maps=" + std::to_string(index) + " dir=" + db_out);
        } else if (vae->parsed()) {
            auto files = tv_data;
            if (!tv_manifest.empty()) {
                auto more = read_list(tv_manifest);
                files.insert(files.end(), more.begin(), more.end());
            }
            if (files.empty() && tv_synthetic <= 0) usage_error("train-vae needs --data, --manifest or --synthetic");
            std::vector<Hair> maps;
            for (const auto& f : files) maps.push_back(make<Hair>([&](haar_hair** h) { return haar_hair_read(f.c_str(), h); }));
            std::vector<const haar_hair*> ptrs;
            for (auto& m : maps) ptrs.push_back(m.get());
            auto prog = progress_for("train-vae epoch", tv_cfg.epochs);
            auto codec = make<Codec>([&](haar_codec** c) {
                return haar_codec_train(ptrs.data(), ptrs.size(), tv_synthetic, &tv_cfg, report_progress, &prog, c);
            });
            check(haar_codec_write(codec.get(), tv_out.c_str()));
            say("wrote " + tv_out);
        } else if (enc->parsed()) {
            const bool sample = parse_switch(en_sample, "sample");
            auto codec = make<Codec>([&](haar_codec** c) { return haar_codec_read(en_codec.c_str(), c); });
            auto hair = make<Hair>([&](haar_hair** h) { return haar_hair_read(en_in.c_str(), h); });
            auto z = make<Latent>([&](haar_latent** o) {
                return haar_codec_encode(codec.get(), hair.get(), sample, en_seed, o);
            });
            check(haar_latent_write(z.get(), en_out.c_str()));
            say("wrote " + en_out);
        } else if (dec->parsed()) {
            auto codec = make<Codec>([&](haar_codec** c) { return haar_codec_read(de_codec.c_str(), c); });
            auto z = make<Latent>([&](haar_latent** o) { return haar_latent_read(de_in.c_str(), o); });
            auto hair = make<Hair>([&](haar_hair** h) { return haar_codec_decode(codec.get(), z.get(), h); });
            check(haar_hair_write(hair.get(), de_out.c_str()));
            say("wrote " + de_out);
        } else if (emb->parsed()) {
            std::vector<Embedding> list;
            for (const auto& p : em_prompts) list.push_back(prompt_or_embedding(p, "", em_tokens, em_dim));
            for (const auto& f : em_embs) list.push_back(prompt_or_embedding("", f, em_tokens, em_dim));
            if (list.empty()) usage_error("embed needs --prompt or --embedding");
            std::vector<const haar_embedding*> ptrs;
            for (auto& e : list) ptrs.push_back(e.get());
            auto avg = make<Embedding>([&](haar_embedding** o) { return haar_embedding_average(ptrs.data(), ptrs.size(), o); });
            check(haar_embedding_write(avg.get(), em_out.c_str()));
            say("wrote " + em_out);
        } else if (tdiff->parsed()) {
            std::ifstream in(td_manifest);
            if (!in) throw Failure{kStatusExitBase + HAAR_ERR_IO, "IO", "cannot open '" + td_manifest + "'"};
            const fs::path base = fs::path(td_manifest).parent_path();
            auto resolve = [&](const std::string& p) {
                fs::path q = p;
                return q.is_absolute() ? q.string() : (base / q).string();
            };
            std::vector<Latent> maps;
            std::vector<Embedding> ctx;
            std::string line;
            int lineno = 0;
            while (std::getline(in, line)) {
                ++lineno;
                auto b = line.find_first_not_of(" \t\r");
                if (b == std::string::npos || line[b] == '#') continue;
                auto bar = line.find('|');
                if (bar == std::string::npos)
                    usage_error("manifest line " + std::to_string(lineno) + ": expected 'latent | prompt'");
                auto trim = [](std::string s) {
                    auto x = s.find_first_not_of(" \t\r");
                    auto y = s.find_last_not_of(" \t\r");
                    return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
                };
                std::string lat = trim(line.substr(0, bar)), cond = trim(line.substr(bar + 1));
                maps.push_back(make<Latent>([&](haar_latent** o) { return haar_latent_read(resolve(lat).c_str(), o); }));
                if (!cond.empty() && cond[0] == '@')
                    ctx.push_back(prompt_or_embedding("", resolve(cond.substr(1)), td_tokens, td_unet.context_dim));
                else
                    ctx.push_back(prompt_or_embedding(cond, "", td_tokens, td_unet.context_dim));
            }
            if (maps.empty()) usage_error("manifest lists no training maps");
            int w = 0, h = 0, ch = 0;
            check(haar_latent_info(maps[0].get(), &w, &h, &ch, nullptr));
            if (w != h) usage_error("training maps must be square");
            td_unet.image_size = w;
            td_unet.in_channels = ch;
            check(haar_embedding_info(ctx[0].get(), nullptr, &td_unet.context_dim));
            auto mult = level_list(td_mult, "channel-mult");
            td_unet.n_channel_mult = static_cast<int>(mult.size());
            std::copy(mult.begin(), mult.end(), td_unet.channel_mult);
            if (td_attn.size() > HAAR_MAX_LEVELS) usage_error("--attention accepts at most 8 entries");
            td_unet.n_attention = static_cast<int>(td_attn.size());
            std::copy(td_attn.begin(), td_attn.end(), td_unet.attention_resolutions);
            std::vector<const haar_latent*> mp;
            std::vector<const haar_embedding*> cp;
            for (size_t k = 0; k < maps.size(); ++k) {
                mp.push_back(maps[k].get());
                cp.push_back(ctx[k].get());
            }
            auto prog = progress_for("train-diff iteration", td_cfg.iterations);
            auto model = make<Model>([&](haar_model** o) {
                return haar_model_train(mp.data(), cp.data(), mp.size(), &td_unet, &td_cfg, report_progress, &prog, o);
            });
            check(haar_model_write(model.get(), td_out.c_str()));
            say("wrote " + td_out);
        } else if (gen->parsed()) {
            auto model = make<Model>([&](haar_model** o) { return haar_model_read(ge_model.c_str(), o); });
            haar_unet_config cfg;
            check(haar_model_info(model.get(), &cfg, nullptr, nullptr));
            Embedding ctx;
            if (!ge_prompt.empty() || !ge_emb.empty()) ctx = prompt_or_embedding(ge_prompt, ge_emb, 16, cfg.context_dim);
            auto z = make<Latent>([&](haar_latent** o) { return haar_generate(model.get(), ctx.get(), &so, ge_seed, o); });
            check(haar_latent_write(z.get(), ge_out.c_str()));
            say("wrote " + ge_out);
        } else if (up->parsed()) {
            const bool noise = parse_switch(up_noise, "noise");
            auto codec = make<Codec>([&](haar_codec** c) { return haar_codec_read(up_codec.c_str(), c); });
            auto z = make<Latent>([&](haar_latent** o) { return haar_latent_read(up_in.c_str(), o); });
            auto big = make<Latent>([&](haar_latent** o) {
                return haar_latent_upsample(z.get(), codec.get(), up_target, up_target, noise, up_seed, o);
            });
            check(haar_latent_write(big.get(), up_out.c_str()));
            say("wrote " + up_out);
        } else if (exp->parsed()) {
            if (ex_format != "obj") usage_error("unsupported export format '" + ex_format + "'");
            Hair hair;
            if (file_magic(ex_in) == "HLAT") {
                if (ex_codec.empty()) usage_error("latent input needs --codec");
                auto codec = make<Codec>([&](haar_codec** c) { return haar_codec_read(ex_codec.c_str(), c); });
                auto z = make<Latent>([&](haar_latent** o) { return haar_latent_read(ex_in.c_str(), o); });
                hair = make<Hair>([&](haar_hair** h) { return haar_codec_decode(codec.get(), z.get(), h); });
            } else {
                hair = make<Hair>([&](haar_hair** h) { return haar_hair_read(ex_in.c_str(), h); });
            }
            int w = 0, h = 0;
            check(haar_hair_info(hair.get(), &w, &h, nullptr, nullptr));
            if (w != h) usage_error("export needs a square map");
            auto grid = make_grid(ex_scalp, w);
            int64_t strands = 0, dropped = 0;
            hair = make<Hair>([&](haar_hair** o) { return haar_hair_restrict(hair.get(), grid.get(), o, &dropped); });
            check(haar_hair_info(hair.get(), nullptr, nullptr, nullptr, &strands));
            check(haar_hair_export_obj(hair.get(), grid.get(), ex_out.c_str()));
            say("wrote " + ex_out + " strands=" + std::to_string(strands) + " dropped=" + std::to_string(dropped));
        } else if (met->parsed()) {
            auto load = [](const std::vector<std::string>& files) {
                std::vector<Latent> v;
                for (const auto& f : files) v.push_back(make<Latent>([&](haar_latent** o) { return haar_latent_read(f.c_str(), o); }));
                return v;
            };
            auto g = load(me_gen), r = load(me_ref);
            std::vector<const haar_latent*> gp, rp;
            for (auto& x : g) gp.push_back(x.get());
            for (auto& x : r) rp.push_back(x.get());
            haar_metric_report rep;
            check(haar_metrics(gp.data(), gp.size(), rp.data(), rp.size(), &rep));
            char buf[160];
            if (rep.has_one_nna)
                std::snprintf(buf, sizeof buf, "mmd=%.17g cov=%.17g 1-nna=%.17g", rep.mmd, rep.cov, rep.one_nna);
            else
                std::snprintf(buf, sizeof buf, "mmd=%.17g cov=%.17g", rep.mmd, rep.cov);
            say(buf);
            if (!me_out.empty()) check(haar_metrics_write_csv(&rep, me_out.c_str()));
        } else if (ed->parsed()) {
            if (ed_prompt.empty() && ed_emb.empty()) usage_error("edit needs --prompt or --embedding");
            auto model = make<Model>([&](haar_model** o) { return haar_model_read(ed_model.c_str(), o); });
            haar_unet_config cfg;
            check(haar_model_info(model.get(), &cfg, nullptr, nullptr));
            auto z = make<Latent>([&](haar_latent** o) { return haar_latent_read(ed_in.c_str(), o); });
            auto target = prompt_or_embedding(ed_prompt, ed_emb, 16, cfg.context_dim);
            auto prog = progress_for("edit step", ed_cfg.inversion_steps + ed_cfg.finetune_steps + 2);
            auto session = make<Edit>([&](haar_edit** o) {
                return haar_edit_create(model.get(), z.get(), target.get(), &ed_cfg, report_progress, &prog, o);
            });
            double i0 = 0, ib = 0, f0 = 0, fb = 0;
            check(haar_edit_losses(session.get(), 0, &i0, &ib));
            check(haar_edit_losses(session.get(), 1, &f0, &fb));
            std::fprintf(stderr, "inversion loss %.6g -> %.6g, finetune loss %.6g -> %.6g\n", i0, ib, f0, fb);
            auto out = make<Latent>([&](haar_latent** o) { return haar_edit_sample(session.get(), ed_eta, &so, ed_seed, o); });
            check(haar_latent_write(out.get(), ed_out.c_str()));
            say("wrote " + ed_out);
        } else if (it->parsed()) {
            if ((in_pa.empty() && in_ea.empty()) || (in_pb.empty() && in_eb.empty()))
                usage_error("interp needs --prompt-a/--embedding-a and --prompt-b/--embedding-b");
            auto model = make<Model>([&](haar_model** o) { return haar_model_read(in_model.c_str(), o); });
            haar_unet_config cfg;
            check(haar_model_info(model.get(), &cfg, nullptr, nullptr));
            auto a = prompt_or_embedding(in_pa, in_ea, 16, cfg.context_dim);
            auto b = prompt_or_embedding(in_pb, in_eb, 16, cfg.context_dim);
            std::vector<haar_latent*> raw(in_alphas.size(), nullptr);
            check(haar_interpolate(model.get(), a.get(), b.get(), in_alphas.data(), in_alphas.size(), &so, in_seed,
                                   raw.data()));
            std::vector<Latent> outs;
            for (auto* p : raw) outs.emplace_back(p);
            for (size_t k = 0; k < outs.size(); ++k) {
                char suffix[32];
                std::snprintf(suffix, sizeof suffix, "_%02zu.hlat", k);
                std::string path = in_prefix + suffix;
                check(haar_latent_write(outs[k].get(), path.c_str()));
                say("wrote " + path);
            }
        }
    } catch (const Failure& f) {
        std::fprintf(stderr, "error: code=%s message=\"%s\"\n", f.code.c_str(), one_line(f.message).c_str());
        return f.exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: code=INTERNAL message=\"%s\"\n", one_line(e.what()).c_str());
        return kStatusExitBase + HAAR_ERR_INTERNAL;
    }
    return 0;
}
