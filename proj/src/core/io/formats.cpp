// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "formats.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "binio.hpp"

namespace haar::io {

namespace {

constexpr uint32_t kVersion = 1;

void put_mask(ByteWriter& w, const std::vector<uint8_t>& mask) {
    std::vector<uint8_t> bits((mask.size() + 7) / 8, 0);
    for (size_t t = 0; t < mask.size(); ++t)
        if (mask[t]) bits[t / 8] = static_cast<uint8_t>(bits[t / 8] | (1u << (t % 8)));
    w.bytes(bits.data(), bits.size());
}

std::vector<uint8_t> get_mask(ByteReader& r, size_t texels, size_t* count) {
    std::vector<uint8_t> bits((texels + 7) / 8);
    size_t at = r.offset();
    r.bytes(bits.data(), bits.size());
    std::vector<uint8_t> mask(texels);
    *count = 0;
    for (size_t t = 0; t < texels; ++t) {
        mask[t] = (bits[t / 8] >> (t % 8)) & 1u;
        *count += mask[t];
    }
    for (size_t t = texels; t < bits.size() * 8; ++t)
        if ((bits[t / 8] >> (t % 8)) & 1u)
            fail(ErrorCode::Format, "mask padding bit set at byte offset " + std::to_string(at + t / 8));
    return mask;
}

uint32_t dim_u32(ByteReader& r, const char* what, uint32_t max_value) {
    uint32_t v = r.u32();
    if (v == 0 || v > max_value) r.error(ErrorCode::Format, std::string("invalid ") + what + " " + std::to_string(v));
    return v;
}

void need_floats(ByteReader& r, uint64_t n) {
    if (n > r.remaining() / 4) r.error(ErrorCode::Format, "truncated data (" + std::to_string(n) + " floats declared)");
}

void put_tensors(ByteWriter& w, const nn::ParamSet& ps) {
    w.u32(static_cast<uint32_t>(ps.size()));
    for (size_t i = 0; i < ps.size(); ++i) {
        w.u32(static_cast<uint32_t>(ps.names[i].size()));
        w.bytes(reinterpret_cast<const uint8_t*>(ps.names[i].data()), ps.names[i].size());
        const auto& t = ps.tensors[i];
        w.u32(static_cast<uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u32(static_cast<uint32_t>(d));
        w.f32s(t.data.data(), t.data.size());
    }
}

nn::ParamSet get_tensors(ByteReader& r) {
    nn::ParamSet ps;
    uint32_t count = r.u32();
    if (count > r.remaining() / 8) r.error(ErrorCode::Format, "implausible tensor count " + std::to_string(count));
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t len = r.u32();
        if (len > 4096) r.error(ErrorCode::Format, "tensor name too long");
        std::string name(len, '\0');
        r.bytes(reinterpret_cast<uint8_t*>(name.data()), len);
        uint32_t rank = r.u32();
        if (rank > 8) r.error(ErrorCode::Format, "tensor rank " + std::to_string(rank) + " too large");
        ad::Shape shape;
        uint64_t n = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            uint32_t d = r.u32();
            shape.push_back(d);
            n *= d;
            need_floats(r, n);
        }
        need_floats(r, n);
        ad::Tensor<float> t(shape);
        r.f32s(t.data.data(), t.data.size());
        ps.add(std::move(name), std::move(t));
    }
    return ps;
}

void get_tensor_data(ByteReader& r, nn::ParamSet& like) {
    for (auto& t : like.tensors) {
        need_floats(r, t.data.size());
        r.f32s(t.data.data(), t.data.size());
    }
}

}  // namespace

std::vector<uint8_t> encode_haar(const HairMap& m) {
    ByteWriter w;
    w.magic("HAAR");
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(m.width()));
    w.u32(static_cast<uint32_t>(m.height()));
    w.u32(static_cast<uint32_t>(m.points()));
    w.u32(static_cast<uint32_t>(m.strand_count()));
    put_mask(w, m.mask());
    w.f32s(m.coords().data(), m.coords().size());
    w.crc();
    return w.data();
}

HairMap decode_haar(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "HAAR");
    r.verify_crc();
    r.magic("HAAR");
    uint32_t v = r.u32();
    if (v != kVersion) r.error(ErrorCode::Format, "unsupported version " + std::to_string(v));
    uint32_t w = dim_u32(r, "width", 1u << 16), h = dim_u32(r, "height", 1u << 16);
    uint32_t l = dim_u32(r, "point count", 1u << 20);
    if (l < 2) r.error(ErrorCode::Format, "strands need at least 2 points");
    uint32_t count = r.u32();
    size_t valid = 0;
    auto mask = get_mask(r, static_cast<size_t>(w) * h, &valid);
    if (valid != count)
        r.error(ErrorCode::Format, "strand count " + std::to_string(count) + " does not match mask (" + std::to_string(valid) + ")");
    need_floats(r, static_cast<uint64_t>(count) * l * 3);
    HairMap m(static_cast<int>(w), static_cast<int>(h), static_cast<int>(l), mask);
    r.f32s(m.coords().data(), m.coords().size());
    r.expect_end();
    return m;
}

void write_haar(const std::string& path, const HairMap& m) { write_file_atomic(path, encode_haar(m)); }
HairMap read_haar(const std::string& path) { return decode_haar(read_file(path)); }

std::vector<uint8_t> encode_hlat(const LatentMap& m) {
    ByteWriter w;
    w.magic("HLAT");
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(m.width()));
    w.u32(static_cast<uint32_t>(m.height()));
    w.u32(static_cast<uint32_t>(m.channels()));
    w.u32(static_cast<uint32_t>(m.valid_count()));
    put_mask(w, m.mask());
    for (int64_t t = 0; t < m.texels(); ++t)
        if (m.has(t))
            for (int c = 0; c < m.channels(); ++c) w.f32(m.at(c, t));
    w.crc();
    return w.data();
}

LatentMap decode_hlat(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "HLAT");
    r.verify_crc();
    r.magic("HLAT");
    uint32_t v = r.u32();
    if (v != kVersion) r.error(ErrorCode::Format, "unsupported version " + std::to_string(v));
    uint32_t w = dim_u32(r, "width", 1u << 16), h = dim_u32(r, "height", 1u << 16);
    uint32_t ch = dim_u32(r, "channel count", 1u << 16);
    uint32_t count = r.u32();
    size_t valid = 0;
    auto mask = get_mask(r, static_cast<size_t>(w) * h, &valid);
    if (valid != count)
        r.error(ErrorCode::Format, "valid count " + std::to_string(count) + " does not match mask (" + std::to_string(valid) + ")");
    need_floats(r, static_cast<uint64_t>(count) * ch);
    LatentMap m(static_cast<int>(w), static_cast<int>(h), static_cast<int>(ch), mask);
    for (int64_t t = 0; t < m.texels(); ++t)
        if (m.has(t))
            for (int c = 0; c < m.channels(); ++c) m.at(c, t) = r.f32();
    r.expect_end();
    return m;
}

void write_hlat(const std::string& path, const LatentMap& m) { write_file_atomic(path, encode_hlat(m)); }
LatentMap read_hlat(const std::string& path) { return decode_hlat(read_file(path)); }

std::vector<uint8_t> encode_hemb(const PromptEmbedding& e) {
    ByteWriter w;
    w.magic("HEMB");
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(e.tokens));
    w.u32(static_cast<uint32_t>(e.dim));
    w.f32s(e.data.data(), e.data.size());
    w.crc();
    return w.data();
}

PromptEmbedding decode_hemb(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "HEMB");
    r.verify_crc();
    r.magic("HEMB");
    uint32_t v = r.u32();
    if (v != kVersion) r.error(ErrorCode::Format, "unsupported version " + std::to_string(v));
    uint32_t t = dim_u32(r, "token count", 1u << 16), d = dim_u32(r, "context width", 1u << 16);
    need_floats(r, static_cast<uint64_t>(t) * d);
    PromptEmbedding e(static_cast<int>(t), static_cast<int>(d), Provenance::External);
    r.f32s(e.data.data(), e.data.size());
    r.expect_end();
    for (size_t i = 0; i < e.data.size(); ++i)
        if (!std::isfinite(e.data[i])) fail(ErrorCode::Format, "HEMB: non-finite value at element " + std::to_string(i));
    if (e.is_zero()) e.provenance = Provenance::Null;
    return e;
}

void write_hemb(const std::string& path, const PromptEmbedding& e) { write_file_atomic(path, encode_hemb(e)); }
PromptEmbedding read_hemb(const std::string& path) { return decode_hemb(read_file(path)); }

std::vector<uint8_t> encode_hvae(const CodecParams& p) {
    ByteWriter w;
    w.magic("HVAE");
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(p.points));
    w.u32(static_cast<uint32_t>(p.latent));
    w.u32(static_cast<uint32_t>(p.hidden));
    w.f64(p.beta);
    w.f32s(p.mean.data(), p.mean.size());
    w.f32s(p.stddev.data(), p.stddev.size());
    put_tensors(w, p.weights);
    w.crc();
    return w.data();
}

CodecParams decode_hvae(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "HVAE");
    r.verify_crc();
    r.magic("HVAE");
    uint32_t v = r.u32();
    if (v != kVersion) r.error(ErrorCode::Format, "unsupported version " + std::to_string(v));
    CodecParams p;
    p.points = static_cast<int>(dim_u32(r, "point count", 1u << 20));
    p.latent = static_cast<int>(dim_u32(r, "latent size", 1u << 16));
    p.hidden = static_cast<int>(dim_u32(r, "hidden width", 1u << 16));
    p.beta = r.f64();
    need_floats(r, 6ull * static_cast<uint64_t>(p.points));
    p.mean.resize(static_cast<size_t>(3 * p.points));
    p.stddev.resize(static_cast<size_t>(3 * p.points));
    r.f32s(p.mean.data(), p.mean.size());
    r.f32s(p.stddev.data(), p.stddev.size());
    p.weights = get_tensors(r);
    r.expect_end();
    CodecConfig cfg;
    cfg.points = p.points;
    cfg.latent = p.latent;
    cfg.hidden = p.hidden;
    auto ref = init_codec(cfg);
    if (ref.weights.names != p.weights.names) fail(ErrorCode::Format, "HVAE: weight tensors do not match the codec layout");
    for (size_t i = 0; i < ref.weights.size(); ++i)
        if (ref.weights.tensors[i].shape != p.weights.tensors[i].shape)
            fail(ErrorCode::Format, "HVAE: tensor '" + p.weights.names[i] + "' has shape " +
                                        ad::shape_str(p.weights.tensors[i].shape) + ", expected " +
                                        ad::shape_str(ref.weights.tensors[i].shape));
    return p;
}

void write_hvae(const std::string& path, const CodecParams& p) { write_file_atomic(path, encode_hvae(p)); }
CodecParams read_hvae(const std::string& path) { return decode_hvae(read_file(path)); }

std::vector<uint8_t> encode_hunt(const DenoiserParams& p) {
    const auto& c = p.config;
    ByteWriter w;
    w.magic("HUNT");
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(c.image_size));
    w.u32(static_cast<uint32_t>(c.in_channels));
    w.u32(static_cast<uint32_t>(c.model_channels));
    w.u32(static_cast<uint32_t>(c.channel_mult.size()));
    for (int m : c.channel_mult) w.u32(static_cast<uint32_t>(m));
    w.u32(static_cast<uint32_t>(c.num_res_blocks));
    w.u32(static_cast<uint32_t>(c.num_heads));
    w.u32(static_cast<uint32_t>(c.attention_resolutions.size()));
    for (int a : c.attention_resolutions) w.u32(static_cast<uint32_t>(a));
    w.u32(static_cast<uint32_t>(c.context_dim));
    w.u32(static_cast<uint32_t>(c.norm_groups));
    w.f64(p.sigma_data);
    w.u32(static_cast<uint32_t>(p.mask.size()));
    if (!p.mask.empty()) put_mask(w, p.mask);
    put_tensors(w, p.weights);
    w.u32(p.has_ema() ? 1 : 0);
    if (p.has_ema())
        for (const auto& t : p.ema.tensors) w.f32s(t.data.data(), t.data.size());
    w.crc();
    return w.data();
}

DenoiserParams decode_hunt(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "HUNT");
    r.verify_crc();
    r.magic("HUNT");
    uint32_t v = r.u32();
    if (v != kVersion) r.error(ErrorCode::Format, "unsupported version " + std::to_string(v));
    DenoiserParams p;
    auto& c = p.config;
    c.image_size = static_cast<int>(dim_u32(r, "image size", 1u << 14));
    c.in_channels = static_cast<int>(dim_u32(r, "input channels", 1u << 14));
    c.model_channels = static_cast<int>(dim_u32(r, "model channels", 1u << 14));
    uint32_t nm = dim_u32(r, "channel_mult length", 16);
    c.channel_mult.clear();
    for (uint32_t i = 0; i < nm; ++i) c.channel_mult.push_back(static_cast<int>(dim_u32(r, "channel_mult entry", 64)));
    c.num_res_blocks = static_cast<int>(dim_u32(r, "num_res_blocks", 64));
    c.num_heads = static_cast<int>(dim_u32(r, "num_heads", 1024));
    uint32_t na = r.u32();
    if (na > 16) r.error(ErrorCode::Format, "too many attention resolutions");
    c.attention_resolutions.clear();
    for (uint32_t i = 0; i < na; ++i) c.attention_resolutions.push_back(static_cast<int>(dim_u32(r, "attention resolution", 1u << 14)));
    c.context_dim = static_cast<int>(dim_u32(r, "context width", 1u << 16));
    c.norm_groups = static_cast<int>(dim_u32(r, "norm groups", 1u << 14));
    p.sigma_data = r.f64();
    if (!(p.sigma_data > 0)) r.error(ErrorCode::Format, "sigma_data must be positive");
    uint32_t mask_len = r.u32();
    if (mask_len != 0) {
        if (mask_len != static_cast<uint32_t>(c.image_size * c.image_size))
            r.error(ErrorCode::Format, "mask length " + std::to_string(mask_len) + " does not match image size");
        size_t valid = 0;
        p.mask = get_mask(r, mask_len, &valid);
    }
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorCode::Format, std::string("HUNT: ") + e.what());
    }
    p.weights = get_tensors(r);
    uint32_t has_ema = r.u32();
    if (has_ema > 1) r.error(ErrorCode::Format, "invalid EMA flag");
    if (has_ema) {
        p.ema = p.weights;
        get_tensor_data(r, p.ema);
    }
    r.expect_end();
    auto layout = unet_layout(c);
    if (layout.size() != p.weights.size())
        fail(ErrorCode::Format, "HUNT: " + std::to_string(p.weights.size()) + " tensors stored, config needs " +
                                    std::to_string(layout.size()));
    for (size_t i = 0; i < layout.size(); ++i)
        if (layout[i].name != p.weights.names[i] || layout[i].shape != p.weights.tensors[i].shape)
            fail(ErrorCode::Format, "HUNT: tensor " + std::to_string(i) + " ('" + p.weights.names[i] +
                                        "') does not match the config layout ('" + layout[i].name + "' " +
                                        ad::shape_str(layout[i].shape) + ")");
    return p;
}

void write_hunt(const std::string& path, const DenoiserParams& p) { write_file_atomic(path, encode_hunt(p)); }
DenoiserParams read_hunt(const std::string& path) { return decode_hunt(read_file(path)); }

std::vector<Strand> decode_cyhair(const std::vector<uint8_t>& bytes, int points) {
    ByteReader r(bytes, "cyHair", false);
    r.magic("HAIR");
    const uint32_t strands = r.u32();
    const uint32_t total = r.u32();
    const uint32_t flags = r.u32();
    const uint32_t default_segments = r.u32();
    for (int i = 0; i < 5; ++i) r.f32();
    uint8_t info[88];
    r.bytes(info, sizeof info);

    const bool has_segments = flags & 1u, has_points = flags & 2u;
    if (!has_points) r.error(ErrorCode::Format, "file declares no point array");
    if (strands > r.remaining() / 2 + 1 || total > r.remaining() / 12)
        r.error(ErrorCode::Format, "strand/point counts exceed the file size");
    std::vector<uint32_t> segs(strands, default_segments);
    if (has_segments)
        for (auto& s : segs) s = r.u16();
    uint64_t implied = 0;
    for (auto s : segs) implied += static_cast<uint64_t>(s) + 1;
    if (implied != total)
        r.error(ErrorCode::Format, "segment counts imply " + std::to_string(implied) + " points but header declares " +
                                       std::to_string(total));
    need_floats(r, 3ull * total);
    std::vector<float> xyz(3ull * total);
    r.f32s(xyz.data(), xyz.size());
    uint64_t attr = 0;
    if (flags & 4u) attr += total;
    if (flags & 8u) attr += total;
    if (flags & 16u) attr += 3ull * total;
    need_floats(r, attr);

    std::vector<Strand> out;
    size_t at = 0;
    for (uint32_t s = 0; s < strands; ++s) {
        Strand st;
        st.space = Space::World;
        for (uint32_t k = 0; k <= segs[s]; ++k, ++at)
            st.points.push_back({xyz[3 * at], xyz[3 * at + 1], xyz[3 * at + 2]});
        if (st.points.size() < 2)
            fail(ErrorCode::Format, "cyHair: strand " + std::to_string(s) + " has a single point");
        out.push_back(resample(st, points).strand);
    }
    return out;
}

std::vector<Strand> import_cyhair(const std::string& path, int points) { return decode_cyhair(read_file(path), points); }

std::string obj_text(const std::vector<Strand>& strands) {
    std::string out;
    char buf[128];
    for (const auto& s : strands)
        for (const auto& p : s.points) {
            std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", p[0], p[1], p[2]);
            out += buf;
        }
    size_t base = 1;
    for (const auto& s : strands) {
        out += "l";
        for (size_t k = 0; k < s.points.size(); ++k) out += " " + std::to_string(base + k);
        out += "\n";
        base += s.points.size();
    }
    return out;
}

void export_obj(const std::string& path, const HairMap& map, const ScalpGrid& grid) {
    write_text_atomic(path, obj_text(map_to_world(map, grid)));
}

std::vector<Strand> parse_obj_polylines(const std::string& text) {
    std::vector<Vec3> verts;
    std::vector<Strand> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p{};
            ls >> p[0] >> p[1] >> p[2];
            verts.push_back(p);
        } else if (tag == "l") {
            Strand s;
            s.space = Space::World;
            long idx;
            while (ls >> idx) {
                require(idx >= 1 && static_cast<size_t>(idx) <= verts.size(), ErrorCode::Format,
                        "obj: polyline index " + std::to_string(idx) + " out of range");
                s.points.push_back(verts[static_cast<size_t>(idx - 1)]);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace haar::io
