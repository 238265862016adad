// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "../codec.hpp"
#include "../conditioning.hpp"
#include "../latent.hpp"
#include "../strand.hpp"
#include "../unet.hpp"

namespace haar::io {

// Every binary format is little-endian and ends with the CRC32 (IEEE) of all
// preceding bytes. Masks are packed LSB-first: texel t is bit t % 8 of byte t / 8.

/// "HAAR", u32 version 1, u32 W, u32 H, u32 L, u32 strand count, mask,
/// then L*3 f32 per valid texel in texel order.
std::vector<uint8_t> encode_haar(const HairMap& map);
HairMap decode_haar(const std::vector<uint8_t>& bytes);
void write_haar(const std::string& path, const HairMap& map);
HairMap read_haar(const std::string& path);

/// "HLAT", u32 version 1, u32 W, u32 H, u32 M, u32 valid count, mask,
/// then M f32 per valid texel in texel order.
std::vector<uint8_t> encode_hlat(const LatentMap& map);
LatentMap decode_hlat(const std::vector<uint8_t>& bytes);
void write_hlat(const std::string& path, const LatentMap& map);
LatentMap read_hlat(const std::string& path);

/// "HEMB", u32 version 1, u32 T, u32 d_ctx, T*d f32 row-major.
std::vector<uint8_t> encode_hemb(const PromptEmbedding& e);
PromptEmbedding decode_hemb(const std::vector<uint8_t>& bytes);
void write_hemb(const std::string& path, const PromptEmbedding& e);
PromptEmbedding read_hemb(const std::string& path);

/// "HVAE", u32 version 1, u32 L, u32 M, u32 hidden, f64 beta,
/// 3L f32 means, 3L f32 deviations, then the weight tensors.
std::vector<uint8_t> encode_hvae(const CodecParams& p);
CodecParams decode_hvae(const std::vector<uint8_t>& bytes);
void write_hvae(const std::string& path, const CodecParams& p);
CodecParams read_hvae(const std::string& path);

/// "HUNT", u32 version 1, config, f64 sigma_data, mask, weight tensors,
/// u32 EMA flag and, when set, the EMA tensor data.
std::vector<uint8_t> encode_hunt(const DenoiserParams& p);
DenoiserParams decode_hunt(const std::vector<uint8_t>& bytes);
void write_hunt(const std::string& path, const DenoiserParams& p);
DenoiserParams read_hunt(const std::string& path);

/// cyHair binary: 128-byte header then optional u16 segment counts, f32 xyz
/// points and per-point attributes. Strands come back in world space,
/// resampled to `points`.
std::vector<Strand> decode_cyhair(const std::vector<uint8_t>& bytes, int points);
std::vector<Strand> import_cyhair(const std::string& path, int points);

/// Strands as `v x y z` lines then one `l` polyline per strand.
std::string obj_text(const std::vector<Strand>& world_strands);
void export_obj(const std::string& path, const HairMap& map, const ScalpGrid& grid);
/// Parses `v` and `l` records back into polylines.
std::vector<Strand> parse_obj_polylines(const std::string& text);

}  // namespace haar::io
