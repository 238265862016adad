// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "upsampler.hpp"

#include <algorithm>
#include <cmath>

namespace haar {

double strand_cosine_similarity(const Strand& a, const Strand& b) {
    require(a.points.size() == b.points.size(), ErrorCode::Shape,
            "strand_cosine_similarity: strands have " + std::to_string(a.points.size()) + " and " +
                std::to_string(b.points.size()) + " points");
    require(!a.points.empty(), ErrorCode::InvalidArgument, "strand_cosine_similarity: empty strands");
    double ab = 0, aa = 0, bb = 0;
    for (size_t k = 0; k < a.points.size(); ++k) {
        Vec3 da = a.points[k] - a.points[0], db = b.points[k] - b.points[0];
        ab += dot(da, db);
        aa += dot(da, da);
        bb += dot(db, db);
    }
    if (aa == 0 || bb == 0) return 1.0;
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double blend_weight(double x) {
    double f = x <= 0.9 ? 1.0 - 1.63 * std::pow(x, 5) : 0.4 - 0.4 * x;
    return std::clamp(f, 0.0, 1.0);
}

LatentMap upsample_with_guides(const LatentMap& z, const std::vector<Strand>& guides, const UpsampleOptions& opt) {
    const int w = z.width(), h = z.height();
    require(z.valid_count() > 0, ErrorCode::InvalidArgument, "upsample: latent map has no valid texels");
    require(opt.width >= w && opt.height >= h, ErrorCode::InvalidArgument,
            "upsample: target " + std::to_string(opt.width) + "x" + std::to_string(opt.height) + " is smaller than " +
                std::to_string(w) + "x" + std::to_string(h));
    require(static_cast<int64_t>(guides.size()) == z.texels(), ErrorCode::Shape, "upsample: need one guide strand per texel");

    // x per guide cell (i0, j0): min similarity over the cell's valid corners
    std::vector<double> cell_x(static_cast<size_t>(z.texels()), 1.0);
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            int64_t corner[4] = {z.index(i, j), z.index(std::min(i + 1, w - 1), j), z.index(i, std::min(j + 1, h - 1)),
                                 z.index(std::min(i + 1, w - 1), std::min(j + 1, h - 1))};
            double x = 1.0;
            for (int a = 0; a < 4; ++a)
                for (int b = a + 1; b < 4; ++b)
                    if (z.has(corner[a]) && z.has(corner[b]) && corner[a] != corner[b])
                        x = std::min(x, strand_cosine_similarity(guides[static_cast<size_t>(corner[a])],
                                                                 guides[static_cast<size_t>(corner[b])]));
            cell_x[static_cast<size_t>(z.index(i, j))] = x;
        }

    const int tw = opt.width, th = opt.height;
    std::vector<uint8_t> mask(static_cast<size_t>(tw) * static_cast<size_t>(th));
    struct Sample {
        int64_t nn = -1;
        int64_t c[4];
        double wt[4];
        double tx, ty;
        bool full;
        double f;
    };
    std::vector<Sample> plan(mask.size());
    for (int jj = 0; jj < th; ++jj)
        for (int ii = 0; ii < tw; ++ii) {
            double u = static_cast<double>(ii) * w / tw, v = static_cast<double>(jj) * h / th;
            int i0 = std::min(static_cast<int>(std::floor(u)), w - 1), j0 = std::min(static_cast<int>(std::floor(v)), h - 1);
            int i1 = std::min(i0 + 1, w - 1), j1 = std::min(j0 + 1, h - 1);
            double tx = u - i0, ty = v - j0;
            int ni = std::min(static_cast<int>(std::floor(u + 0.5)), w - 1), nj = std::min(static_cast<int>(std::floor(v + 0.5)), h - 1);
            Sample s;
            s.nn = z.index(ni, nj);
            s.c[0] = z.index(i0, j0);
            s.c[1] = z.index(i1, j0);
            s.c[2] = z.index(i0, j1);
            s.c[3] = z.index(i1, j1);
            s.wt[0] = (1 - tx) * (1 - ty);
            s.wt[1] = tx * (1 - ty);
            s.wt[2] = (1 - tx) * ty;
            s.wt[3] = tx * ty;
            s.tx = tx;
            s.ty = ty;
            s.full = z.has(s.c[0]) && z.has(s.c[1]) && z.has(s.c[2]) && z.has(s.c[3]);
            s.f = blend_weight(cell_x[static_cast<size_t>(s.c[0])]);
            size_t t = static_cast<size_t>(jj) * static_cast<size_t>(tw) + static_cast<size_t>(ii);
            mask[t] = z.has(s.nn) ? 1 : 0;
            plan[t] = s;
        }

    LatentMap out(tw, th, z.channels(), mask);
    for (size_t t = 0; t < plan.size(); ++t) {
        if (!mask[t]) continue;
        const Sample& s = plan[t];
        double wsum = 0;
        for (int k = 0; k < 4; ++k)
            if (z.has(s.c[k])) wsum += s.wt[k];
        for (int c = 0; c < z.channels(); ++c) {
            double bil;
            if (s.full) {
                double a = z.at(c, s.c[0]), b = z.at(c, s.c[1]), cc = z.at(c, s.c[2]), d = z.at(c, s.c[3]);
                double top = a + s.tx * (b - a), bot = cc + s.tx * (d - cc);
                bil = top + s.ty * (bot - top);
            } else if (wsum > 0) {
                bil = 0;
                for (int k = 0; k < 4; ++k)
                    if (z.has(s.c[k])) bil += s.wt[k] / wsum * z.at(c, s.c[k]);
            } else {
                bil = z.at(c, s.nn);
            }
            double nn = z.at(c, s.nn);
            out.at(c, static_cast<int64_t>(t)) = static_cast<float>(bil + s.f * (nn - bil));
        }
    }
    return opt.noise ? inject_noise(out, opt.seed) : out;
}

LatentMap upsample(const LatentMap& z, const CodecParams& codec, const UpsampleOptions& opt) {
    require(z.channels() == codec.latent, ErrorCode::Shape,
            "upsample: latent map has " + std::to_string(z.channels()) + " channels, codec expects " +
                std::to_string(codec.latent));
    HairMap decoded = decode_map(codec, z);
    std::vector<Strand> guides(static_cast<size_t>(z.texels()));
    for (int64_t t = 0; t < z.texels(); ++t)
        if (z.has(t)) guides[static_cast<size_t>(t)] = decoded.strand(t);
    return upsample_with_guides(z, guides, opt);
}

std::vector<double> channel_stddev(const LatentMap& z) {
    std::vector<double> sd(static_cast<size_t>(z.channels()), 0.0);
    const int64_t n = z.valid_count();
    if (n == 0) return sd;
    for (int c = 0; c < z.channels(); ++c) {
        double mean = 0;
        for (int64_t t = 0; t < z.texels(); ++t)
            if (z.has(t)) mean += z.at(c, t);
        mean /= static_cast<double>(n);
        double var = 0;
        for (int64_t t = 0; t < z.texels(); ++t)
            if (z.has(t)) var += (z.at(c, t) - mean) * (z.at(c, t) - mean);
        sd[static_cast<size_t>(c)] = std::sqrt(var / static_cast<double>(n));
    }
    return sd;
}

std::pair<double, double> noise_gate(uint64_t seed, int64_t texel) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(texel)));
    double x = rng.normal(0.15, 0.05);
    double y = rng.bernoulli(0.5) ? 1.0 : -1.0;
    return {x, y};
}

LatentMap inject_noise(const LatentMap& z, uint64_t seed) {
    auto sd = channel_stddev(z);
    LatentMap out = z;
    for (int64_t t = 0; t < z.texels(); ++t) {
        if (!z.has(t)) continue;
        auto [x, y] = noise_gate(seed, t);
        for (int c = 0; c < z.channels(); ++c) {
            double s = sd[static_cast<size_t>(c)];
            if (s == 0) continue;
            out.at(c, t) = static_cast<float>(z.at(c, t) + s * x * y);
        }
    }
    return out;
}

}  // namespace haar
