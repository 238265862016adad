// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "augmentation.hpp"

#include <algorithm>
#include <cmath>

namespace haar {

namespace {

template <class F>
HairMap map_strands(const HairMap& h, F&& f) {
    HairMap out = h;
    for (int64_t s = 0; s < h.strand_count(); ++s) {
        int64_t t = h.texel_of_slot(s);
        out.set_strand(t, f(h.strand(t), t));
    }
    return out;
}

}  // namespace

HairMap scale(const HairMap& h, const Vec3& k) {
    require(k[0] > 0 && k[1] > 0 && k[2] > 0, ErrorCode::InvalidArgument, "scale: factors must be positive");
    return map_strands(h, [&](Strand s, int64_t) {
        for (auto& p : s.points) p = {p[0] * k[0], p[1] * k[1], p[2] * k[2]};
        return s;
    });
}

HairMap cut(const HairMap& h, double fraction) {
    require(fraction > 0 && fraction <= 1, ErrorCode::InvalidArgument, "cut: fraction must lie in (0,1]");
    if (fraction == 1.0) return h;
    return map_strands(h, [&](const Strand& s, int64_t) {
        const double target = s.arc_length() * fraction;
        Strand part;
        part.space = s.space;
        part.points.push_back(s.points[0]);
        double acc = 0;
        for (size_t k = 1; k < s.points.size(); ++k) {
            double len = norm(s.points[k] - s.points[k - 1]);
            if (acc + len >= target) {
                double t = len > 0 ? (target - acc) / len : 0.0;
                part.points.push_back(s.points[k - 1] + (s.points[k] - s.points[k - 1]) * t);
                break;
            }
            acc += len;
            part.points.push_back(s.points[k]);
        }
        if (part.points.size() < 2) part.points.push_back(part.points[0]);
        return resample(part, static_cast<int>(s.points.size())).strand;
    });
}

HairMap curl(const HairMap& h, double amplitude, double frequency, uint64_t seed) {
    require(amplitude >= 0, ErrorCode::InvalidArgument, "curl: amplitude must be non-negative");
    if (amplitude == 0) return h;
    return map_strands(h, [&](Strand s, int64_t texel) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(texel)));
        const double phase = rng.uniform(0.0, 2 * M_PI);
        const size_t n = s.points.size();
        const double total = s.arc_length();
        if (total == 0) return s;
        std::vector<Vec3> tangent(n);
        for (size_t k = 0; k < n; ++k) {
            size_t a = k == 0 ? 0 : k - 1, b = std::min(k + 1, n - 1);
            tangent[k] = normalized(s.points[b] - s.points[a]);
        }
        Vec3 ref = std::abs(tangent[0][0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        Vec3 n1 = normalized(ref - tangent[0] * dot(ref, tangent[0]));
        Strand out = s;
        double arc = 0;
        for (size_t k = 0; k < n; ++k) {
            if (k > 0) arc += norm(s.points[k] - s.points[k - 1]);
            Vec3 t = tangent[k];
            Vec3 moved = n1 - t * dot(n1, t);
            if (norm(moved) > 1e-12) n1 = normalized(moved);
            Vec3 n2 = cross(t, n1);
            double taper = std::min(1.0, arc / (0.1 * total));
            double ang = 2 * M_PI * frequency * arc + phase;
            out.points[k] = s.points[k] + (n1 * std::cos(ang) + n2 * std::sin(ang)) * (amplitude * taper);
        }
        out.points[0] = s.points[0];
        return out;
    });
}

AugmentRanges AugmentRanges::identity() {
    AugmentRanges r;
    r.scale_min = r.scale_max = 1.0;
    r.cut_min = r.cut_max = 1.0;
    r.curl_amplitude_min = r.curl_amplitude_max = 0.0;
    r.curl_frequency_min = r.curl_frequency_max = 0.0;
    return r;
}

AugmentParams draw_augment(const AugmentRanges& r, uint64_t seed, size_t b, size_t v, size_t variants) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(b * variants + v)));
    AugmentParams p;
    for (auto& s : p.scale) s = rng.uniform(r.scale_min, r.scale_max);
    p.cut = rng.uniform(r.cut_min, r.cut_max);
    p.amplitude = rng.uniform(r.curl_amplitude_min, r.curl_amplitude_max);
    p.frequency = rng.uniform(r.curl_frequency_min, r.curl_frequency_max);
    p.curl_seed = rng.next_u64();
    return p;
}

HairMap apply_augment(const HairMap& h, const AugmentParams& p) {
    return curl(cut(scale(h, p.scale), p.cut), p.amplitude, p.frequency, p.curl_seed);
}

std::vector<HairMap> expand_dataset(const std::vector<HairMap>& base, int variants, const AugmentRanges& ranges,
                                    uint64_t seed) {
    require(!base.empty(), ErrorCode::InvalidArgument, "expand_dataset: empty base set");
    require(variants >= 1, ErrorCode::InvalidArgument, "expand_dataset: variants must be >= 1");
    require(ranges.scale_min > 0 && ranges.scale_min <= ranges.scale_max && ranges.cut_min > 0 &&
                ranges.cut_min <= ranges.cut_max && ranges.cut_max <= 1 && ranges.curl_amplitude_min >= 0 &&
                ranges.curl_amplitude_min <= ranges.curl_amplitude_max &&
                ranges.curl_frequency_min <= ranges.curl_frequency_max,
            ErrorCode::InvalidArgument, "expand_dataset: invalid parameter ranges");
    std::vector<HairMap> out;
    out.reserve(base.size() * static_cast<size_t>(variants));
    for (size_t b = 0; b < base.size(); ++b)
        for (size_t v = 0; v < static_cast<size_t>(variants); ++v)
            out.push_back(apply_augment(base[b], draw_augment(ranges, seed, b, v, static_cast<size_t>(variants))));
    return out;
}

}  // namespace haar
