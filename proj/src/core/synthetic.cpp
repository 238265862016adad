// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace haar {

Strand synthetic_strand(const StrandStyle& st, int points) {
    require(st.length > 0 && points >= 2, ErrorCode::InvalidArgument, "synthetic_strand: need positive length and >= 2 points");
    const int steps = 4 * points;
    const double ds = st.length / steps;
    const Vec3 dir_out{std::cos(st.heading), std::sin(st.heading), 0.0};
    const Vec3 side{-std::sin(st.heading), std::cos(st.heading), 0.0};
    Vec3 d = normalized(Vec3{0, 0, 1} * std::cos(st.tilt) + dir_out * std::sin(st.tilt));
    Vec3 p{0, 0, 0};

    Strand s;
    s.space = Space::Local;
    s.points.push_back(p);
    std::vector<Vec3> dirs{d};
    for (int k = 1; k <= steps; ++k) {
        // bend towards the outward, then downward tangent-plane direction
        Vec3 target = normalized(dir_out * 0.6 + Vec3{0, 0, -1} * 0.8);
        Vec3 perp = target - d * dot(target, d);
        d = normalized(d + perp * (st.droop * ds));
        p = p + d * ds;
        s.points.push_back(p);
        dirs.push_back(d);
    }
    for (int k = 1; k <= steps; ++k) {
        double arc = k * ds;
        double taper = std::min(1.0, arc / (0.15 * st.length));
        const Vec3& t = dirs[static_cast<size_t>(k)];
        Vec3 n1 = normalized(side - t * dot(side, t));
        Vec3 n2 = cross(t, n1);
        double wave = st.wave_amplitude * std::sin(2 * M_PI * st.wave_frequency * arc + st.phase);
        double ang = 2 * M_PI * st.curl_frequency * arc + st.phase;
        Vec3 off = n1 * (wave + st.curl_radius * std::cos(ang)) + n2 * (st.curl_radius * std::sin(ang));
        // curl offset starts at zero on the root
        off = off - n1 * (st.curl_radius * std::cos(st.phase));
        s.points[static_cast<size_t>(k)] = s.points[static_cast<size_t>(k)] + off * taper;
    }
    return resample(s, points).strand;
}

StrandStyle random_style(Rng& rng) {
    StrandStyle st;
    st.length = rng.uniform(0.08, 0.35);
    st.tilt = rng.uniform(0.1, 0.8);
    st.heading = rng.uniform(0.0, 2 * M_PI);
    st.droop = rng.uniform(0.0, 12.0);
    st.phase = rng.uniform(0.0, 2 * M_PI);
    double kind = rng.uniform();
    if (kind < 0.35) {
        st.wave_amplitude = rng.uniform(0.003, 0.015);
        st.wave_frequency = rng.uniform(5.0, 20.0);
    } else if (kind < 0.7) {
        st.curl_radius = rng.uniform(0.002, 0.01);
        st.curl_frequency = rng.uniform(10.0, 40.0);
    }
    return st;
}

StrandStyle jitter_style(const StrandStyle& b, Rng& rng, double amount) {
    StrandStyle st = b;
    st.length = std::max(0.01, b.length * (1.0 + amount * rng.normal()));
    st.tilt = b.tilt + 0.5 * amount * rng.normal();
    st.heading = b.heading + amount * rng.normal();
    st.droop = std::max(0.0, b.droop * (1.0 + amount * rng.normal()));
    st.phase = b.phase + amount * rng.normal();
    return st;
}

HairMap synthetic_hairstyle(const ScalpGrid& grid, const StrandStyle& base, uint64_t seed, int points) {
    HairMap map(grid.width, grid.height, points, grid.valid);
    Rng rng(seed);
    for (int j = 0; j < grid.height; ++j)
        for (int i = 0; i < grid.width; ++i) {
            int64_t t = grid.index(i, j);
            if (!grid.valid[static_cast<size_t>(t)]) continue;
            double u = (i + 0.5) / grid.width - 0.5, v = (j + 0.5) / grid.height - 0.5;
            StrandStyle st = jitter_style(base, rng, 0.05);
            // part the hair away from the crown
            st.heading += std::atan2(v, u);
            map.set_strand(t, synthetic_strand(st, points));
        }
    return map;
}

std::vector<Strand> synthetic_strands(int count, uint64_t seed, int points) {
    Rng rng(seed);
    std::vector<Strand> out;
    out.reserve(static_cast<size_t>(std::max(0, count)));
    for (int k = 0; k < count; ++k) out.push_back(synthetic_strand(random_style(rng), points));
    return out;
}

}  // namespace haar
