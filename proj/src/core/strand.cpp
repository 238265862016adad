// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "strand.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace haar {

double Strand::arc_length() const {
    double total = 0;
    for (size_t i = 1; i < points.size(); ++i) total += norm(points[i] - points[i - 1]);
    return total;
}

double Frame::orthonormality_error() const {
    double err = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            err = std::max(err, std::abs(dot(axes[static_cast<size_t>(r)], axes[static_cast<size_t>(c)]) - (r == c ? 1.0 : 0.0)));
    return err;
}

double Frame::determinant() const { return dot(axes[0], cross(axes[1], axes[2])); }

Strand to_local(const Strand& world, const Frame& frame) {
    require(world.space == Space::World, ErrorCode::InvalidArgument, "to_local: strand is already in local space");
    Strand out;
    out.space = Space::Local;
    out.points.reserve(world.points.size());
    for (const auto& p : world.points) {
        Vec3 d = p - frame.origin;
        out.points.push_back({dot(frame.axes[0], d), dot(frame.axes[1], d), dot(frame.axes[2], d)});
    }
    return out;
}

Strand from_local(const Strand& local, const Frame& frame) {
    require(local.space == Space::Local, ErrorCode::InvalidArgument, "from_local: strand is already in world space");
    Strand out;
    out.space = Space::World;
    out.points.reserve(local.points.size());
    for (const auto& p : local.points)
        out.points.push_back(frame.origin + frame.axes[0] * p[0] + frame.axes[1] * p[1] + frame.axes[2] * p[2]);
    return out;
}

ResampleResult resample(const Strand& strand, int points_out) {
    require(points_out >= 2, ErrorCode::InvalidArgument, "resample: need at least 2 output points");
    require(strand.points.size() >= 2, ErrorCode::InvalidArgument, "resample: strand needs at least 2 points");
    const auto& pts = strand.points;
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + norm(pts[i] - pts[i - 1]);
    const double total = cum.back();

    ResampleResult res;
    res.strand.space = strand.space;
    res.strand.points.resize(static_cast<size_t>(points_out));
    if (!(total > 0.0)) {
        std::fill(res.strand.points.begin(), res.strand.points.end(), pts.front());
        res.degenerate = true;
        return res;
    }
    size_t seg = 1;
    for (int k = 0; k < points_out; ++k) {
        double target = total * static_cast<double>(k) / static_cast<double>(points_out - 1);
        while (seg + 1 < pts.size() && cum[seg] < target) ++seg;
        double len = cum[seg] - cum[seg - 1];
        double t = len > 0 ? std::clamp((target - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
        res.strand.points[static_cast<size_t>(k)] = pts[seg - 1] + (pts[seg] - pts[seg - 1]) * t;
    }
    res.strand.points.front() = pts.front();
    res.strand.points.back() = pts.back();
    return res;
}

ScalpMesh parse_obj_mesh(const std::string& text) {
    ScalpMesh mesh;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p{};
            require(static_cast<bool>(ls >> p[0] >> p[1] >> p[2]), ErrorCode::Format, "obj line " + std::to_string(lineno) + ": bad vertex");
            mesh.positions.push_back(p);
        } else if (tag == "vt") {
            std::array<double, 2> uv{};
            require(static_cast<bool>(ls >> uv[0] >> uv[1]), ErrorCode::Format, "obj line " + std::to_string(lineno) + ": bad uv");
            mesh.uvs.push_back(uv);
        } else if (tag == "f") {
            std::vector<std::array<int, 2>> corners;
            std::string tok;
            while (ls >> tok) {
                int v = 0, t = 0;
                char slash = 0;
                std::istringstream ts(tok);
                require(static_cast<bool>(ts >> v >> slash >> t) && slash == '/', ErrorCode::Format,
                        "obj line " + std::to_string(lineno) + ": face corners must be v/vt");
                auto fix = [](int idx, size_t n) { return idx < 0 ? static_cast<int>(n) + idx : idx - 1; };
                corners.push_back({fix(v, mesh.positions.size()), fix(t, mesh.uvs.size())});
            }
            require(corners.size() >= 3, ErrorCode::Format, "obj line " + std::to_string(lineno) + ": face needs 3 corners");
            for (size_t k = 1; k + 1 < corners.size(); ++k) {
                ScalpMesh::Face f;
                f.v = {corners[0][0], corners[k][0], corners[k + 1][0]};
                f.t = {corners[0][1], corners[k][1], corners[k + 1][1]};
                mesh.faces.push_back(f);
            }
        }
    }
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi)
        for (int c = 0; c < 3; ++c) {
            const auto& f = mesh.faces[fi];
            require(f.v[static_cast<size_t>(c)] >= 0 && f.v[static_cast<size_t>(c)] < static_cast<int>(mesh.positions.size()) &&
                        f.t[static_cast<size_t>(c)] >= 0 && f.t[static_cast<size_t>(c)] < static_cast<int>(mesh.uvs.size()),
                    ErrorCode::Format, "obj face " + std::to_string(fi) + " references a missing vertex or uv");
        }
    return mesh;
}

ScalpMesh load_obj_mesh(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), ErrorCode::Io, "cannot open mesh '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_obj_mesh(ss.str());
}

ScalpMesh hemisphere_mesh(int rings, int segments) {
    require(rings >= 1 && segments >= 3, ErrorCode::InvalidArgument, "hemisphere_mesh: need rings >= 1 and segments >= 3");
    ScalpMesh m;
    auto add = [&](double theta, double phi) {
        Vec3 p{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
        double r = theta / (M_PI / 2);
        m.positions.push_back(p);
        m.normals.push_back(p);
        m.uvs.push_back({0.5 + 0.5 * r * std::cos(phi), 0.5 + 0.5 * r * std::sin(phi)});
    };
    add(0.0, 0.0);
    for (int k = 1; k <= rings; ++k)
        for (int s = 0; s < segments; ++s)
            add(static_cast<double>(k) * (M_PI / 2) / rings, 2 * M_PI * static_cast<double>(s) / segments);
    auto ring_vertex = [&](int k, int s) { return 1 + (k - 1) * segments + (s % segments); };
    auto tri = [&](int a, int b, int c) {
        ScalpMesh::Face f;
        f.v = {a, b, c};
        f.t = {a, b, c};
        m.faces.push_back(f);
    };
    for (int s = 0; s < segments; ++s) tri(0, ring_vertex(1, s), ring_vertex(1, s + 1));
    for (int k = 1; k < rings; ++k)
        for (int s = 0; s < segments; ++s) {
            int a = ring_vertex(k, s), b = ring_vertex(k + 1, s), c = ring_vertex(k + 1, s + 1), d = ring_vertex(k, s + 1);
            tri(a, b, c);
            tri(a, c, d);
        }
    return m;
}

int64_t ScalpGrid::valid_count() const {
    return std::count_if(valid.begin(), valid.end(), [](uint8_t v) { return v != 0; });
}

namespace {

std::vector<Vec3> vertex_normals(const ScalpMesh& mesh) {
    if (mesh.normals.size() == mesh.positions.size()) return mesh.normals;
    std::vector<Vec3> n(mesh.positions.size(), Vec3{0, 0, 0});
    for (const auto& f : mesh.faces) {
        const auto& p0 = mesh.positions[static_cast<size_t>(f.v[0])];
        Vec3 fn = cross(mesh.positions[static_cast<size_t>(f.v[1])] - p0, mesh.positions[static_cast<size_t>(f.v[2])] - p0);
        for (int c = 0; c < 3; ++c) n[static_cast<size_t>(f.v[static_cast<size_t>(c)])] = n[static_cast<size_t>(f.v[static_cast<size_t>(c)])] + fn;
    }
    for (auto& v : n) v = normalized(v);
    return n;
}

}  // namespace

ScalpGrid build_scalp_grid(const ScalpMesh& mesh, int width, int height) {
    require(width >= 2 && height >= 2, ErrorCode::InvalidArgument, "scalp grid needs width, height >= 2");
    ScalpGrid grid;
    grid.width = width;
    grid.height = height;
    grid.frames.assign(static_cast<size_t>(grid.texels()), Frame{});
    grid.valid.assign(static_cast<size_t>(grid.texels()), 0);
    std::vector<int> owner(static_cast<size_t>(grid.texels()), -1);
    std::vector<uint8_t> strict(static_cast<size_t>(grid.texels()), 0);
    const auto vn = vertex_normals(mesh);
    constexpr double kEps = 1e-9;

    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Vec3& p0 = mesh.positions[static_cast<size_t>(f.v[0])];
        const Vec3& p1 = mesh.positions[static_cast<size_t>(f.v[1])];
        const Vec3& p2 = mesh.positions[static_cast<size_t>(f.v[2])];
        Vec3 e1 = p1 - p0, e2 = p2 - p0;
        Vec3 fn = cross(e1, e2);
        require(norm(fn) > 1e-14, ErrorCode::InvalidArgument, "degenerate face " + std::to_string(fi) + " (zero area)");
        const auto& t0 = mesh.uvs[static_cast<size_t>(f.t[0])];
        const auto& t1 = mesh.uvs[static_cast<size_t>(f.t[1])];
        const auto& t2 = mesh.uvs[static_cast<size_t>(f.t[2])];
        double du1 = t1[0] - t0[0], dv1 = t1[1] - t0[1], du2 = t2[0] - t0[0], dv2 = t2[1] - t0[1];
        double det = du1 * dv2 - du2 * dv1;
        require(std::abs(det) > 1e-14, ErrorCode::InvalidArgument, "degenerate face " + std::to_string(fi) + " (zero uv area)");
        Vec3 dpdu = (e1 * dv2 - e2 * dv1) * (1.0 / det);

        double umin = std::min({t0[0], t1[0], t2[0]}), umax = std::max({t0[0], t1[0], t2[0]});
        double vmin = std::min({t0[1], t1[1], t2[1]}), vmax = std::max({t0[1], t1[1], t2[1]});
        int i0 = std::max(0, static_cast<int>(std::floor(umin * width - 0.5)));
        int i1 = std::min(width - 1, static_cast<int>(std::ceil(umax * width - 0.5)));
        int j0 = std::max(0, static_cast<int>(std::floor(vmin * height - 0.5)));
        int j1 = std::min(height - 1, static_cast<int>(std::ceil(vmax * height - 0.5)));
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                double u = (i + 0.5) / width, v = (j + 0.5) / height;
                double a = ((u - t0[0]) * dv2 - du2 * (v - t0[1])) / det;
                double b = (du1 * (v - t0[1]) - (u - t0[0]) * dv1) / det;
                double c = 1.0 - a - b;
                if (a < -kEps || b < -kEps || c < -kEps) continue;
                bool inside = a > kEps && b > kEps && c > kEps;
                auto idx = static_cast<size_t>(grid.index(i, j));
                if (owner[idx] >= 0) {
                    require(!(inside && strict[idx]), ErrorCode::InvalidArgument,
                            "non-injective uv layout: faces " + std::to_string(owner[idx]) + " and " + std::to_string(fi) +
                                " overlap at texel (" + std::to_string(i) + "," + std::to_string(j) + ")");
                    continue;
                }
                owner[idx] = static_cast<int>(fi);
                strict[idx] = inside ? 1 : 0;
                Frame fr;
                fr.origin = p0 * c + p1 * a + p2 * b;
                Vec3 n = normalized(vn[static_cast<size_t>(f.v[0])] * c + vn[static_cast<size_t>(f.v[1])] * a +
                                    vn[static_cast<size_t>(f.v[2])] * b);
                if (dot(n, fn) < 0 || norm(n) == 0) n = normalized(fn);
                Vec3 t = normalized(dpdu - n * dot(n, dpdu));
                Vec3 bt = cross(n, t);
                // re-orthonormalise against rounding
                t = normalized(cross(bt, n));
                fr.axes = {t, normalized(bt), n};
                grid.frames[idx] = fr;
                grid.valid[idx] = 1;
            }
    }
    return grid;
}

ScalpGrid hemisphere_grid(int width, int height) { return build_scalp_grid(hemisphere_mesh(), width, height); }

HairMap::HairMap(int width, int height, int points, std::vector<uint8_t> mask)
    : width_(width), height_(height), points_(points), mask_(std::move(mask)) {
    require(width > 0 && height > 0 && points >= 2, ErrorCode::InvalidArgument, "hair map needs positive extent and >= 2 points");
    require(static_cast<int64_t>(mask_.size()) == texels(), ErrorCode::Shape, "hair map mask size mismatch");
    slots_.assign(mask_.size(), -1);
    for (size_t t = 0; t < mask_.size(); ++t)
        if (mask_[t]) {
            mask_[t] = 1;
            slots_[t] = count_++;
            texel_of_slot_.push_back(static_cast<int64_t>(t));
        }
    coords_.assign(static_cast<size_t>(count_ * points_ * 3), 0.0f);
}

Strand HairMap::strand(int64_t texel) const {
    int64_t s = slot(texel);
    require(s >= 0, ErrorCode::InvalidArgument, "texel " + std::to_string(texel) + " carries no strand");
    Strand out;
    out.space = Space::Local;
    out.points.resize(static_cast<size_t>(points_));
    const float* d = slot_data(s);
    for (int k = 0; k < points_; ++k) out.points[static_cast<size_t>(k)] = {d[3 * k], d[3 * k + 1], d[3 * k + 2]};
    return out;
}

void HairMap::set_strand(int64_t texel, const Strand& st) {
    int64_t s = slot(texel);
    require(s >= 0, ErrorCode::InvalidArgument, "texel " + std::to_string(texel) + " carries no strand");
    require(st.space == Space::Local, ErrorCode::InvalidArgument, "hair maps store local-space strands");
    require(static_cast<int>(st.points.size()) == points_, ErrorCode::Shape,
            "strand has " + std::to_string(st.points.size()) + " points, map expects " + std::to_string(points_));
    float* d = slot_data(s);
    for (int k = 0; k < points_; ++k)
        for (int c = 0; c < 3; ++c) d[3 * k + c] = static_cast<float>(st.points[static_cast<size_t>(k)][static_cast<size_t>(c)]);
}

HairMap restrict_to_grid(const HairMap& map, const ScalpGrid& grid) {
    require(grid.width == map.width() && grid.height == map.height(), ErrorCode::Shape,
            "restrict_to_grid: grid " + std::to_string(grid.width) + "x" + std::to_string(grid.height) +
                " does not match map " + std::to_string(map.width()) + "x" + std::to_string(map.height()));
    std::vector<uint8_t> mask(map.mask().size());
    for (size_t t = 0; t < mask.size(); ++t) mask[t] = map.mask()[t] && grid.valid[t];
    HairMap out(map.width(), map.height(), map.points(), mask);
    for (int64_t s = 0; s < out.strand_count(); ++s) {
        const int64_t t = out.texel_of_slot(s);
        std::copy_n(map.slot_data(map.slot(t)), map.points() * 3, out.slot_data(s));
    }
    return out;
}

HairMap align_strands(const std::vector<Strand>& world_strands, const ScalpGrid& grid, int points) {
    std::vector<int64_t> valid_texels;
    for (int64_t t = 0; t < grid.texels(); ++t)
        if (grid.valid[static_cast<size_t>(t)]) valid_texels.push_back(t);
    require(!valid_texels.empty(), ErrorCode::InvalidArgument, "scalp grid has no valid texels");

    std::vector<int> best(static_cast<size_t>(grid.texels()), -1);
    std::vector<double> best_d(static_cast<size_t>(grid.texels()), std::numeric_limits<double>::infinity());
    for (size_t si = 0; si < world_strands.size(); ++si) {
        const auto& s = world_strands[si];
        require(s.space == Space::World && s.points.size() >= 2, ErrorCode::InvalidArgument,
                "align_strands: strand " + std::to_string(si) + " must be a world-space polyline");
        int64_t arg = -1;
        double dmin = std::numeric_limits<double>::infinity();
        for (int64_t t : valid_texels) {
            double d = norm(s.points.front() - grid.frames[static_cast<size_t>(t)].origin);
            if (d < dmin) {
                dmin = d;
                arg = t;
            }
        }
        if (dmin < best_d[static_cast<size_t>(arg)]) {
            best_d[static_cast<size_t>(arg)] = dmin;
            best[static_cast<size_t>(arg)] = static_cast<int>(si);
        }
    }
    std::vector<uint8_t> mask(static_cast<size_t>(grid.texels()), 0);
    for (size_t t = 0; t < mask.size(); ++t) mask[t] = best[t] >= 0 ? 1 : 0;
    HairMap map(grid.width, grid.height, points, mask);
    for (int64_t t = 0; t < grid.texels(); ++t) {
        int si = best[static_cast<size_t>(t)];
        if (si < 0) continue;
        const auto& frame = grid.frames[static_cast<size_t>(t)];
        Strand moved = world_strands[static_cast<size_t>(si)];
        Vec3 shift = frame.origin - moved.points.front();
        for (auto& p : moved.points) p = p + shift;
        Strand local = to_local(moved, frame);
        local.points.front() = {0, 0, 0};
        map.set_strand(t, resample(local, points).strand);
    }
    return map;
}

}  // namespace haar
