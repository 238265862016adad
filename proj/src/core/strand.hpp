// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace haar {

inline constexpr int kDefaultStrandPoints = 100;

enum class Space { World, Local };

/// Fixed-length polyline. In local space the root sits at the origin.
struct Strand {
    std::vector<Vec3> points;
    Space space = Space::Local;

    size_t size() const { return points.size(); }
    double arc_length() const;
};

/// Root-local basis. Rows of `axes` are tangent, bitangent and normal.
struct Frame {
    Vec3 origin{0, 0, 0};
    std::array<Vec3, 3> axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    static Frame identity() { return {}; }
    /// max |axes * axes^T - I| entry.
    double orthonormality_error() const;
    double determinant() const;
};

Strand to_local(const Strand& world, const Frame& frame);
Strand from_local(const Strand& local, const Frame& frame);

struct ResampleResult {
    Strand strand;
    /// Input had zero total length; output is copies of the root.
    bool degenerate = false;
};

/// Places `points_out` points at uniform arc-length fractions of the input
/// polyline. Endpoints are copied exactly.
ResampleResult resample(const Strand& strand, int points_out);

/// Triangle mesh with per-corner UVs, as read from an OBJ file.
struct ScalpMesh {
    struct Face {
        std::array<int, 3> v{};
        std::array<int, 3> t{};
    };
    std::vector<Vec3> positions;
    std::vector<std::array<double, 2>> uvs;
    /// Optional per-position normals; computed from faces when empty.
    std::vector<Vec3> normals;
    std::vector<Face> faces;
};

ScalpMesh load_obj_mesh(const std::string& path);
ScalpMesh parse_obj_mesh(const std::string& text);

/// Unit upper hemisphere (+z pole) with azimuthal-equidistant UVs: the pole
/// maps to (0.5, 0.5) and the equator to the inscribed circle of the UV square.
ScalpMesh hemisphere_mesh(int rings = 48, int segments = 128);

struct ScalpGrid {
    int width = 0;
    int height = 0;
    std::vector<Frame> frames;
    std::vector<uint8_t> valid;

    int64_t texels() const { return static_cast<int64_t>(width) * height; }
    int64_t index(int i, int j) const { return static_cast<int64_t>(j) * width + i; }
    int64_t valid_count() const;
};

/// Texel (i, j) samples UV ((i+0.5)/W, (j+0.5)/H). Frame normal is the
/// barycentric blend of vertex normals; tangent is the face's dP/du projected
/// off the normal.
ScalpGrid build_scalp_grid(const ScalpMesh& mesh, int width, int height);

ScalpGrid hemisphere_grid(int width, int height);

/// Per-texel local-space strands over a W x H scalp grid. Only texels set in
/// `mask` carry a strand; their coordinates are stored contiguously in texel
/// order as L x 3 floats.
class HairMap {
public:
    HairMap() = default;
    HairMap(int width, int height, int points, std::vector<uint8_t> mask);

    int width() const { return width_; }
    int height() const { return height_; }
    int points() const { return points_; }
    int64_t texels() const { return static_cast<int64_t>(width_) * height_; }
    int64_t strand_count() const { return count_; }
    const std::vector<uint8_t>& mask() const { return mask_; }
    bool has(int64_t texel) const { return mask_[static_cast<size_t>(texel)] != 0; }

    /// Slot of a valid texel in storage order, or -1.
    int64_t slot(int64_t texel) const { return slots_[static_cast<size_t>(texel)]; }
    int64_t texel_of_slot(int64_t slot) const { return texel_of_slot_[static_cast<size_t>(slot)]; }

    Strand strand(int64_t texel) const;
    void set_strand(int64_t texel, const Strand& s);

    const std::vector<float>& coords() const { return coords_; }
    std::vector<float>& coords() { return coords_; }
    float* slot_data(int64_t slot) { return coords_.data() + slot * points_ * 3; }
    const float* slot_data(int64_t slot) const { return coords_.data() + slot * points_ * 3; }

    friend bool operator==(const HairMap& a, const HairMap& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.points_ == b.points_ && a.mask_ == b.mask_ &&
               a.coords_ == b.coords_;
    }

private:
    int width_ = 0, height_ = 0, points_ = 0;
    int64_t count_ = 0;
    std::vector<uint8_t> mask_;
    std::vector<int64_t> slots_;
    std::vector<int64_t> texel_of_slot_;
    std::vector<float> coords_;
};

/// Drops the strands whose texel is off the scalp. Upsampled masks follow the
/// guide grid and can overhang a finer grid's boundary.
HairMap restrict_to_grid(const HairMap& map, const ScalpGrid& grid);

/// Assigns each world strand to the valid texel whose frame origin is
/// closest to the strand root, converts it to that texel's local frame and
/// resamples it to `points`. Later strands lose ties to closer ones.
HairMap align_strands(const std::vector<Strand>& world_strands, const ScalpGrid& grid, int points);

}  // namespace haar
