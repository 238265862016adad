// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "autodiff/tensor.hpp"
#include "bytes.hpp"
#include "common.hpp"
#include "latent.hpp"
#include "strand.hpp"
#include "unet.hpp"

namespace haar::test {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("haar_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

template <class T>
ad::Tensor<T> random_tensor(const ad::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    ad::Tensor<T> t(shape);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// Smallest network exercising every block type.
inline UNetConfig tiny_unet() {
    UNetConfig c;
    c.image_size = 4;
    c.in_channels = 2;
    c.model_channels = 8;
    c.channel_mult = {1, 2};
    c.num_res_blocks = 1;
    c.num_heads = 2;
    c.attention_resolutions = {1, 2};
    c.context_dim = 4;
    c.norm_groups = 2;
    return c;
}

inline LatentMap random_latent(int w, int h, int m, Rng& rng, double keep = 1.0) {
    std::vector<uint8_t> mask(static_cast<size_t>(w * h));
    for (auto& v : mask) v = rng.uniform() < keep ? 1 : 0;
    mask[0] = 1;
    LatentMap z(w, h, m, mask);
    for (int64_t t = 0; t < z.texels(); ++t)
        if (z.has(t))
            for (int c = 0; c < m; ++c) z.at(c, t) = static_cast<float>(rng.normal());
    return z;
}

inline Strand line_strand(const Vec3& dir, double length, int points) {
    Strand s;
    for (int k = 0; k < points; ++k) s.points.push_back(dir * (length * k / (points - 1)));
    return s;
}

}  // namespace haar::test
