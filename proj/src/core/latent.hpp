// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "common.hpp"

namespace haar {

/// W x H grid of M-channel latents with a presence mask. Storage is dense and
/// channel-major, (M, H, W); masked-out texels hold zeros.
class LatentMap {
public:
    LatentMap() = default;
    LatentMap(int width, int height, int channels, std::vector<uint8_t> mask)
        : width_(width), height_(height), channels_(channels), mask_(std::move(mask)) {
        require(width > 0 && height > 0 && channels > 0, ErrorCode::InvalidArgument, "latent map needs positive extent");
        require(static_cast<int64_t>(mask_.size()) == texels(), ErrorCode::Shape, "latent map mask size mismatch");
        for (auto& m : mask_) m = m ? 1 : 0;
        data_.assign(static_cast<size_t>(channels_ * texels()), 0.0f);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    int64_t texels() const { return static_cast<int64_t>(width_) * height_; }
    int64_t index(int i, int j) const { return static_cast<int64_t>(j) * width_ + i; }
    const std::vector<uint8_t>& mask() const { return mask_; }
    bool has(int64_t texel) const { return mask_[static_cast<size_t>(texel)] != 0; }
    int64_t valid_count() const {
        int64_t n = 0;
        for (auto m : mask_) n += m;
        return n;
    }

    float& at(int c, int64_t texel) { return data_[static_cast<size_t>(c * texels() + texel)]; }
    float at(int c, int64_t texel) const { return data_[static_cast<size_t>(c * texels() + texel)]; }

    std::vector<float> latent(int64_t texel) const {
        std::vector<float> z(static_cast<size_t>(channels_));
        for (int c = 0; c < channels_; ++c) z[static_cast<size_t>(c)] = at(c, texel);
        return z;
    }
    void set_latent(int64_t texel, const float* z) {
        for (int c = 0; c < channels_; ++c) at(c, texel) = z[c];
    }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    /// Zeros every masked-out texel.
    void apply_mask() {
        for (int c = 0; c < channels_; ++c)
            for (int64_t t = 0; t < texels(); ++t)
                if (!mask_[static_cast<size_t>(t)]) at(c, t) = 0.0f;
    }

    friend bool operator==(const LatentMap& a, const LatentMap& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ && a.mask_ == b.mask_ &&
               a.data_ == b.data_;
    }

private:
    int width_ = 0, height_ = 0, channels_ = 0;
    std::vector<uint8_t> mask_;
    std::vector<float> data_;
};

}  // namespace haar
