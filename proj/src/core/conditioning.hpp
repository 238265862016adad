// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace haar {

inline constexpr int kDefaultContextTokens = 16;

enum class Provenance { Builtin, External, Null };

/// T x d_ctx context sequence, row-major.
struct PromptEmbedding {
    int tokens = 0;
    int dim = 0;
    std::vector<float> data;
    Provenance provenance = Provenance::Null;

    PromptEmbedding() = default;
    PromptEmbedding(int t, int d, Provenance p = Provenance::Null);

    static PromptEmbedding null(int t, int d) { return PromptEmbedding(t, d, Provenance::Null); }

    float& at(int t, int c) { return data[static_cast<size_t>(t) * static_cast<size_t>(dim) + static_cast<size_t>(c)]; }
    float at(int t, int c) const { return data[static_cast<size_t>(t) * static_cast<size_t>(dim) + static_cast<size_t>(c)]; }
    bool is_zero() const;

    /// Compares shape and values; provenance is informational.
    friend bool operator==(const PromptEmbedding& a, const PromptEmbedding& b) {
        return a.tokens == b.tokens && a.dim == b.dim && a.data == b.data;
    }
};

/// Lowercased text split on non-alphanumeric ASCII; bytes >= 0x80 separate too.
std::vector<std::string> tokenize(const std::string& text);

uint64_t fnv1a64(const std::string& s);

/// Token k of the first `tokens` words becomes row k: the word's FNV-1a hash
/// seeds a splitmix64 stream, Box-Muller turns it into `dim` Gaussians, and
/// the row is scaled to unit length. Unused rows are zero.
PromptEmbedding embed_text_builtin(const std::string& text, int tokens = kDefaultContextTokens, int dim = 64);

PromptEmbedding average_embeddings(const std::vector<PromptEmbedding>& list);
PromptEmbedding lerp_embeddings(const PromptEmbedding& a, const PromptEmbedding& b, double alpha);

}  // namespace haar
