// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "conditioning.hpp"

#include <algorithm>
#include <cmath>

namespace haar {

PromptEmbedding::PromptEmbedding(int t, int d, Provenance p) : tokens(t), dim(d), provenance(p) {
    require(t >= 1 && d >= 1, ErrorCode::InvalidArgument, "embedding needs T >= 1 and d_ctx >= 1");
    data.assign(static_cast<size_t>(t) * static_cast<size_t>(d), 0.0f);
}

bool PromptEmbedding::is_zero() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return v == 0.0f; });
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char ch : text) {
        bool alnum = (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z');
        if (alnum) {
            cur.push_back(static_cast<char>(ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

PromptEmbedding embed_text_builtin(const std::string& text, int tokens, int dim) {
    PromptEmbedding e(tokens, dim, Provenance::Builtin);
    auto words = tokenize(text);
    if (words.empty()) {
        e.provenance = Provenance::Null;
        return e;
    }
    std::vector<double> row(static_cast<size_t>(dim));
    for (int k = 0; k < tokens && k < static_cast<int>(words.size()); ++k) {
        Rng rng(fnv1a64(words[static_cast<size_t>(k)]));
        double sq = 0;
        for (auto& v : row) {
            v = rng.normal();
            sq += v * v;
        }
        double inv = 1.0 / std::sqrt(sq);
        for (int c = 0; c < dim; ++c) e.at(k, c) = static_cast<float>(row[static_cast<size_t>(c)] * inv);
    }
    return e;
}

PromptEmbedding average_embeddings(const std::vector<PromptEmbedding>& list) {
    require(!list.empty(), ErrorCode::InvalidArgument, "average_embeddings: empty list");
    const auto& first = list.front();
    PromptEmbedding out(first.tokens, first.dim, Provenance::External);
    std::vector<double> acc(out.data.size(), 0.0);
    for (size_t i = 0; i < list.size(); ++i) {
        const auto& e = list[i];
        require(e.tokens == first.tokens && e.dim == first.dim, ErrorCode::Shape,
                "average_embeddings: embedding " + std::to_string(i) + " is " + std::to_string(e.tokens) + "x" +
                    std::to_string(e.dim) + ", expected " + std::to_string(first.tokens) + "x" + std::to_string(first.dim));
        for (size_t j = 0; j < acc.size(); ++j) acc[j] += e.data[j];
    }
    for (size_t j = 0; j < acc.size(); ++j) out.data[j] = static_cast<float>(acc[j] / static_cast<double>(list.size()));
    bool same = std::all_of(list.begin(), list.end(), [&](const PromptEmbedding& e) { return e.provenance == first.provenance; });
    out.provenance = same ? first.provenance : Provenance::External;
    if (out.is_zero()) out.provenance = Provenance::Null;
    return out;
}

PromptEmbedding lerp_embeddings(const PromptEmbedding& a, const PromptEmbedding& b, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument, "lerp_embeddings: alpha must lie in [0,1]");
    require(a.tokens == b.tokens && a.dim == b.dim, ErrorCode::Shape, "lerp_embeddings: shape mismatch");
    if (alpha == 0.0) return a;
    if (alpha == 1.0) return b;
    PromptEmbedding out(a.tokens, a.dim, Provenance::External);
    for (size_t j = 0; j < out.data.size(); ++j)
        out.data[j] = static_cast<float>((1.0 - alpha) * a.data[j] + alpha * b.data[j]);
    if (out.is_zero()) out.provenance = Provenance::Null;
    return out;
}

}  // namespace haar
