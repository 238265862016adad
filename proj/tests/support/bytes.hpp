// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

namespace haar::test {

/// Bitwise CRC-32 (reflected polynomial 0xEDB88320).
inline uint32_t crc32_reference(const uint8_t* p, size_t n) {
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) {
        c ^= p[i];
        for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
    }
    return c ^ 0xFFFFFFFFu;
}

struct Bytes {
    std::vector<uint8_t> v;
    void raw(const void* p, size_t n) {
        auto* b = static_cast<const uint8_t*>(p);
        v.insert(v.end(), b, b + n);
    }
    void tag(const char* s) { raw(s, std::strlen(s)); }
    void u16(uint16_t x) {
        for (int i = 0; i < 2; ++i) v.push_back(static_cast<uint8_t>(x >> (8 * i)));
    }
    void u32(uint32_t x) {
        for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>(x >> (8 * i)));
    }
    void f32(float f) {
        uint32_t x;
        std::memcpy(&x, &f, 4);
        u32(x);
    }
    void crc() { u32(crc32_reference(v.data(), v.size())); }
};

}  // namespace haar::test
