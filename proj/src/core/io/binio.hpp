// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "../common.hpp"

namespace haar::io {

uint32_t crc32(const uint8_t* data, size_t size);

/// Little-endian byte sink for the binary asset formats.
class ByteWriter {
public:
    void magic(std::string_view tag);
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v);
    void u32(uint32_t v);
    void f32(float v);
    void f64(double v);
    void f32s(const float* v, size_t n);
    void bytes(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }
    /// Appends the CRC32 of everything written so far.
    void crc();

    const std::vector<uint8_t>& data() const { return buf_; }
    size_t size() const { return buf_.size(); }

private:
    std::vector<uint8_t> buf_;
};

/// Bounds-checked little-endian reader. Every failure names the byte offset.
class ByteReader {
public:
    /// With `crc_trailer` the last four bytes are excluded from the readable payload.
    ByteReader(const std::vector<uint8_t>& buf, std::string what, bool crc_trailer = true)
        : buf_(buf), what_(std::move(what)), crc_(crc_trailer) {}

    void magic(std::string_view tag);
    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    float f32();
    double f64();
    void f32s(float* out, size_t n);
    void bytes(uint8_t* out, size_t n);

    /// Checks the trailing CRC32 against the whole payload. Call first, before
    /// decoding fields, so corrupted files never produce partial objects.
    void verify_crc();
    /// Requires that the payload is fully consumed.
    void expect_end();

    size_t offset() const { return pos_; }
    size_t payload_size() const { return !crc_ ? buf_.size() : buf_.size() >= 4 ? buf_.size() - 4 : 0; }
    size_t remaining() const { return payload_size() - pos_; }
    [[noreturn]] void error(ErrorCode code, const std::string& msg) const;

private:
    void need(size_t n);

    const std::vector<uint8_t>& buf_;
    std::string what_;
    bool crc_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace haar::io
