// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "binio.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace haar::io {

uint32_t crc32(const uint8_t* data, size_t size) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    while (size > 0) {
        auto chunk = static_cast<uInt>(std::min<size_t>(size, 1u << 30));
        c = ::crc32(c, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<uint32_t>(c);
}

void ByteWriter::magic(std::string_view tag) {
    for (char ch : tag) buf_.push_back(static_cast<uint8_t>(ch));
}

void ByteWriter::u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v & 0xFF));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
}

void ByteWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void ByteWriter::f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u32(static_cast<uint32_t>(bits & 0xFFFFFFFFu));
    u32(static_cast<uint32_t>(bits >> 32));
}

void ByteWriter::f32s(const float* v, size_t n) {
    buf_.reserve(buf_.size() + 4 * n);
    for (size_t i = 0; i < n; ++i) f32(v[i]);
}

void ByteWriter::crc() { u32(crc32(buf_.data(), buf_.size())); }

void ByteReader::error(ErrorCode code, const std::string& msg) const {
    fail(code, what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
}

void ByteReader::need(size_t n) {
    if (pos_ + n > payload_size()) error(ErrorCode::Format, "truncated data (need " + std::to_string(n) + " more bytes)");
}

void ByteReader::magic(std::string_view tag) {
    need(tag.size());
    if (std::memcmp(buf_.data() + pos_, tag.data(), tag.size()) != 0)
        error(ErrorCode::Format, "bad magic, expected '" + std::string(tag) + "'");
    pos_ += tag.size();
}

uint8_t ByteReader::u8() {
    need(1);
    return buf_[pos_++];
}

uint16_t ByteReader::u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}

uint32_t ByteReader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
}

float ByteReader::f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double ByteReader::f64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void ByteReader::f32s(float* out, size_t n) {
    need(4 * n);
    for (size_t i = 0; i < n; ++i) out[i] = f32();
}

void ByteReader::bytes(uint8_t* out, size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
}

void ByteReader::verify_crc() {
    if (buf_.size() < 8) {
        pos_ = buf_.size();
        error(ErrorCode::Format, "truncated file (" + std::to_string(buf_.size()) + " bytes)");
    }
    size_t n = payload_size();
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(buf_[n + static_cast<size_t>(i)]) << (8 * i);
    if (crc32(buf_.data(), n) != stored) {
        pos_ = n;
        error(ErrorCode::Format, "CRC32 mismatch");
    }
}

void ByteReader::expect_end() {
    if (pos_ != payload_size()) error(ErrorCode::Format, "unexpected trailing bytes");
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::Io, "cannot open '" + path + "'");
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require(f.good(), ErrorCode::Io, "cannot write '" + tmp + "'");
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        require(f.good(), ErrorCode::Io, "write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        fail(ErrorCode::Io, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
    }
}

void write_text_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, std::vector<uint8_t>(text.begin(), text.end()));
}

}  // namespace haar::io
