// SPDX-License-Identifier: Apache-2.0
// Little-endian primitive encoding for the binary file formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "krisk/error.hpp"

namespace krisk::detail {

class ByteWriter {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    template <typename T>
    void le(T value) {
        static_assert(std::is_integral_v<T> && std::is_unsigned_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
        }
    }
    void f32(float value) { le(std::bit_cast<std::uint32_t>(value)); }

    [[nodiscard]] std::vector<std::uint8_t> take() && { return std::move(buf_); }
    void reserve(std::size_t n) { buf_.reserve(n); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated");
    }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    template <typename T>
    T le() {
        auto b = bytes(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(b[i]) << (8 * i);
        return value;
    }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }

    [[nodiscard]] std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

}  // namespace krisk::detail
