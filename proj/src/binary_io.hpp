#pragma once

// Little-endian primitives shared by the dataset and checkpoint formats.

#include "thzdiff/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace thz::detail {

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.append(s); }

    template <typename U>
    void unsigned_le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u32(std::uint32_t v) { unsigned_le(v); }
    void u64(std::uint64_t v) { unsigned_le(v); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    const std::string& data() const noexcept { return out_; }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(std::string_view data, std::string context) : data_(data), context_(std::move(context)) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    template <typename U>
    U unsigned_le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return v;
    }
    std::uint32_t u32() { return unsigned_le<std::uint32_t>(); }
    std::uint64_t u64() { return unsigned_le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError(context_ + ": truncated file");
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
    std::string context_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace thz::detail
