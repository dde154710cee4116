#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "crovca/errors.hpp"
#include "crovca/numkit.hpp"

namespace crovca {

inline std::size_t bytes_for_bits(std::size_t bits) noexcept { return (bits + 7) / 8; }

// Row-major bit-packed binary codes. Bit j of row i lives in byte j/8 of the
// row at position j%8 (LSB first); padding bits of the last byte are zero.
// Optionally carries the pre-threshold logits for symBCE scoring.
class PackedCodeSet {
public:
    PackedCodeSet() = default;
    PackedCodeSet(std::size_t rows, std::size_t bits)
        : rows_(rows), bits_(bits), stride_(bytes_for_bits(bits)), payload_(rows * stride_, 0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t bits() const noexcept { return bits_; }
    std::size_t stride() const noexcept { return stride_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const std::uint8_t> row(std::size_t r) const noexcept { return {payload_.data() + r * stride_, stride_}; }
    std::span<std::uint8_t> mutable_row(std::size_t r) noexcept { return {payload_.data() + r * stride_, stride_}; }
    std::span<const std::uint8_t> payload() const noexcept { return payload_; }
    std::span<std::uint8_t> mutable_payload() noexcept { return payload_; }

    bool bit(std::size_t r, std::size_t j) const noexcept {
        return (payload_[r * stride_ + j / 8] >> (j % 8)) & 1u;
    }
    void set_bit(std::size_t r, std::size_t j, bool value) noexcept {
        std::uint8_t& byte = payload_[r * stride_ + j / 8];
        const auto mask = static_cast<std::uint8_t>(1u << (j % 8));
        byte = value ? static_cast<std::uint8_t>(byte | mask) : static_cast<std::uint8_t>(byte & ~mask);
    }

    bool has_logits() const noexcept { return !logits_.empty(); }
    // rows x bits, 32-bit as stored on disk.
    const std::vector<float>& logits() const noexcept { return logits_; }
    std::span<const float> logits_row(std::size_t r) const noexcept { return {logits_.data() + r * bits_, bits_}; }
    void set_logits(std::vector<float> logits) {
        if (!logits.empty() && logits.size() != rows_ * bits_) {
            throw ShapeError("PackedCodeSet: logits size " + std::to_string(logits.size()) + " != rows*bits");
        }
        logits_ = std::move(logits);
    }
    void drop_logits() noexcept { logits_.clear(); }

    bool padding_is_zero() const noexcept {
        if (bits_ % 8 == 0) return true;
        const auto mask = static_cast<std::uint8_t>(0xFFu << (bits_ % 8));
        for (std::size_t r = 0; r < rows_; ++r) {
            if (payload_[r * stride_ + stride_ - 1] & mask) return false;
        }
        return true;
    }

    friend bool operator==(const PackedCodeSet&, const PackedCodeSet&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t bits_ = 0;
    std::size_t stride_ = 0;
    std::vector<std::uint8_t> payload_;
    std::vector<float> logits_;
};

// Hamming distance between two packed rows of equal width, 64 bits at a time.
inline std::size_t hamming_packed(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw ShapeError("hamming: code widths differ");
    std::size_t dist = 0;
    std::size_t i = 0;
    for (; i + 8 <= a.size(); i += 8) {
        std::uint64_t wa, wb;
        std::memcpy(&wa, a.data() + i, 8);
        std::memcpy(&wb, b.data() + i, 8);
        dist += static_cast<std::size_t>(std::popcount(wa ^ wb));
    }
    for (; i < a.size(); ++i) dist += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(a[i] ^ b[i])));
    return dist;
}

// Packs y_j = 1{z_j >= 0} (equivalently sigmoid(z_j) >= 0.5) for each row.
inline PackedCodeSet pack_signs(const DenseMatrix& logits, bool keep_logits) {
    PackedCodeSet codes(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t j = 0; j < logits.cols(); ++j)
            if (logits(r, j) >= 0.0) codes.set_bit(r, j, true);
    if (keep_logits) {
        std::vector<float> stored(logits.size());
        for (std::size_t i = 0; i < stored.size(); ++i) stored[i] = static_cast<float>(logits.values()[i]);
        codes.set_logits(std::move(stored));
    }
    return codes;
}

} // namespace crovca
