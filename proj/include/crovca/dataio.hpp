#pragma once

// On-disk formats. All integers and reals are little-endian; reals are IEEE-754
// binary32 on disk and promoted to double in memory.
//
//   CVCA embeddings  "CVCA" u8 version=1 u8 dtype=1 u16 reserved=0 u64 rows u64 dim | f32[rows*dim]
//   CVLB labels      "CVLB" u8 version=1 u8 mode u8 flags u8 reserved=0 u64 rows u64 num_classes | payload
//                      mode 0: u32 per row; mode 1: ceil(num_classes/8) multi-hot bytes per row, LSB first
//                      flags bit0: multi-hot rows may be empty
//   CVCD codes       "CVCD" u8 version=1 u64 rows u64 bits u8 flags | rows*ceil(bits/8) bytes [| f32[rows*bits] logits]
//                      flags bit0: logits block present
//   CVCK checkpoint  "CVCK" u8 version=1 u8 heads(1|2) u8 activation(1=ReLU) u8 reserved=0, then per head:
//                      u64 input_dim u64 bits u64 layers u64 width f64 bn_eps f64 bn_momentum, then per layer:
//                      u64 in u64 out f32[in*out] weight f32[out] bias gamma beta running_mean running_var

#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crovca/codes.hpp"
#include "crovca/errors.hpp"
#include "crovca/hashcoder.hpp"
#include "crovca/labels.hpp"
#include "crovca/numkit.hpp"

namespace crovca {

inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kLabelSingle = 0;
inline constexpr std::uint8_t kLabelMultiHot = 1;
inline constexpr std::uint8_t kLabelAllowEmpty = 0x01;
inline constexpr std::uint8_t kCodesHaveLogits = 0x01;
inline constexpr std::uint8_t kActivationRelu = 1;

namespace io {

class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void f32_raw(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what) : data_(data), what_(std::move(what)) {}

    void expect_magic(std::string_view m) {
        need(m.size());
        if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0) {
            throw FormatError(what_ + ": bad magic (expected \"" + std::string(m) + "\")");
        }
        pos_ += m.size();
    }
    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    const std::string& what() const noexcept { return what_; }

    // Throws unless exactly `count * elem` more bytes are available, guarding overflow.
    void expect_payload(std::uint64_t count, std::uint64_t elem, bool exact) const {
        if (elem != 0 && count > std::numeric_limits<std::uint64_t>::max() / elem) {
            throw FormatError(what_ + ": payload size overflows");
        }
        const std::uint64_t total = count * elem;
        if (total > remaining()) throw FormatError(what_ + ": truncated payload");
        if (exact && total != remaining()) throw FormatError(what_ + ": trailing bytes after payload");
    }

    void expect_end() const {
        if (remaining() != 0) throw FormatError(what_ + ": trailing bytes after payload");
    }

private:
    void need(std::size_t n) const {
        if (n > remaining()) throw FormatError(what_ + ": truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return bytes;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline void check_version(ByteReader& r) {
    const auto v = r.u8();
    if (v != kFormatVersion) throw FormatError(r.what() + ": unsupported version " + std::to_string(v));
}

} // namespace io

// ---- embeddings ----------------------------------------------------------

inline std::vector<std::uint8_t> encode_embeddings(const DenseMatrix& m) {
    io::ByteWriter w;
    w.magic("CVCA");
    w.u8(kFormatVersion);
    w.u8(kDtypeF32);
    w.u16(0);
    w.u64(m.rows());
    w.u64(m.cols());
    for (double v : m.values()) w.f32(v);
    return w.take();
}

inline DenseMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes, "embedding file");
    r.expect_magic("CVCA");
    io::check_version(r);
    if (const auto dtype = r.u8(); dtype != kDtypeF32) {
        throw FormatError("embedding file: unsupported dtype " + std::to_string(dtype));
    }
    if (r.u16() != 0) throw FormatError("embedding file: reserved field must be zero");
    const std::uint64_t rows = r.u64();
    const std::uint64_t dim = r.u64();
    if (dim != 0 && rows > std::numeric_limits<std::uint64_t>::max() / dim) {
        throw FormatError("embedding file: shape overflows");
    }
    r.expect_payload(rows * dim, 4, true);
    std::vector<double> data(rows * dim);
    for (auto& v : data) {
        v = r.f32();
        if (!std::isfinite(v)) throw ValidationError("embedding file: non-finite value");
    }
    return DenseMatrix(rows, dim, std::move(data));
}

inline DenseMatrix read_embeddings(const std::string& path) {
    try {
        return decode_embeddings(io::read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void write_embeddings(const DenseMatrix& m, const std::string& path) {
    io::write_file(path, encode_embeddings(m));
}

// One row per line, comma-separated reals, '.' decimal separator, LF or CRLF.
// Blank lines are skipped.
inline DenseMatrix parse_csv_embeddings(std::string_view text) {
    std::vector<double> data;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        std::size_t count = 0;
        while (true) {
            const auto comma = line.find(',');
            std::string_view field = line.substr(0, comma);
            while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
            while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
            if (!field.empty() && field.front() == '+') field.remove_prefix(1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
                throw ValidationError("csv line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) +
                                      "'");
            }
            if (!std::isfinite(v)) throw ValidationError("csv line " + std::to_string(line_no) + ": non-finite value");
            data.push_back(v);
            ++count;
            if (comma == std::string_view::npos) break;
            line = line.substr(comma + 1);
        }
        if (rows == 0) cols = count;
        if (count != cols) {
            throw ValidationError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                                  " fields, found " + std::to_string(count));
        }
        ++rows;
    }
    return DenseMatrix(rows, cols, std::move(data));
}

inline DenseMatrix read_csv_embeddings(const std::string& path) {
    const auto bytes = io::read_file(path);
    return parse_csv_embeddings(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---- labels --------------------------------------------------------------

inline std::vector<std::uint8_t> encode_labels(const LabelSet& labels, bool allow_empty_rows = false) {
    io::ByteWriter w;
    w.magic("CVLB");
    w.u8(kFormatVersion);
    const bool multi = labels.multi_label();
    w.u8(multi ? kLabelMultiHot : kLabelSingle);
    w.u8(allow_empty_rows ? kLabelAllowEmpty : 0);
    w.u8(0);
    w.u64(labels.rows());
    w.u64(labels.num_classes());
    if (!multi) {
        for (std::size_t i = 0; i < labels.rows(); ++i) {
            if (labels[i].size() != 1) throw ValidationError("label set: single-label row without exactly one class");
            w.u32(labels[i].front());
        }
    } else {
        const std::size_t stride = bytes_for_bits(labels.num_classes());
        for (std::size_t i = 0; i < labels.rows(); ++i) {
            if (labels[i].empty() && !allow_empty_rows) throw ValidationError("label set: empty multi-hot row");
            std::vector<std::uint8_t> row(stride, 0);
            for (auto c : labels[i]) row[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
            w.raw(row);
        }
    }
    return w.take();
}

inline LabelSet decode_labels(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes, "label file");
    r.expect_magic("CVLB");
    io::check_version(r);
    const auto mode = r.u8();
    const auto flags = r.u8();
    if (mode != kLabelSingle && mode != kLabelMultiHot) {
        throw FormatError("label file: unknown mode " + std::to_string(mode));
    }
    if ((flags & ~kLabelAllowEmpty) != 0) throw FormatError("label file: unknown flag bits");
    if (r.u8() != 0) throw FormatError("label file: reserved field must be zero");
    const std::uint64_t rows = r.u64();
    const std::uint64_t num_classes = r.u64();
    if (num_classes == 0) throw FormatError("label file: num_classes must be positive");
    if (num_classes > std::numeric_limits<std::uint32_t>::max()) throw FormatError("label file: num_classes too large");
    std::vector<std::vector<std::uint32_t>> sets;
    if (mode == kLabelSingle) {
        r.expect_payload(rows, 4, true);
        sets.reserve(rows);
        for (std::uint64_t i = 0; i < rows; ++i) {
            const auto c = r.u32();
            if (c >= num_classes) throw ValidationError("label file: class id out of range at row " + std::to_string(i));
            sets.push_back({c});
        }
        return LabelSet(std::move(sets), num_classes, false);
    }
    const std::size_t stride = bytes_for_bits(num_classes);
    r.expect_payload(rows, stride, true);
    const bool allow_empty = flags & kLabelAllowEmpty;
    sets.reserve(rows);
    for (std::uint64_t i = 0; i < rows; ++i) {
        const auto row = r.raw(stride);
        std::vector<std::uint32_t> set;
        for (std::size_t c = 0; c < stride * 8; ++c) {
            if ((row[c / 8] >> (c % 8)) & 1u) {
                if (c >= num_classes) throw ValidationError("label file: padding bit set at row " + std::to_string(i));
                set.push_back(static_cast<std::uint32_t>(c));
            }
        }
        if (set.empty() && !allow_empty) throw ValidationError("label file: empty multi-hot row " + std::to_string(i));
        sets.push_back(std::move(set));
    }
    return LabelSet(std::move(sets), num_classes, true);
}

inline LabelSet read_labels(const std::string& path) { return decode_labels(io::read_file(path)); }

inline void write_labels(const LabelSet& labels, const std::string& path, bool allow_empty_rows = false) {
    io::write_file(path, encode_labels(labels, allow_empty_rows));
}

// ---- codes ---------------------------------------------------------------

inline std::vector<std::uint8_t> encode_codes(const PackedCodeSet& codes, bool with_logits) {
    if (codes.empty()) throw ValidationError("code set is empty");
    if (with_logits && !codes.has_logits()) throw CapabilityError("code set has no logits to write");
    if (!codes.padding_is_zero()) throw ValidationError("code set has non-zero padding bits");
    io::ByteWriter w;
    w.magic("CVCD");
    w.u8(kFormatVersion);
    w.u64(codes.rows());
    w.u64(codes.bits());
    w.u8(with_logits ? kCodesHaveLogits : 0);
    w.raw(codes.payload());
    if (with_logits) {
        for (float v : codes.logits()) w.f32_raw(v);
    }
    return w.take();
}

inline PackedCodeSet decode_codes(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes, "code file");
    r.expect_magic("CVCD");
    io::check_version(r);
    const std::uint64_t rows = r.u64();
    const std::uint64_t bits = r.u64();
    const auto flags = r.u8();
    if ((flags & ~kCodesHaveLogits) != 0) throw FormatError("code file: unknown flag bits");
    if (bits == 0) throw FormatError("code file: bits must be positive");
    const bool logits = flags & kCodesHaveLogits;
    const std::uint64_t stride = bytes_for_bits(bits);
    r.expect_payload(rows, stride, !logits);
    if (logits) {
        // payload then rows*bits floats
        if (bits > std::numeric_limits<std::uint64_t>::max() / 4 || rows > std::numeric_limits<std::uint64_t>::max() / (bits * 4)) {
            throw FormatError("code file: logits block size overflows");
        }
        if (rows * stride + rows * bits * 4 != r.remaining()) throw FormatError("code file: truncated or oversized logits block");
    }
    PackedCodeSet codes(rows, bits);
    const auto payload = r.raw(rows * stride);
    std::copy(payload.begin(), payload.end(), codes.mutable_payload().begin());
    if (!codes.padding_is_zero()) throw ValidationError("code file: non-zero padding bits");
    if (logits) {
        std::vector<float> values(rows * bits);
        for (auto& v : values) {
            v = r.f32();
            if (!std::isfinite(v)) throw ValidationError("code file: non-finite logit");
        }
        codes.set_logits(std::move(values));
    }
    r.expect_end();
    return codes;
}

inline PackedCodeSet read_codes(const std::string& path) { return decode_codes(io::read_file(path)); }

inline void write_codes(const PackedCodeSet& codes, bool with_logits, const std::string& path) {
    io::write_file(path, encode_codes(codes, with_logits));
}

// ---- checkpoints ---------------------------------------------------------

inline std::vector<std::uint8_t> encode_checkpoint(const CodeModel& model) {
    if (model.heads.empty() || model.heads.size() > 2) throw ValidationError("checkpoint: model must have 1 or 2 heads");
    io::ByteWriter w;
    w.magic("CVCK");
    w.u8(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(model.heads.size()));
    w.u8(kActivationRelu);
    w.u8(0);
    for (const auto& head : model.heads) {
        const auto& cfg = head.config();
        w.u64(cfg.input_dim);
        w.u64(cfg.bits);
        w.u64(cfg.layers);
        w.u64(cfg.width);
        w.f64(cfg.bn_eps);
        w.f64(cfg.bn_momentum);
        for (const auto& b : head.blocks()) {
            w.u64(b.in_dim());
            w.u64(b.out_dim());
            for (double v : b.weight.values()) w.f32(v);
            for (const auto* vec : {&b.bias, &b.gamma, &b.beta, &b.running_mean, &b.running_var})
                for (double v : *vec) w.f32(v);
        }
    }
    return w.take();
}

inline CodeModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes, "checkpoint");
    r.expect_magic("CVCK");
    io::check_version(r);
    const auto heads = r.u8();
    if (heads != 1 && heads != 2) throw FormatError("checkpoint: head count must be 1 or 2");
    if (r.u8() != kActivationRelu) throw FormatError("checkpoint: unknown activation tag");
    if (r.u8() != 0) throw FormatError("checkpoint: reserved field must be zero");
    CodeModel model;
    for (int h = 0; h < heads; ++h) {
        HashCoderConfig cfg;
        cfg.input_dim = r.u64();
        cfg.bits = r.u64();
        cfg.layers = r.u64();
        cfg.width = r.u64();
        cfg.bn_eps = r.f64();
        cfg.bn_momentum = r.f64();
        if (cfg.layers != 2 && cfg.layers != 3) throw FormatError("checkpoint: layers must be 2 or 3");
        if (cfg.input_dim == 0 || cfg.bits == 0 || cfg.width == 0) throw FormatError("checkpoint: zero dimension");
        if (!(cfg.bn_eps > 0.0) || !std::isfinite(cfg.bn_eps) || !(cfg.bn_momentum >= 0.0 && cfg.bn_momentum <= 1.0)) {
            throw FormatError("checkpoint: invalid BatchNorm constants");
        }
        std::vector<DenseBlock> blocks;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::uint64_t in = r.u64();
            const std::uint64_t out = r.u64();
            const std::uint64_t want_in = l == 0 ? cfg.input_dim : cfg.width;
            const std::uint64_t want_out = l + 1 == cfg.layers ? cfg.bits : cfg.width;
            if (in != want_in || out != want_out) throw FormatError("checkpoint: layer dims do not match header");
            if (out > std::numeric_limits<std::uint64_t>::max() / 8 || in > std::numeric_limits<std::uint64_t>::max() / (out * 4)) {
                throw FormatError("checkpoint: layer size overflows");
            }
            r.expect_payload(in * out + 5 * out, 4, false);
            DenseBlock b;
            std::vector<double> weights(in * out);
            for (auto& v : weights) v = r.f32();
            b.weight = DenseMatrix(in, out, std::move(weights));
            for (auto* vec : {&b.bias, &b.gamma, &b.beta, &b.running_mean, &b.running_var}) {
                vec->resize(out);
                for (auto& v : *vec) v = r.f32();
            }
            b.relu = l + 1 != cfg.layers;
            blocks.push_back(std::move(b));
        }
        HashCoder head;
        try {
            head = HashCoder::from_blocks(cfg, std::move(blocks));
        } catch (const ValidationError& e) {
            throw FormatError(std::string("checkpoint: ") + e.what());
        }
        if (!head.parameters_finite()) throw ValidationError("checkpoint: non-finite parameter");
        model.heads.push_back(std::move(head));
    }
    r.expect_end();
    if (model.heads.size() == 2 && model.heads[0].bits() != model.heads[1].bits()) {
        throw FormatError("checkpoint: dual heads must share the code length");
    }
    return model;
}

inline CodeModel read_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

inline void write_checkpoint(const CodeModel& model, const std::string& path) {
    io::write_file(path, encode_checkpoint(model));
}

// The model as it will look after a checkpoint round trip (reals rounded to binary32).
inline CodeModel round_to_storage(const CodeModel& model) { return decode_checkpoint(encode_checkpoint(model)); }

} // namespace crovca
