#pragma once

// Construction of paired views (x1, x2) from embedding matrices:
//   - precomputed pairs: two row-aligned files from an external augmentation pipeline
//   - embedding augmentation: Gaussian noise + coordinate dropout applied per view
//   - class batch mean: x2 is the mean of the batch rows sharing x1's label
//   - dual stream: x1 and x2 come from two modalities, routed to separate heads

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crovca/errors.hpp"
#include "crovca/labels.hpp"
#include "crovca/numkit.hpp"

namespace crovca {

enum class PairingMode { precomputed_pairs, embedding_augmentation, class_batch_mean, dual_stream };

inline const char* to_string(PairingMode m) noexcept {
    switch (m) {
    case PairingMode::precomputed_pairs: return "precomputed-pairs";
    case PairingMode::embedding_augmentation: return "embedding-augmentation";
    case PairingMode::class_batch_mean: return "class-batch-mean";
    case PairingMode::dual_stream: return "dual-stream";
    }
    return "?";
}

inline constexpr double kDefaultNoiseFraction = 0.1;

struct PairingConfig {
    PairingMode mode = PairingMode::embedding_augmentation;
    // Absolute noise std; unset means kDefaultNoiseFraction * RMS of the embedding entries.
    std::optional<double> noise_sigma;
    double dropout_rate = 0.1;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    // Apply the augmentation to view 1 in class-batch-mean mode as well.
    bool augment_supervised = false;

    void validate() const {
        if (noise_sigma && (!std::isfinite(*noise_sigma) || *noise_sigma < 0.0)) {
            throw ConfigError("noise sigma must be >= 0");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
        if (batch_size < 2) throw ConfigError("batch size must be >= 2");
        if (mode == PairingMode::embedding_augmentation && noise_sigma && *noise_sigma == 0.0 && dropout_rate == 0.0) {
            throw ConfigError("embedding augmentation needs noise sigma > 0 or dropout rate > 0");
        }
    }
};

struct PairBatch {
    DenseMatrix view1;
    DenseMatrix view2;
    std::vector<std::size_t> indices;
    std::optional<std::vector<std::uint32_t>> labels;
    // 1-based head ids for view1 and view2.
    std::pair<int, int> heads{1, 1};

    std::size_t size() const noexcept { return view1.rows(); }
};

inline double embedding_rms(const DenseMatrix& m) {
    if (m.empty()) return 0.0;
    double sq = 0.0;
    for (double v : m.values()) sq += v * v;
    return std::sqrt(sq / static_cast<double>(m.size()));
}

inline double resolve_noise_sigma(const PairingConfig& cfg, const DenseMatrix& source) {
    return cfg.noise_sigma ? *cfg.noise_sigma : kDefaultNoiseFraction * embedding_rms(source);
}

// One epoch of shuffled index batches. A trailing batch smaller than 2 rows
// is dropped; concatenated batches otherwise form a permutation of [0, rows).
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t rows, std::size_t batch_size, Rng& rng) {
    if (rows < 2) throw ValidationError("dataset needs at least 2 rows");
    if (batch_size < 2) throw ConfigError("batch size must be >= 2");
    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < rows; start += batch_size) {
        const std::size_t end = std::min(rows, start + batch_size);
        if (end - start < 2) break;
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

inline DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> idx) {
    DenseMatrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= m.rows()) throw ShapeError("gather_rows: index out of range");
        const auto src = m.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

// x + sigma * N(0, 1), then each coordinate zeroed with probability `dropout`.
inline void augment_inplace(DenseMatrix& m, double sigma, double dropout, Rng& rng) {
    for (double& v : m.values()) {
        if (sigma > 0.0) v += sigma * rng.normal();
        if (dropout > 0.0 && rng.uniform() < dropout) v = 0.0;
    }
}

inline PairBatch make_unsupervised_batch(const DenseMatrix& source, const DenseMatrix* paired,
                                         std::span<const std::size_t> idx, const PairingConfig& cfg, Rng& rng) {
    PairBatch batch;
    batch.indices.assign(idx.begin(), idx.end());
    switch (cfg.mode) {
    case PairingMode::precomputed_pairs:
        if (paired == nullptr) throw ConfigError("precomputed pairs need a second embedding file");
        if (paired->rows() != source.rows()) {
            throw ValidationError("paired embedding files have " + std::to_string(source.rows()) + " and " +
                                  std::to_string(paired->rows()) + " rows");
        }
        if (paired->cols() != source.cols()) throw ValidationError("paired embedding files differ in dimension");
        batch.view1 = gather_rows(source, idx);
        batch.view2 = gather_rows(*paired, idx);
        return batch;
    case PairingMode::embedding_augmentation: {
        const double sigma = resolve_noise_sigma(cfg, source);
        batch.view1 = gather_rows(source, idx);
        batch.view2 = batch.view1;
        augment_inplace(batch.view1, sigma, cfg.dropout_rate, rng);
        augment_inplace(batch.view2, sigma, cfg.dropout_rate, rng);
        return batch;
    }
    default:
        throw ConfigError(std::string("unsupervised batch requested in mode ") + to_string(cfg.mode));
    }
}

inline PairBatch make_supervised_batch(const DenseMatrix& source, const LabelSet* labels,
                                       std::span<const std::size_t> idx, const PairingConfig& cfg, Rng& rng) {
    if (cfg.mode != PairingMode::class_batch_mean) {
        throw ConfigError(std::string("supervised batch requested in mode ") + to_string(cfg.mode));
    }
    if (labels == nullptr) throw ConfigError("supervised pairing requires labels");
    if (labels->rows() != source.rows()) throw ValidationError("label count does not match embedding rows");
    if (!labels->is_single_label()) throw ConfigError("supervised pairing is defined for single-label data only");

    PairBatch batch;
    batch.indices.assign(idx.begin(), idx.end());
    batch.view1 = gather_rows(source, idx);
    if (cfg.augment_supervised) {
        augment_inplace(batch.view1, resolve_noise_sigma(cfg, source), cfg.dropout_rate, rng);
    }
    std::vector<std::uint32_t> batch_labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = (*labels)[idx[i]].front();

    const std::size_t d = source.cols();
    std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> sums;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto& [sum, count] = sums[batch_labels[i]];
        if (sum.empty()) sum.assign(d, 0.0);
        const auto r = batch.view1.row(i);
        for (std::size_t j = 0; j < d; ++j) sum[j] += r[j];
        ++count;
    }
    batch.view2 = DenseMatrix(idx.size(), d);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& [sum, count] = sums.at(batch_labels[i]);
        auto out = batch.view2.row(i);
        for (std::size_t j = 0; j < d; ++j) out[j] = sum[j] / static_cast<double>(count);
    }
    batch.labels = std::move(batch_labels);
    return batch;
}

inline PairBatch make_dualstream_batch(const DenseMatrix& stream_a, const DenseMatrix& stream_b,
                                       std::span<const std::size_t> idx, const PairingConfig& cfg,
                                       std::size_t head_count) {
    if (cfg.mode != PairingMode::dual_stream) {
        throw ConfigError(std::string("dual-stream batch requested in mode ") + to_string(cfg.mode));
    }
    if (head_count != 2) throw ConfigError("dual-stream pairing requires a dual-head model");
    if (stream_a.rows() != stream_b.rows()) {
        throw ValidationError("dual streams have " + std::to_string(stream_a.rows()) + " and " +
                              std::to_string(stream_b.rows()) + " rows");
    }
    PairBatch batch;
    batch.indices.assign(idx.begin(), idx.end());
    batch.view1 = gather_rows(stream_a, idx);
    batch.view2 = gather_rows(stream_b, idx);
    batch.heads = {1, 2};
    return batch;
}

} // namespace crovca
