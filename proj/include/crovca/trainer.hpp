#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "crovca/adamw.hpp"
#include "crovca/codes.hpp"
#include "crovca/errors.hpp"
#include "crovca/hashcoder.hpp"
#include "crovca/labels.hpp"
#include "crovca/numkit.hpp"
#include "crovca/objective.hpp"
#include "crovca/pairing.hpp"

namespace crovca {

enum class Variant { small, large };

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 256;
    std::size_t bits = 16;
    std::size_t layers = 2;
    std::size_t width = 512;
    AdamWConfig optimizer{};
    DiversityConfig diversity{};
    std::uint64_t seed = 0;

    // Small: 2 layers, width 512, lr 1e-3, wd 1e-2. Large: 3 layers, width 2048, lr 1e-4, wd 1e-4.
    static TrainConfig for_variant(Variant v) {
        TrainConfig cfg;
        if (v == Variant::large) {
            cfg.layers = 3;
            cfg.width = 2048;
            cfg.optimizer.lr = 1e-4;
            cfg.optimizer.weight_decay = 1e-4;
        }
        return cfg;
    }

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("batch size must be >= 2");
        if (bits < 1) throw ConfigError("bits must be >= 1");
        if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
        diversity.validate();
    }
};

// Inputs to training. `secondary` is the second view file (precomputed pairs)
// or the second modality (dual stream); `labels` drives class-batch-mean pairing.
struct TrainData {
    const DenseMatrix* primary = nullptr;
    const DenseMatrix* secondary = nullptr;
    const LabelSet* labels = nullptr;
};

struct StepLog {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double align = 0.0;
    double div = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double align = 0.0;
    double div = 0.0;
    double total = 0.0;
    // Fraction of view-1 rows with each bit set, over the epoch.
    std::vector<double> bit_rates;
};

struct TrainResult {
    CodeModel model;
    std::vector<StepLog> steps;
    std::vector<EpochLog> epochs;
};

inline std::string format_step(const StepLog& s) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "step epoch=%zu step=%zu align=%.17g div=%.17g total=%.17g", s.epoch, s.step,
                  s.align, s.div, s.total);
    return buf;
}

inline std::string format_epoch(const EpochLog& e) {
    double lo = 1.0, hi = 0.0;
    for (double r : e.bit_rates) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    char buf[224];
    std::snprintf(buf, sizeof buf, "epoch epoch=%zu align=%.9g div=%.9g total=%.9g bit_rate_min=%.4f bit_rate_max=%.4f",
                  e.epoch, e.align, e.div, e.total, lo, hi);
    return buf;
}

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (stream * 0xD1B54A32D192ED03ULL));
    return r.next_u64();
}

} // namespace detail

using StepObserver = std::function<void(const StepLog&)>;

inline TrainResult train(const TrainData& data, PairingConfig pairing, const TrainConfig& cfg,
                         const StepObserver& on_step = {}) {
    cfg.validate();
    if (data.primary == nullptr || data.primary->rows() == 0) throw ValidationError("training data is empty");
    pairing.batch_size = cfg.batch_size;
    pairing.seed = cfg.seed;
    pairing.validate();

    const DenseMatrix& primary = *data.primary;
    const bool dual = pairing.mode == PairingMode::dual_stream;
    if ((pairing.mode == PairingMode::precomputed_pairs || dual) && data.secondary == nullptr) {
        throw ConfigError(std::string(to_string(pairing.mode)) + " mode needs a second embedding file");
    }
    if (data.secondary != nullptr && data.secondary->rows() != primary.rows()) {
        throw ValidationError("paired embedding files differ in row count");
    }
    if (pairing.mode == PairingMode::class_batch_mean) {
        if (data.labels == nullptr) throw ConfigError("supervised mode requires labels");
        if (data.labels->rows() != primary.rows()) throw ValidationError("label count does not match embedding rows");
        if (!data.labels->is_single_label()) throw ConfigError("supervised pairing is defined for single-label data only");
    }
    if (pairing.mode == PairingMode::embedding_augmentation || pairing.augment_supervised) {
        pairing.noise_sigma = resolve_noise_sigma(pairing, primary);
    }

    Rng init_rng(detail::derive_seed(cfg.seed, 1));
    Rng shuffle_rng(detail::derive_seed(cfg.seed, 2));
    Rng augment_rng(detail::derive_seed(cfg.seed, 3));

    HashCoderConfig head_cfg;
    head_cfg.input_dim = primary.cols();
    head_cfg.bits = cfg.bits;
    head_cfg.layers = cfg.layers;
    head_cfg.width = cfg.width;

    TrainResult result;
    result.model.heads.push_back(HashCoder::init(head_cfg, init_rng));
    if (dual) {
        HashCoderConfig second = head_cfg;
        second.input_dim = data.secondary->cols();
        result.model.heads.push_back(HashCoder::init(second, init_rng));
    }
    std::vector<AdamW> optimizers(result.model.heads.size(), AdamW(cfg.optimizer));

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto batches = epoch_batches(primary.rows(), cfg.batch_size, shuffle_rng);
        EpochLog elog;
        elog.epoch = epoch;
        elog.bit_rates.assign(cfg.bits, 0.0);
        std::size_t seen = 0;
        std::size_t step_in_epoch = 0;
        for (const auto& idx : batches) {
            PairBatch batch;
            switch (pairing.mode) {
            case PairingMode::precomputed_pairs:
            case PairingMode::embedding_augmentation:
                batch = make_unsupervised_batch(primary, data.secondary, idx, pairing, augment_rng);
                break;
            case PairingMode::class_batch_mean:
                batch = make_supervised_batch(primary, data.labels, idx, pairing, augment_rng);
                break;
            case PairingMode::dual_stream:
                batch = make_dualstream_batch(primary, *data.secondary, idx, pairing, result.model.heads.size());
                break;
            }

            HashCoder& head1 = result.model.head(static_cast<std::size_t>(batch.heads.first - 1));
            HashCoder& head2 = result.model.head(static_cast<std::size_t>(batch.heads.second - 1));
            auto [z1, cache1] = head1.forward_train(batch.view1);
            auto [z2, cache2] = head2.forward_train(batch.view2);
            const LossBreakdown loss = crovca_loss(z1, z2, cfg.diversity);

            // grad_input is discarded: the backbone is frozen.
            HashCoderGrads g1 = head1.backward(cache1, loss.grad_z1);
            HashCoderGrads g2 = head2.backward(cache2, loss.grad_z2);
            if (&head1 == &head2) {
                g1 += g2;
                optimizers[0].step(head1.parameter_slots(g1));
                head1.touch();
            } else {
                optimizers[0].step(head1.parameter_slots(g1, "head1."));
                optimizers[1].step(head2.parameter_slots(g2, "head2."));
                head1.touch();
                head2.touch();
            }
            for (const auto& h : result.model.heads) {
                if (!h.parameters_finite()) throw NumericalError("training produced non-finite parameters");
            }

            StepLog slog{epoch, ++step_in_epoch, loss.align, loss.div, loss.total, cfg.diversity.lambda};
            result.steps.push_back(slog);
            if (on_step) on_step(slog);

            const double rows = static_cast<double>(batch.size());
            elog.align += loss.align * rows;
            elog.div += loss.div * rows;
            elog.total += loss.total * rows;
            for (std::size_t i = 0; i < z1.rows(); ++i)
                for (std::size_t j = 0; j < cfg.bits; ++j)
                    if (z1(i, j) >= 0.0) elog.bit_rates[j] += 1.0;
            seen += batch.size();
        }
        if (seen > 0) {
            const double n = static_cast<double>(seen);
            elog.align /= n;
            elog.div /= n;
            elog.total /= n;
            for (double& r : elog.bit_rates) r /= n;
        }
        result.epochs.push_back(std::move(elog));
    }
    return result;
}

// Eval-mode logits for every row, computed in chunks.
inline DenseMatrix compute_logits(const HashCoder& head, const DenseMatrix& embeddings, std::size_t chunk = 1024) {
    if (embeddings.cols() != head.input_dim()) {
        throw ShapeError("encode: embeddings have " + std::to_string(embeddings.cols()) + " columns, model expects " +
                         std::to_string(head.input_dim()));
    }
    if (chunk < 1) throw ConfigError("encode: chunk size must be >= 1");
    DenseMatrix logits(embeddings.rows(), head.bits());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < embeddings.rows(); start += chunk) {
        const std::size_t end = std::min(embeddings.rows(), start + chunk);
        idx.clear();
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        const DenseMatrix z = head.forward_eval(gather_rows(embeddings, idx));
        std::copy(z.values().begin(), z.values().end(), logits.values().begin() + static_cast<std::ptrdiff_t>(start * head.bits()));
    }
    return logits;
}

inline PackedCodeSet encode(const HashCoder& head, const DenseMatrix& embeddings, bool emit_logits,
                            std::size_t chunk = 1024) {
    if (embeddings.rows() == 0) throw ValidationError("encode: no rows");
    return pack_signs(compute_logits(head, embeddings, chunk), emit_logits);
}

} // namespace crovca
