#pragma once

// HashCoder: an MLP head mapping embeddings to per-bit logits.
//
//   hidden block:  Linear -> BatchNorm -> ReLU
//   output block:  Linear -> BatchNorm        (b logits, no activation)
//
// The final BatchNorm keeps every logit column centred on the batch, which is
// what balances bit usage after thresholding at zero.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crovca/errors.hpp"
#include "crovca/numkit.hpp"

namespace crovca {

struct HashCoderConfig {
    std::size_t input_dim = 0;
    std::size_t bits = 0;
    // Number of Linear layers, counting the output layer.
    std::size_t layers = 2;
    std::size_t width = 512;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

struct DenseBlock {
    DenseMatrix weight;  // in x out
    std::vector<double> bias;
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    bool relu = false;

    std::size_t in_dim() const noexcept { return weight.rows(); }
    std::size_t out_dim() const noexcept { return weight.cols(); }

    friend bool operator==(const DenseBlock&, const DenseBlock&) = default;
};

struct BlockCache {
    DenseMatrix input;
    DenseMatrix xhat;
    DenseMatrix bn_out;  // after gamma/beta, before ReLU
    std::vector<double> inv_std;
};

class HashCoder;

struct ForwardCache {
    const HashCoder* owner = nullptr;
    std::uint64_t version = 0;
    std::vector<BlockCache> blocks;
};

struct BlockGrads {
    DenseMatrix weight;
    std::vector<double> bias;
    std::vector<double> gamma;
    std::vector<double> beta;
};

struct HashCoderGrads {
    std::vector<BlockGrads> blocks;
    DenseMatrix input;

    HashCoderGrads& operator+=(const HashCoderGrads& other) {
        if (other.blocks.size() != blocks.size()) throw ShapeError("HashCoderGrads: block count mismatch");
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            auto add = [](std::span<double> dst, std::span<const double> src) {
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            };
            add(blocks[l].weight.values(), other.blocks[l].weight.values());
            add(blocks[l].bias, other.blocks[l].bias);
            add(blocks[l].gamma, other.blocks[l].gamma);
            add(blocks[l].beta, other.blocks[l].beta);
        }
        return *this;
    }
};

// A trainable tensor paired with its gradient, as seen by the optimizer.
struct ParamSlot {
    std::string name;
    std::span<double> value;
    std::span<const double> grad;
    bool decay = true;
};

namespace detail {

inline void batchnorm_train(const DenseMatrix& a, DenseBlock& block, double eps, double momentum, bool update_stats,
                            BlockCache& cache) {
    const std::size_t rows = a.rows();
    const std::size_t cols = a.cols();
    const double inv_n = 1.0 / static_cast<double>(rows);
    std::vector<double> mean(cols, 0.0);
    std::vector<double> var(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) mean[j] += a(i, j);
    for (auto& m : mean) m *= inv_n;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const double c = a(i, j) - mean[j];
            var[j] += c * c;
        }
    for (auto& v : var) v *= inv_n;

    cache.inv_std.resize(cols);
    for (std::size_t j = 0; j < cols; ++j) cache.inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    cache.xhat = DenseMatrix(rows, cols);
    cache.bn_out = DenseMatrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const double xh = (a(i, j) - mean[j]) * cache.inv_std[j];
            cache.xhat(i, j) = xh;
            cache.bn_out(i, j) = block.gamma[j] * xh + block.beta[j];
        }

    if (update_stats) {
        // Running variance tracks the unbiased estimate; normalization uses the biased one.
        const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
        for (std::size_t j = 0; j < cols; ++j) {
            block.running_mean[j] = (1.0 - momentum) * block.running_mean[j] + momentum * mean[j];
            block.running_var[j] = (1.0 - momentum) * block.running_var[j] + momentum * var[j] * unbias;
        }
    }
}

} // namespace detail

class HashCoder {
public:
    HashCoder() = default;

    // Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases, identity BatchNorm.
    static HashCoder init(const HashCoderConfig& cfg, Rng& rng) {
        if (cfg.input_dim < 1 || cfg.bits < 1) throw ConfigError("HashCoder: input_dim and bits must be >= 1");
        if (cfg.layers != 2 && cfg.layers != 3) throw ConfigError("HashCoder: layers must be 2 or 3");
        if (cfg.width < 1) throw ConfigError("HashCoder: width must be >= 1");
        if (!(cfg.bn_eps > 0.0) || !(cfg.bn_momentum >= 0.0 && cfg.bn_momentum <= 1.0)) {
            throw ConfigError("HashCoder: invalid BatchNorm eps/momentum");
        }
        HashCoder model;
        model.cfg_ = cfg;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::size_t in = l == 0 ? cfg.input_dim : cfg.width;
            const bool last = l + 1 == cfg.layers;
            const std::size_t out = last ? cfg.bits : cfg.width;
            DenseBlock block;
            block.weight = DenseMatrix(in, out);
            const double bound = std::sqrt(6.0 / static_cast<double>(in));
            for (double& w : block.weight.values()) w = rng.uniform(-bound, bound);
            block.bias.assign(out, 0.0);
            block.gamma.assign(out, 1.0);
            block.beta.assign(out, 0.0);
            block.running_mean.assign(out, 0.0);
            block.running_var.assign(out, 1.0);
            block.relu = !last;
            model.blocks_.push_back(std::move(block));
        }
        return model;
    }

    // Used by checkpoint decoding; validates that the blocks chain correctly.
    static HashCoder from_blocks(const HashCoderConfig& cfg, std::vector<DenseBlock> blocks) {
        if (blocks.size() != cfg.layers) throw ValidationError("HashCoder: block count does not match layers");
        std::size_t in = cfg.input_dim;
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            const auto& b = blocks[l];
            const std::size_t out = b.out_dim();
            if (b.in_dim() != in || b.bias.size() != out || b.gamma.size() != out || b.beta.size() != out ||
                b.running_mean.size() != out || b.running_var.size() != out) {
                throw ValidationError("HashCoder: inconsistent dims in block " + std::to_string(l));
            }
            for (double v : b.running_var) {
                if (!(v > 0.0)) throw ValidationError("HashCoder: running variance must be positive");
            }
            in = out;
        }
        if (in != cfg.bits) throw ValidationError("HashCoder: output width does not equal bits");
        HashCoder model;
        model.cfg_ = cfg;
        model.blocks_ = std::move(blocks);
        return model;
    }

    const HashCoderConfig& config() const noexcept { return cfg_; }
    std::size_t input_dim() const noexcept { return cfg_.input_dim; }
    std::size_t bits() const noexcept { return cfg_.bits; }
    const std::vector<DenseBlock>& blocks() const noexcept { return blocks_; }

    std::uint64_t version() const noexcept { return version_; }
    // Invalidates outstanding caches; called after any parameter update.
    void touch() noexcept { ++version_; }

    // Train-mode forward: batch statistics, optional running-stat update.
    std::pair<DenseMatrix, ForwardCache> forward_train(const DenseMatrix& x, bool update_running_stats = true) {
        check_input(x);
        if (x.rows() < 2) throw BatchSizeError("HashCoder: train-mode forward needs a batch of at least 2 rows");
        ForwardCache cache;
        cache.owner = this;
        cache.version = version_;
        cache.blocks.resize(blocks_.size());
        DenseMatrix h = x;
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            auto& block = blocks_[l];
            auto& bc = cache.blocks[l];
            DenseMatrix a = matmul(h, block.weight);
            add_bias(a, block.bias);
            detail::batchnorm_train(a, block, cfg_.bn_eps, cfg_.bn_momentum, update_running_stats, bc);
            bc.input = std::move(h);
            h = bc.bn_out;
            if (block.relu) relu_inplace(h);
        }
        detail::require_finite(h, "HashCoder::forward_train");
        return {std::move(h), std::move(cache)};
    }

    // Eval-mode forward: running statistics only, so each row is independent of the batch.
    DenseMatrix forward_eval(const DenseMatrix& x) const {
        check_input(x);
        if (x.rows() < 1) throw BatchSizeError("HashCoder: empty batch");
        DenseMatrix h = x;
        for (const auto& block : blocks_) {
            DenseMatrix a = matmul(h, block.weight);
            add_bias(a, block.bias);
            for (std::size_t j = 0; j < a.cols(); ++j) {
                const double inv_std = 1.0 / std::sqrt(block.running_var[j] + cfg_.bn_eps);
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    a(i, j) = block.gamma[j] * ((a(i, j) - block.running_mean[j]) * inv_std) + block.beta[j];
                }
            }
            if (block.relu) relu_inplace(a);
            h = std::move(a);
        }
        detail::require_finite(h, "HashCoder::forward_eval");
        return h;
    }

    HashCoderGrads backward(const ForwardCache& cache, const DenseMatrix& grad_z) const {
        if (cache.owner != this || cache.version != version_ || cache.blocks.size() != blocks_.size()) {
            throw StateError("HashCoder::backward: cache does not belong to the current model state");
        }
        const std::size_t rows = cache.blocks.front().input.rows();
        if (grad_z.rows() != rows || grad_z.cols() != cfg_.bits) {
            throw ShapeError("HashCoder::backward: grad_z is " + detail::shape_str(grad_z));
        }
        HashCoderGrads grads;
        grads.blocks.resize(blocks_.size());
        DenseMatrix g = grad_z;
        const double n = static_cast<double>(rows);
        for (std::size_t li = blocks_.size(); li-- > 0;) {
            const auto& block = blocks_[li];
            const auto& bc = cache.blocks[li];
            auto& bg = grads.blocks[li];
            const std::size_t cols = block.out_dim();
            if (block.relu) {
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        if (!(bc.bn_out(i, j) > 0.0)) g(i, j) = 0.0;
            }
            bg.gamma.assign(cols, 0.0);
            bg.beta.assign(cols, 0.0);
            std::vector<double> sum_dxhat(cols, 0.0), sum_dxhat_xhat(cols, 0.0);
            DenseMatrix dxhat(rows, cols);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) {
                    const double gij = g(i, j);
                    bg.gamma[j] += gij * bc.xhat(i, j);
                    bg.beta[j] += gij;
                    const double d = gij * block.gamma[j];
                    dxhat(i, j) = d;
                    sum_dxhat[j] += d;
                    sum_dxhat_xhat[j] += d * bc.xhat(i, j);
                }
            DenseMatrix da(rows, cols);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) {
                    da(i, j) = bc.inv_std[j] / n *
                               (n * dxhat(i, j) - sum_dxhat[j] - bc.xhat(i, j) * sum_dxhat_xhat[j]);
                }
            bg.bias.assign(cols, 0.0);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) bg.bias[j] += da(i, j);
            bg.weight = matmul_tn(bc.input, da);
            g = matmul_nt(da, block.weight);
        }
        grads.input = std::move(g);
        return grads;
    }

    HashCoderGrads zero_grads() const {
        HashCoderGrads grads;
        for (const auto& block : blocks_) {
            BlockGrads bg;
            bg.weight = DenseMatrix(block.in_dim(), block.out_dim());
            bg.bias.assign(block.out_dim(), 0.0);
            bg.gamma.assign(block.out_dim(), 0.0);
            bg.beta.assign(block.out_dim(), 0.0);
            grads.blocks.push_back(std::move(bg));
        }
        return grads;
    }

    // Trainable tensors in a fixed order. Biases and BatchNorm affine
    // parameters are excluded from weight decay.
    std::vector<ParamSlot> parameter_slots(const HashCoderGrads& grads, const std::string& prefix = "") {
        if (grads.blocks.size() != blocks_.size()) throw ShapeError("parameter_slots: gradient block count mismatch");
        std::vector<ParamSlot> slots;
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            auto& b = blocks_[l];
            const auto& g = grads.blocks[l];
            const std::string base = prefix + "block" + std::to_string(l) + ".";
            slots.push_back({base + "weight", b.weight.values(), g.weight.values(), true});
            slots.push_back({base + "bias", b.bias, g.bias, false});
            slots.push_back({base + "bn.gamma", b.gamma, g.gamma, false});
            slots.push_back({base + "bn.beta", b.beta, g.beta, false});
        }
        return slots;
    }

    // Flat view over trainable parameters, in parameter_slots order.
    std::vector<double> flat_parameters() const {
        std::vector<double> flat;
        for (const auto& b : blocks_) {
            flat.insert(flat.end(), b.weight.values().begin(), b.weight.values().end());
            flat.insert(flat.end(), b.bias.begin(), b.bias.end());
            flat.insert(flat.end(), b.gamma.begin(), b.gamma.end());
            flat.insert(flat.end(), b.beta.begin(), b.beta.end());
        }
        return flat;
    }

    void set_flat_parameters(std::span<const double> flat) {
        std::size_t pos = 0;
        auto take = [&](std::span<double> dst) {
            if (pos + dst.size() > flat.size()) throw ShapeError("set_flat_parameters: vector too short");
            for (double& v : dst) v = flat[pos++];
        };
        for (auto& b : blocks_) {
            take(b.weight.values());
            take(b.bias);
            take(b.gamma);
            take(b.beta);
        }
        if (pos != flat.size()) throw ShapeError("set_flat_parameters: vector too long");
        touch();
    }

    static std::vector<double> flatten(const HashCoderGrads& grads) {
        std::vector<double> flat;
        for (const auto& g : grads.blocks) {
            flat.insert(flat.end(), g.weight.values().begin(), g.weight.values().end());
            flat.insert(flat.end(), g.bias.begin(), g.bias.end());
            flat.insert(flat.end(), g.gamma.begin(), g.gamma.end());
            flat.insert(flat.end(), g.beta.begin(), g.beta.end());
        }
        return flat;
    }

    bool parameters_finite() const noexcept {
        for (const auto& b : blocks_) {
            if (!b.weight.all_finite()) return false;
            for (const auto* v : {&b.bias, &b.gamma, &b.beta, &b.running_mean, &b.running_var})
                for (double x : *v)
                    if (!std::isfinite(x)) return false;
        }
        return true;
    }

    friend bool operator==(const HashCoder& a, const HashCoder& b) {
        return a.cfg_.input_dim == b.cfg_.input_dim && a.cfg_.bits == b.cfg_.bits && a.cfg_.layers == b.cfg_.layers &&
               a.cfg_.width == b.cfg_.width && a.cfg_.bn_eps == b.cfg_.bn_eps &&
               a.cfg_.bn_momentum == b.cfg_.bn_momentum && a.blocks_ == b.blocks_;
    }

private:
    void check_input(const DenseMatrix& x) const {
        if (x.cols() != cfg_.input_dim) {
            throw ShapeError("HashCoder: input has " + std::to_string(x.cols()) + " columns, model expects " +
                             std::to_string(cfg_.input_dim));
        }
    }

    static void add_bias(DenseMatrix& a, const std::vector<double>& bias) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
            auto r = a.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
        }
    }

    static void relu_inplace(DenseMatrix& m) {
        for (double& v : m.values())
            if (v < 0.0) v = 0.0;
    }

    HashCoderConfig cfg_;
    std::vector<DenseBlock> blocks_;
    std::uint64_t version_ = 0;
};

// Elementwise sigmoid.
inline DenseMatrix probabilities(const DenseMatrix& z) {
    DenseMatrix p(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) p.values()[i] = 1.0 / (1.0 + std::exp(-z.values()[i]));
    return p;
}

// y = 1{p >= 0.5}; a probability of exactly one half maps to 1.
inline DenseMatrix binarize(const DenseMatrix& p) {
    DenseMatrix y(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) y.values()[i] = p.values()[i] >= 0.5 ? 1.0 : 0.0;
    return y;
}

// One head for single-modality training, two independent heads sharing the
// code length for dual-stream (cross-modal) training.
struct CodeModel {
    std::vector<HashCoder> heads;

    bool dual() const noexcept { return heads.size() == 2; }
    std::size_t bits() const noexcept { return heads.empty() ? 0 : heads.front().bits(); }

    HashCoder& head(std::size_t i) {
        if (i >= heads.size()) throw ConfigError("CodeModel: head " + std::to_string(i + 1) + " does not exist");
        return heads[i];
    }
    const HashCoder& head(std::size_t i) const {
        if (i >= heads.size()) throw ConfigError("CodeModel: head " + std::to_string(i + 1) + " does not exist");
        return heads[i];
    }

    friend bool operator==(const CodeModel&, const CodeModel&) = default;
};

} // namespace crovca
