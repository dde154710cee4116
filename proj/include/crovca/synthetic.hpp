#pragma once

// Isotropic Gaussian clusters for demos and end-to-end checks: centers are
// drawn uniformly on a sphere of the given radius, rows add unit-scale noise.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "crovca/labels.hpp"
#include "crovca/numkit.hpp"

namespace crovca {

struct ClusterSpec {
    std::size_t clusters = 10;
    std::size_t dim = 128;
    double radius = 10.0;
    double noise = 1.0;
    std::size_t train_rows = 2000;
    std::size_t db_rows = 2000;
    std::size_t query_rows = 500;
    std::uint64_t seed = 0;
};

struct LabeledSplit {
    DenseMatrix embeddings;
    LabelSet labels;
};

struct ClusterDataset {
    DenseMatrix centers;
    LabeledSplit train;
    LabeledSplit db;
    LabeledSplit query;
};

namespace detail {

inline LabeledSplit sample_split(const DenseMatrix& centers, std::size_t rows, double noise, Rng& rng) {
    const std::size_t k = centers.rows();
    LabeledSplit split;
    split.embeddings = DenseMatrix(rows, centers.cols());
    std::vector<std::uint32_t> labels(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        // Round-robin keeps the classes balanced; the trainer shuffles anyway.
        const auto c = static_cast<std::uint32_t>(i % k);
        labels[i] = c;
        for (std::size_t j = 0; j < centers.cols(); ++j) split.embeddings(i, j) = centers(c, j) + noise * rng.normal();
    }
    split.labels = LabelSet::single(labels, k);
    return split;
}

} // namespace detail

inline ClusterDataset make_cluster_dataset(const ClusterSpec& spec) {
    Rng rng(spec.seed);
    ClusterDataset ds;
    ds.centers = DenseMatrix(spec.clusters, spec.dim);
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        double sq = 0.0;
        for (double& v : ds.centers.row(c)) {
            v = rng.normal();
            sq += v * v;
        }
        const double scale = spec.radius / std::sqrt(sq);
        for (double& v : ds.centers.row(c)) v *= scale;
    }
    ds.train = detail::sample_split(ds.centers, spec.train_rows, spec.noise, rng);
    ds.db = detail::sample_split(ds.centers, spec.db_rows, spec.noise, rng);
    ds.query = detail::sample_split(ds.centers, spec.query_rows, spec.noise, rng);
    return ds;
}

} // namespace crovca
