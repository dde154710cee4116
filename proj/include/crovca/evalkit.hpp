#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "crovca/codes.hpp"
#include "crovca/errors.hpp"
#include "crovca/labels.hpp"
#include "crovca/retrieval.hpp"

namespace crovca {

// Two items are relevant iff their label sets intersect. Inputs are sorted.
inline bool relevant(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    if (a.empty() || b.empty()) throw ValidationError("relevance: empty label set");
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) return true;
        if (a[i] < b[j]) ++i;
        else ++j;
    }
    return false;
}

struct MetricReport {
    std::string metric;
    std::size_t k = 0;
    double value = 0.0;
    std::size_t queries = 0;
    std::vector<double> per_query;

    std::string to_line() const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "metric=%s k=%zu value=%.6f queries=%zu", metric.c_str(), k, value, queries);
        return buf;
    }
};

enum class MetricKind { map, recall };

struct MetricSpec {
    MetricKind kind = MetricKind::map;
    std::size_t k = 0;
};

// "map@1000", "recall@1"
inline MetricSpec parse_metric(std::string_view s) {
    const auto at = s.find('@');
    if (at == std::string_view::npos) throw ConfigError("metric must look like map@K or recall@K");
    const auto name = s.substr(0, at);
    const std::string num(s.substr(at + 1));
    MetricSpec spec;
    if (name == "map") spec.kind = MetricKind::map;
    else if (name == "recall") spec.kind = MetricKind::recall;
    else throw ConfigError("unknown metric '" + std::string(name) + "'");
    std::size_t pos = 0;
    unsigned long long k = 0;
    try {
        k = std::stoull(num, &pos);
    } catch (const std::exception&) {
        throw ConfigError("metric cutoff is not a number: '" + num + "'");
    }
    if (pos != num.size() || k < 1) throw ConfigError("metric cutoff must be a positive integer");
    spec.k = static_cast<std::size_t>(k);
    return spec;
}

namespace detail {

inline void check_rankings(const RankedList& rankings, const LabelSet& q_labels, const LabelSet& db_labels,
                           std::size_t k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (rankings.size() != q_labels.rows()) throw ValidationError("rankings and query labels differ in count");
    const std::size_t need = std::min(k, db_labels.rows());
    for (const auto& list : rankings.queries) {
        if (list.size() < need) throw ValidationError("rankings are shallower than the metric cutoff");
        for (const auto& n : list) {
            if (n.index >= db_labels.rows()) throw ValidationError("ranking refers to a database row out of range");
        }
    }
}

} // namespace detail

// AP_q = sum_{i<=k} rel(i) * precision@i / (#relevant in top k), 0 if none.
inline MetricReport map_at_k(const RankedList& rankings, const LabelSet& q_labels, const LabelSet& db_labels,
                             std::size_t k) {
    detail::check_rankings(rankings, q_labels, db_labels, k);
    MetricReport report;
    report.metric = "map@" + std::to_string(k);
    report.k = k;
    report.queries = rankings.size();
    report.per_query.reserve(rankings.size());
    double sum = 0.0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        const auto& list = rankings[q];
        const std::size_t depth = std::min(k, list.size());
        std::size_t hits = 0;
        double ap = 0.0;
        for (std::size_t i = 0; i < depth; ++i) {
            if (relevant(q_labels[q], db_labels[list[i].index])) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(i + 1);
            }
        }
        ap = hits == 0 ? 0.0 : ap / static_cast<double>(hits);
        report.per_query.push_back(ap);
        sum += ap;
    }
    report.value = report.queries == 0 ? 0.0 : sum / static_cast<double>(report.queries);
    return report;
}

// Fraction of queries with at least one relevant item in the top k.
inline MetricReport recall_at_k(const RankedList& rankings, const LabelSet& q_labels, const LabelSet& db_labels,
                                std::size_t k) {
    detail::check_rankings(rankings, q_labels, db_labels, k);
    MetricReport report;
    report.metric = "recall@" + std::to_string(k);
    report.k = k;
    report.queries = rankings.size();
    double sum = 0.0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        const auto& list = rankings[q];
        const std::size_t depth = std::min(k, list.size());
        double hit = 0.0;
        for (std::size_t i = 0; i < depth; ++i) {
            if (relevant(q_labels[q], db_labels[list[i].index])) {
                hit = 1.0;
                break;
            }
        }
        report.per_query.push_back(hit);
        sum += hit;
    }
    report.value = report.queries == 0 ? 0.0 : sum / static_cast<double>(report.queries);
    return report;
}

inline MetricReport evaluate(const RankedList& rankings, const LabelSet& q_labels, const LabelSet& db_labels,
                             const MetricSpec& spec) {
    return spec.kind == MetricKind::map ? map_at_k(rankings, q_labels, db_labels, spec.k)
                                        : recall_at_k(rankings, q_labels, db_labels, spec.k);
}

struct CodeStats {
    std::vector<double> bit_rates;
    std::vector<double> bit_entropy;  // nats
    double mean_entropy = 0.0;
    std::size_t unique_codes = 0;
};

inline double binary_entropy(double r) noexcept {
    if (r <= 0.0 || r >= 1.0) return 0.0;
    return -r * std::log(r) - (1.0 - r) * std::log(1.0 - r);
}

inline CodeStats code_stats(const PackedCodeSet& codes) {
    if (codes.rows() == 0) throw ValidationError("code_stats: empty code set");
    CodeStats stats;
    stats.bit_rates.assign(codes.bits(), 0.0);
    for (std::size_t r = 0; r < codes.rows(); ++r)
        for (std::size_t j = 0; j < codes.bits(); ++j)
            if (codes.bit(r, j)) stats.bit_rates[j] += 1.0;
    for (double& rate : stats.bit_rates) rate /= static_cast<double>(codes.rows());
    double sum = 0.0;
    for (double rate : stats.bit_rates) {
        stats.bit_entropy.push_back(binary_entropy(rate));
        sum += stats.bit_entropy.back();
    }
    stats.mean_entropy = sum / static_cast<double>(codes.bits());

    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < codes.rows(); ++r) {
        const auto row = codes.row(r);
        seen.emplace(reinterpret_cast<const char*>(row.data()), row.size());
    }
    stats.unique_codes = seen.size();
    return stats;
}

} // namespace crovca
