#pragma once

// Exhaustive top-k search over packed codes under four distances:
//   hamming        popcount(y_q xor y_db)
//   asym_hamming   sum_j |p_j - y_j|           (query probabilities vs database bits)
//   bce            BCE(y_db, p_q)              (database code as target)
//   symbce         1/2 [BCE(y_db, p_q) + BCE(y_q, p_db)], needs stored database logits
// Lower is closer for all of them; ties go to the lower database index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "crovca/codes.hpp"
#include "crovca/errors.hpp"
#include "crovca/hashcoder.hpp"
#include "crovca/numkit.hpp"
#include "crovca/objective.hpp"

namespace crovca {

enum class Measure { hamming, asym_hamming, bce, symbce };

inline Measure parse_measure(std::string_view s) {
    if (s == "h" || s == "hamming") return Measure::hamming;
    if (s == "ah" || s == "asym_hamming") return Measure::asym_hamming;
    if (s == "bce") return Measure::bce;
    if (s == "symbce") return Measure::symbce;
    throw ConfigError("unknown measure '" + std::string(s) + "' (expected h|ah|bce|symbce)");
}

inline const char* to_string(Measure m) noexcept {
    switch (m) {
    case Measure::hamming: return "h";
    case Measure::asym_hamming: return "ah";
    case Measure::bce: return "bce";
    case Measure::symbce: return "symbce";
    }
    return "?";
}

inline bool packed_bit(std::span<const std::uint8_t> code, std::size_t j) noexcept { return (code[j / 8] >> (j % 8)) & 1u; }

inline std::size_t hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) { return hamming_packed(a, b); }

namespace detail {

inline void check_width(std::size_t bits, std::span<const std::uint8_t> code) {
    if (code.size() != bytes_for_bits(bits)) throw ShapeError("code width does not match query length");
}

// -[y ln p + (1-y) ln(1-p)] summed over bits, p clamped.
inline double bce_row(std::span<const std::uint8_t> target, std::span<const double> p) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double q = clamp_prob(p[j]);
        s -= packed_bit(target, j) ? std::log(q) : std::log(1.0 - q);
    }
    return s;
}

} // namespace detail

inline double asym_hamming(std::span<const double> p, std::span<const std::uint8_t> code) {
    detail::check_width(p.size(), code);
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) s += std::abs(p[j] - (packed_bit(code, j) ? 1.0 : 0.0));
    return s;
}

inline double bce_score(std::span<const double> p, std::span<const std::uint8_t> code) {
    detail::check_width(p.size(), code);
    return detail::bce_row(code, p);
}

inline double symbce_score(std::span<const double> p_query, std::span<const std::uint8_t> code_query,
                           std::span<const double> p_db, std::span<const std::uint8_t> code_db) {
    if (p_query.size() != p_db.size()) throw ShapeError("symbce: probability widths differ");
    detail::check_width(p_query.size(), code_query);
    detail::check_width(p_db.size(), code_db);
    return 0.5 * (detail::bce_row(code_db, p_query) + detail::bce_row(code_query, p_db));
}

// Query-side logits plus the derived probabilities and binary codes.
class QueryBatch {
public:
    explicit QueryBatch(DenseMatrix logits)
        : logits_(std::move(logits)), probs_(crovca::probabilities(logits_)), codes_(pack_signs(logits_, false)) {}

    std::size_t rows() const noexcept { return logits_.rows(); }
    std::size_t bits() const noexcept { return logits_.cols(); }
    const DenseMatrix& logits() const noexcept { return logits_; }
    const DenseMatrix& probabilities() const noexcept { return probs_; }
    const PackedCodeSet& codes() const noexcept { return codes_; }

    // Replaces probabilities directly, e.g. with already-binarized values.
    static QueryBatch from_probabilities(DenseMatrix probs) {
        QueryBatch q;
        q.codes_ = PackedCodeSet(probs.rows(), probs.cols());
        for (std::size_t i = 0; i < probs.rows(); ++i)
            for (std::size_t j = 0; j < probs.cols(); ++j)
                if (probs(i, j) >= 0.5) q.codes_.set_bit(i, j, true);
        q.logits_ = DenseMatrix(probs.rows(), probs.cols());
        q.probs_ = std::move(probs);
        return q;
    }

private:
    QueryBatch() = default;
    DenseMatrix logits_;
    DenseMatrix probs_;
    PackedCodeSet codes_;
};

struct Neighbor {
    std::size_t index = 0;
    double score = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline bool neighbor_less(const Neighbor& a, const Neighbor& b) noexcept {
    return a.score < b.score || (a.score == b.score && a.index < b.index);
}

struct RankedList {
    std::vector<std::vector<Neighbor>> queries;

    std::size_t size() const noexcept { return queries.size(); }
    const std::vector<Neighbor>& operator[](std::size_t q) const noexcept { return queries[q]; }

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

struct TopkOptions {
    std::size_t threads = 1;
    // Database partitions scanned independently and merged; results do not depend on it.
    std::size_t shards = 1;
};

class CodeIndex {
public:
    explicit CodeIndex(PackedCodeSet codes) : codes_(std::move(codes)) {
        if (codes_.has_logits()) {
            probs_.resize(codes_.logits().size());
            for (std::size_t i = 0; i < probs_.size(); ++i) {
                probs_[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(codes_.logits()[i])));
            }
        }
    }

    const PackedCodeSet& codes() const noexcept { return codes_; }
    std::size_t rows() const noexcept { return codes_.rows(); }
    std::size_t bits() const noexcept { return codes_.bits(); }
    bool supports(Measure m) const noexcept { return m != Measure::symbce || codes_.has_logits(); }

    double score(const QueryBatch& q, std::size_t qi, std::size_t di, Measure m) const {
        const auto code = codes_.row(di);
        switch (m) {
        case Measure::hamming: return static_cast<double>(hamming_packed(q.codes().row(qi), code));
        case Measure::asym_hamming: return asym_hamming(q.probabilities().row(qi), code);
        case Measure::bce: return bce_score(q.probabilities().row(qi), code);
        case Measure::symbce:
            return symbce_score(q.probabilities().row(qi), q.codes().row(qi),
                                std::span<const double>(probs_.data() + di * bits(), bits()), code);
        }
        return 0.0;
    }

    RankedList topk(const QueryBatch& queries, Measure measure, std::size_t k, TopkOptions opts = {}) const {
        if (k < 1) throw ConfigError("k must be >= 1");
        if (!supports(measure)) throw CapabilityError("symbce needs database logits; encode the database with logits");
        if (queries.bits() != bits()) {
            throw ShapeError("queries have " + std::to_string(queries.bits()) + " bits, database has " +
                             std::to_string(bits()));
        }
        const std::size_t shards = std::clamp<std::size_t>(opts.shards, 1, std::max<std::size_t>(rows(), 1));
        const std::size_t depth = std::min(k, rows());
        RankedList out;
        out.queries.resize(queries.rows());

        auto run_query = [&](std::size_t qi) {
            std::vector<Neighbor> merged;
            std::vector<Neighbor> part;
            for (std::size_t s = 0; s < shards; ++s) {
                const std::size_t lo = rows() * s / shards;
                const std::size_t hi = rows() * (s + 1) / shards;
                part.clear();
                for (std::size_t di = lo; di < hi; ++di) part.push_back({di, score(queries, qi, di, measure)});
                const std::size_t keep = std::min(depth, part.size());
                std::partial_sort(part.begin(), part.begin() + static_cast<std::ptrdiff_t>(keep), part.end(), neighbor_less);
                merged.insert(merged.end(), part.begin(), part.begin() + static_cast<std::ptrdiff_t>(keep));
            }
            std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(depth), merged.end(),
                              neighbor_less);
            merged.resize(depth);
            out.queries[qi] = std::move(merged);
        };

        const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, queries.rows()));
        if (threads == 1) {
            for (std::size_t qi = 0; qi < queries.rows(); ++qi) run_query(qi);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t) {
                pool.emplace_back([&, t] {
                    for (std::size_t qi = t; qi < queries.rows(); qi += threads) run_query(qi);
                });
            }
            for (auto& th : pool) th.join();
        }
        return out;
    }

private:
    PackedCodeSet codes_;
    std::vector<double> probs_;
};


// Rankings text format, one line per query:
//   <query>\t<db_index>:<score> <db_index>:<score> ...
// Scores use %.17g so a round trip is exact. Lines starting with '#' are ignored.
inline void write_rankings(std::ostream& out, const RankedList& ranks) {
    char buf[64];
    for (std::size_t q = 0; q < ranks.size(); ++q) {
        out << q << '\t';
        bool first = true;
        for (const auto& n : ranks[q]) {
            std::snprintf(buf, sizeof buf, "%zu:%.17g", n.index, n.score);
            if (!first) out << ' ';
            out << buf;
            first = false;
        }
        out << '\n';
    }
}

inline RankedList parse_rankings(std::istream& in) {
    RankedList ranks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ValidationError("rankings line " + std::to_string(line_no) + ": missing tab");
        std::size_t q = 0;
        try {
            q = std::stoull(line.substr(0, tab));
        } catch (const std::exception&) {
            throw ValidationError("rankings line " + std::to_string(line_no) + ": bad query index");
        }
        if (q != ranks.queries.size()) throw ValidationError("rankings line " + std::to_string(line_no) + ": queries out of order");
        std::vector<Neighbor> list;
        std::istringstream fields(line.substr(tab + 1));
        std::string tok;
        while (fields >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw ValidationError("rankings line " + std::to_string(line_no) + ": bad entry");
            try {
                list.push_back({static_cast<std::size_t>(std::stoull(tok.substr(0, colon))), std::stod(tok.substr(colon + 1))});
            } catch (const std::exception&) {
                throw ValidationError("rankings line " + std::to_string(line_no) + ": bad entry '" + tok + "'");
            }
        }
        ranks.queries.push_back(std::move(list));
    }
    return ranks;
}

} // namespace crovca
