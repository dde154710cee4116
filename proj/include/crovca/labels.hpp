#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crovca/errors.hpp"

namespace crovca {

// Per-row class sets. Single-label data is a set of size one per row.
class LabelSet {
public:
    LabelSet() = default;
    LabelSet(std::vector<std::vector<std::uint32_t>> rows, std::size_t num_classes, bool multi_label = false)
        : rows_(std::move(rows)), num_classes_(num_classes), multi_label_(multi_label) {
        for (auto& r : rows_) {
            std::sort(r.begin(), r.end());
            r.erase(std::unique(r.begin(), r.end()), r.end());
            for (auto c : r) {
                if (c >= num_classes_) {
                    throw ValidationError("LabelSet: class id " + std::to_string(c) + " >= num_classes " +
                                          std::to_string(num_classes_));
                }
            }
            if (r.size() > 1) multi_label_ = true;
        }
    }

    static LabelSet single(const std::vector<std::uint32_t>& labels, std::size_t num_classes) {
        std::vector<std::vector<std::uint32_t>> rows;
        rows.reserve(labels.size());
        for (auto l : labels) rows.push_back({l});
        return LabelSet(std::move(rows), num_classes, false);
    }

    std::size_t rows() const noexcept { return rows_.size(); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    bool multi_label() const noexcept { return multi_label_; }
    const std::vector<std::uint32_t>& operator[](std::size_t r) const noexcept { return rows_[r]; }

    bool is_single_label() const noexcept {
        return std::all_of(rows_.begin(), rows_.end(), [](const auto& r) { return r.size() == 1; });
    }

    friend bool operator==(const LabelSet&, const LabelSet&) = default;

private:
    std::vector<std::vector<std::uint32_t>> rows_;
    std::size_t num_classes_ = 0;
    bool multi_label_ = false;
};

} // namespace crovca
