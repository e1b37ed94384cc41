#pragma once

#include "sinelab/error.hpp"

#include <compare>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace sinelab {

/// Nonnegative integer vector k with |k| = sum of entries.
class MultiIndex {
public:
    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries))
    {
        for (int e : entries_) {
            if (e < 0) {
                throw DomainError("multi-index entries must be nonnegative");
            }
        }
    }
    MultiIndex(std::initializer_list<int> entries) : MultiIndex(std::vector<int>(entries)) {}

    static MultiIndex unit(std::size_t dim, std::size_t i)
    {
        std::vector<int> e(dim, 0);
        e.at(i) = 1;
        return MultiIndex(std::move(e));
    }

    std::size_t dim() const { return entries_.size(); }
    int order() const { return std::accumulate(entries_.begin(), entries_.end(), 0); }
    bool is_zero() const { return order() == 0; }
    int operator[](std::size_t i) const { return entries_[i]; }
    const std::vector<int>& entries() const { return entries_; }

    MultiIndex operator+(const MultiIndex& o) const
    {
        if (o.dim() != dim()) {
            throw DomainError("multi-index dimension mismatch");
        }
        std::vector<int> e(entries_);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] += o.entries_[i];
        return MultiIndex(std::move(e));
    }

    /// k! = prod k_i!
    double factorial() const
    {
        double f = 1.0;
        for (int e : entries_) {
            for (int i = 2; i <= e; ++i) f *= i;
        }
        return f;
    }

    std::string str() const
    {
        std::string s = "(";
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(entries_[i]);
        }
        return s + ")";
    }

    auto operator<=>(const MultiIndex&) const = default;

private:
    std::vector<int> entries_;
};

} // namespace sinelab
