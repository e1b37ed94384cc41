#pragma once

#include "sinelab/error.hpp"

#include <string>

namespace sinelab {

struct Window {
    double lo = 0.0;
    double hi = 1.0;

    Window() = default;
    Window(double lo_, double hi_) : lo(lo_), hi(hi_)
    {
        if (!(lo < hi)) {
            throw DomainError("window requires lo < hi, got [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        }
    }

    double length() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    bool contains(const Window& other) const { return other.lo >= lo && other.hi <= hi; }
};

} // namespace sinelab
