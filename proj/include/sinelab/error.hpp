#pragma once

#include <stdexcept>
#include <string>

namespace sinelab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SINELAB_ERROR(name)                     \
    class name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

SINELAB_ERROR(DomainError);
SINELAB_ERROR(ResolutionError);
SINELAB_ERROR(DiscretizationError);
SINELAB_ERROR(DegeneracyError);
SINELAB_ERROR(CoverageError);
SINELAB_ERROR(SizeError);
SINELAB_ERROR(NonMembershipError);
SINELAB_ERROR(DivergenceError);
SINELAB_ERROR(AccuracyError);
SINELAB_ERROR(RescalingError);
SINELAB_ERROR(ConfigError);
SINELAB_ERROR(UsageError);

#undef SINELAB_ERROR

} // namespace sinelab
