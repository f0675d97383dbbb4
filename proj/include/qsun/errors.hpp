#pragma once

#include <stdexcept>
#include <string>

namespace qsun {

// Base for every error raised by the library. Each failure mode of the
// numerical pipeline gets its own type so callers can react selectively.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define QSUN_ERROR(Name)                                                  \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

QSUN_ERROR(ValidationError);
QSUN_ERROR(DegenerateBath);
QSUN_ERROR(DimensionOverflow);
QSUN_ERROR(WeylViolation);
QSUN_ERROR(ZeroWidth);
QSUN_ERROR(EventAViolated);
QSUN_ERROR(ContourTooClose);
QSUN_ERROR(BoundViolated);
QSUN_ERROR(NotIsolated);
QSUN_ERROR(SupportExceedsWindow);
QSUN_ERROR(SplitInvalid);
QSUN_ERROR(TooFewLevels);
QSUN_ERROR(GridTooCoarse);

#undef QSUN_ERROR

} // namespace qsun
