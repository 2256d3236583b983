#pragma once

#include <stdexcept>
#include <string>

namespace sgs {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define SGS_DEFINE_ERROR(Name)                        \
    struct Name : Error {                             \
        using Error::Error;                           \
        Name() : Error(#Name) {}                      \
    }

SGS_DEFINE_ERROR(EmptyField);
SGS_DEFINE_ERROR(InsufficientNeighbors);
SGS_DEFINE_ERROR(InvalidQuaternion);
SGS_DEFINE_ERROR(IntrinsicsMismatch);
SGS_DEFINE_ERROR(InsufficientViews);
SGS_DEFINE_ERROR(InterpolatorContractViolation);
SGS_DEFINE_ERROR(NothingToSelect);
SGS_DEFINE_ERROR(ShapeMismatch);
SGS_DEFINE_ERROR(ImageTooSmall);
SGS_DEFINE_ERROR(InsufficientCoverage);
SGS_DEFINE_ERROR(InvalidThresholds);
SGS_DEFINE_ERROR(EmptyTarget);
SGS_DEFINE_ERROR(EnsembleCollapse);
SGS_DEFINE_ERROR(AlreadyFrozen);
SGS_DEFINE_ERROR(StaleRenderOutput);
SGS_DEFINE_ERROR(ParseError);
SGS_DEFINE_ERROR(NothingToEvaluate);

#undef SGS_DEFINE_ERROR

} // namespace sgs
