#pragma once

#include <stdexcept>
#include <string>

namespace rei {

// Base of every error raised by the library. The CLI maps any of these to
// exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define REI_DEFINE_ERROR(Name)                   \
    class Name : public Error {                  \
    public:                                      \
        using Error::Error;                      \
    };

// graph structure
REI_DEFINE_ERROR(CycleError)
REI_DEFINE_ERROR(UnknownNodeError)
REI_DEFINE_ERROR(DuplicateEdgeError)
REI_DEFINE_ERROR(DuplicateNodeError)
REI_DEFINE_ERROR(OverlapError)

// discrete probability
REI_DEFINE_ERROR(StateSpaceTooLarge)
REI_DEFINE_ERROR(ZeroProbabilityEvidence)
REI_DEFINE_ERROR(BadStateError)
REI_DEFINE_ERROR(NotAColliderError)
REI_DEFINE_ERROR(ModelShapeError)
REI_DEFINE_ERROR(InvalidModel)

// numerics and learning
REI_DEFINE_ERROR(ShapeMismatch)
REI_DEFINE_ERROR(NonScalarLoss)
REI_DEFINE_ERROR(EmptySampler)
REI_DEFINE_ERROR(EmptyDataset)
REI_DEFINE_ERROR(BadSpec)
REI_DEFINE_ERROR(DegenerateData)
REI_DEFINE_ERROR(AllRowsInactive)

// files and configuration
REI_DEFINE_ERROR(FormatError)
REI_DEFINE_ERROR(ConfigError)

#undef REI_DEFINE_ERROR

}  // namespace rei
