#pragma once

#include <stdexcept>
#include <string>

namespace plvo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define PLVO_DEFINE_ERROR(Name)            \
  struct Name : Error {                    \
    using Error::Error;                    \
  }

PLVO_DEFINE_ERROR(NonPositiveDepth);
PLVO_DEFINE_ERROR(NonPositiveDisparity);
PLVO_DEFINE_ERROR(ShapeMismatch);
PLVO_DEFINE_ERROR(NonScalarLoss);
PLVO_DEFINE_ERROR(IoError);
PLVO_DEFINE_ERROR(FormatError);
PLVO_DEFINE_ERROR(VersionMismatch);
PLVO_DEFINE_ERROR(DimensionMismatch);
PLVO_DEFINE_ERROR(NonPositiveTemperature);
PLVO_DEFINE_ERROR(MarginalSumMismatch);
PLVO_DEFINE_ERROR(IndexOutOfRange);
PLVO_DEFINE_ERROR(DegenerateLine);
PLVO_DEFINE_ERROR(InsufficientCorrespondences);
PLVO_DEFINE_ERROR(SingularNormalEquations);
PLVO_DEFINE_ERROR(NoConsensus);
PLVO_DEFINE_ERROR(MissingLabels);
PLVO_DEFINE_ERROR(EmptySequence);
PLVO_DEFINE_ERROR(LengthMismatch);
PLVO_DEFINE_ERROR(DegenerateGeometry);

#undef PLVO_DEFINE_ERROR

}  // namespace plvo
