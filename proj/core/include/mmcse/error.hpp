#pragma once

#include <stdexcept>
#include <string>

namespace mmcse {

// Root of every error the library throws. Callers that only need to report
// failures catch this; callers that branch on cause catch the subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class InvalidArgument : public Error { using Error::Error; };
class NoGraphError : public Error { using Error::Error; };
class DeterminismError : public Error { using Error::Error; };
class VocabularyError : public Error { using Error::Error; };
class PatchingError : public Error { using Error::Error; };
class LengthError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class EmptyDenominatorError : public Error { using Error::Error; };
class UninitializedGradientError : public Error { using Error::Error; };
class UndefinedCorrelationError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class SamplingError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

// Raised by the training loop when a loss turns non-finite.
class NumericalAbort : public Error { using Error::Error; };

}  // namespace mmcse
