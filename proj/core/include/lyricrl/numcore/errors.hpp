#pragma once

#include <stdexcept>
#include <string>

namespace lyricrl {

// One exception type per failure class named in the module contracts. All derive
// from Error so callers at the process boundary can catch a single type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LYRICRL_DECLARE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

LYRICRL_DECLARE_ERROR(NumericalError);
LYRICRL_DECLARE_ERROR(ConfigError);
LYRICRL_DECLARE_ERROR(LengthError);
LYRICRL_DECLARE_ERROR(ShapeError);
LYRICRL_DECLARE_ERROR(DomainError);
LYRICRL_DECLARE_ERROR(EmptyReferenceError);
LYRICRL_DECLARE_ERROR(VocabError);
LYRICRL_DECLARE_ERROR(IoError);
LYRICRL_DECLARE_ERROR(GroupingError);
LYRICRL_DECLARE_ERROR(GroupError);
LYRICRL_DECLARE_ERROR(BatchError);
LYRICRL_DECLARE_ERROR(ComparabilityError);
LYRICRL_DECLARE_ERROR(CheckpointError);

#undef LYRICRL_DECLARE_ERROR

}  // namespace lyricrl
