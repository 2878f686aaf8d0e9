#pragma once

#include <stdexcept>
#include <string>

namespace mrsg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MRSG_DEFINE_ERROR(Name) \
  class Name : public Error {   \
   public:                      \
    using Error::Error;         \
  }

MRSG_DEFINE_ERROR(DegeneratePair);
MRSG_DEFINE_ERROR(SingularSystem);
MRSG_DEFINE_ERROR(InvalidSpec);
MRSG_DEFINE_ERROR(EmptyRoomCloud);
MRSG_DEFINE_ERROR(EmptyCloud);
MRSG_DEFINE_ERROR(ConfigMismatch);
MRSG_DEFINE_ERROR(MalformedMessage);
MRSG_DEFINE_ERROR(UnknownRoom);
MRSG_DEFINE_ERROR(StaleMessage);
MRSG_DEFINE_ERROR(WallPairingFailed);
MRSG_DEFINE_ERROR(InsufficientPoses);
MRSG_DEFINE_ERROR(InsufficientPoints);
MRSG_DEFINE_ERROR(ConfigError);

#undef MRSG_DEFINE_ERROR

}  // namespace mrsg
