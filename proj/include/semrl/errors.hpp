#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace semrl {

enum class Errc {
  kCapacityExceeded,
  kDuplicateTriple,
  kInvalidSid,
  kInfeasibleQuota,
  kLengthMismatch,
  kEmptyPairSet,
  kDimensionMismatch,
  kGroupTooSmall,
  kNoJudgedPairs,
  kKTooLarge,
  kCatalogTooLarge,
  kPartitionMismatch,
  kMissingWorld,
  kResumeMismatch,
  kEmptyDataset,
  kInvalidArgument,
  kConfig,
  kParse,
  kIo,
};

std::string_view errc_name(Errc code);

/// Library-wide exception. `code()` identifies the failure class so callers
/// can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace semrl
