#include "semrl/errors.hpp"

namespace semrl {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kCapacityExceeded: return "CapacityExceeded";
    case Errc::kDuplicateTriple: return "DuplicateTriple";
    case Errc::kInvalidSid: return "InvalidSid";
    case Errc::kInfeasibleQuota: return "InfeasibleQuota";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kEmptyPairSet: return "EmptyPairSet";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kGroupTooSmall: return "GroupTooSmall";
    case Errc::kNoJudgedPairs: return "NoJudgedPairs";
    case Errc::kKTooLarge: return "KTooLarge";
    case Errc::kCatalogTooLarge: return "CatalogTooLarge";
    case Errc::kPartitionMismatch: return "PartitionMismatch";
    case Errc::kMissingWorld: return "MissingWorld";
    case Errc::kResumeMismatch: return "ResumeMismatch";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kConfig: return "ConfigError";
    case Errc::kParse: return "ParseError";
    case Errc::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace semrl
