#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zelda {

enum class ErrorCode {
    kInvalidArgument,
    kZeroVector,
    kNonFinite,
    kDimensionMismatch,
    kEmptyInput,
    kIoError,
    kBadMagic,
    kHeaderMismatch,
    kMetadataMismatch,
    kUnknownFrame,
    kEmbedderUnavailable,
    kEmptyQuery,
    kEmptyCandidates,
    kFewerThanTwo,
    kMissingPixels,
    kShapeMismatch,
    kUnknownMode,
    kEmptyReport,
    kDuplicateName,
    kUnknownDataset,
    kBothOrNeitherQuery,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the engine carries one of the codes above so the
/// service and CLI layers can map it to a status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace zelda
