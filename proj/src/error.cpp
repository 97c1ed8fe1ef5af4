#include "zelda/error.hpp"

namespace zelda {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kZeroVector: return "ZeroVector";
        case ErrorCode::kNonFinite: return "NonFinite";
        case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
        case ErrorCode::kEmptyInput: return "EmptyInput";
        case ErrorCode::kIoError: return "IoError";
        case ErrorCode::kBadMagic: return "BadMagic";
        case ErrorCode::kHeaderMismatch: return "HeaderMismatch";
        case ErrorCode::kMetadataMismatch: return "MetadataMismatch";
        case ErrorCode::kUnknownFrame: return "UnknownFrame";
        case ErrorCode::kEmbedderUnavailable: return "EmbedderUnavailable";
        case ErrorCode::kEmptyQuery: return "EmptyQuery";
        case ErrorCode::kEmptyCandidates: return "EmptyCandidates";
        case ErrorCode::kFewerThanTwo: return "FewerThanTwo";
        case ErrorCode::kMissingPixels: return "MissingPixels";
        case ErrorCode::kShapeMismatch: return "ShapeMismatch";
        case ErrorCode::kUnknownMode: return "UnknownMode";
        case ErrorCode::kEmptyReport: return "EmptyReport";
        case ErrorCode::kDuplicateName: return "DuplicateName";
        case ErrorCode::kUnknownDataset: return "UnknownDataset";
        case ErrorCode::kBothOrNeitherQuery: return "BothOrNeitherQuery";
    }
    return "Unknown";
}

}  // namespace zelda
