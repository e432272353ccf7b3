// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_COMMON_ERROR_HPP
#define TIP_COMMON_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tip {

/// Error categories surfaced by the library. Every thrown error carries one
/// of these codes so callers can branch without string matching.
enum class ErrorCode {
    InvalidParams,
    Overflow,
    ScaleMismatch,
    LevelMismatch,
    DepthExhausted,
    MissingGaloisKey,
    MalformedFrame,
    VersionMismatch,
    ParamsMismatch,
    DimensionMismatch,
    ZeroVector,
    SingularHessian,
    DidNotConverge,
    EigSolverFailure,
    MissingScore,
    ProtocolViolation,
    TransportTimeout,
    ConstantInput,
    IoError,
};

class TipError : public std::runtime_error {
public:
    TipError(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw TipError(code, what);
}

}  // namespace tip

#endif  // TIP_COMMON_ERROR_HPP
