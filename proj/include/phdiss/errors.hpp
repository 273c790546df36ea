/*
 Copyright 2026 The phdiss Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef PHDISS_ERRORS_HPP
#define PHDISS_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace phdiss {

/// Failure categories raised by the library. The CLI maps them to exit codes.
enum class ErrorCode {
    DimensionMismatch,
    InvalidArgument,
    NonSkewJ,
    NonPSDR,
    NonPDQ,
    SingularJminus,
    QuadratureFailure,
    NonQuadraticHamiltonian,
    NewtonDivergence,
    SingularJacobian,
    NoFeasibleGridPoint,
    PhaseMismatch,
    NotApplicable,
    DegenerateSampling,
    SyntaxError,
    UnknownIdentifier,
    EvaluationError,
    SchemaError,
    IoError,
    Unsupported,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonSkewJ: return "NonSkewJ";
    case ErrorCode::NonPSDR: return "NonPSDR";
    case ErrorCode::NonPDQ: return "NonPDQ";
    case ErrorCode::SingularJminus: return "SingularJminus";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::NonQuadraticHamiltonian: return "NonQuadraticHamiltonian";
    case ErrorCode::NewtonDivergence: return "NewtonDivergence";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::NoFeasibleGridPoint: return "NoFeasibleGridPoint";
    case ErrorCode::PhaseMismatch: return "PhaseMismatch";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::DegenerateSampling: return "DegenerateSampling";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::EvaluationError: return "EvaluationError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Unsupported: return "Unsupported";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Parse failure with the byte offset into the source text and the tokens
/// that would have been accepted there.
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t position, std::string expected, const std::string& detail)
        : Error(ErrorCode::SyntaxError,
                "at position " + std::to_string(position) + ": " + detail + " (expected " + expected + ")"),
          position_(position), expected_(std::move(expected)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

}  // namespace phdiss

#endif  // PHDISS_ERRORS_HPP
