#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dysarar {

// Every failure the library reports carries one of these classes. The CLI maps
// them onto exit codes, tests match on them.
enum class ErrorKind {
    // spatial_algebra
    ZeroRow,
    NegativeEntry,
    NonzeroDiagonal,
    NotRowStochastic,
    UnstableParameter,
    SingularOperator,
    // score_engine
    NonInvertibleInformation,
    // dysarar_filter
    DimensionMismatch,
    NumericalBreakdown,
    // estimation
    MaskMismatch,
    NoFiniteStart,
    NotConverged,
    NonPDHessian,
    NegativeStatistic,
    // simulation_lab
    NonPDCovariance,
    RetryExhausted,
    HarnessFailureRate,
    // econ_weights
    ConstantColumn,
    // portfolio
    SingularCovariance,
    DegenerateNormalizer,
    NoRootInInterval,
    DomainViolation,
    // cli
    ConfigParse,
    MissingInput,
    RaggedRows,
    NonNumericCell,
    EmptyPanel,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace dysarar
