#include "dysarar/errors.hpp"

namespace dysarar {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::ZeroRow: return "ZeroRow";
        case ErrorKind::NegativeEntry: return "NegativeEntry";
        case ErrorKind::NonzeroDiagonal: return "NonzeroDiagonal";
        case ErrorKind::NotRowStochastic: return "NotRowStochastic";
        case ErrorKind::UnstableParameter: return "UnstableParameter";
        case ErrorKind::SingularOperator: return "SingularOperator";
        case ErrorKind::NonInvertibleInformation: return "NonInvertibleInformation";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NumericalBreakdown: return "NumericalBreakdown";
        case ErrorKind::MaskMismatch: return "MaskMismatch";
        case ErrorKind::NoFiniteStart: return "NoFiniteStart";
        case ErrorKind::NotConverged: return "NotConverged";
        case ErrorKind::NonPDHessian: return "NonPDHessian";
        case ErrorKind::NegativeStatistic: return "NegativeStatistic";
        case ErrorKind::NonPDCovariance: return "NonPDCovariance";
        case ErrorKind::RetryExhausted: return "RetryExhausted";
        case ErrorKind::HarnessFailureRate: return "HarnessFailureRate";
        case ErrorKind::ConstantColumn: return "ConstantColumn";
        case ErrorKind::SingularCovariance: return "SingularCovariance";
        case ErrorKind::DegenerateNormalizer: return "DegenerateNormalizer";
        case ErrorKind::NoRootInInterval: return "NoRootInInterval";
        case ErrorKind::DomainViolation: return "DomainViolation";
        case ErrorKind::ConfigParse: return "ConfigParse";
        case ErrorKind::MissingInput: return "MissingInput";
        case ErrorKind::RaggedRows: return "RaggedRows";
        case ErrorKind::NonNumericCell: return "NonNumericCell";
        case ErrorKind::EmptyPanel: return "EmptyPanel";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace dysarar
