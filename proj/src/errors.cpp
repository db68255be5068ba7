#include "potflow/errors.hpp"

namespace potflow {

const char* error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::OutsideTarget: return "OutsideTarget";
    case ErrorKind::DegenerateCross: return "DegenerateCross";
    case ErrorKind::MassImbalance: return "MassImbalance";
    case ErrorKind::DensityOutOfBounds: return "DensityOutOfBounds";
    case ErrorKind::BitwistFailure: return "BitwistFailure";
    case ErrorKind::TangentDirection: return "TangentDirection";
    case ErrorKind::NotCConvex: return "NotCConvex";
    case ErrorKind::BoundaryIncompatible: return "BoundaryIncompatible";
    case ErrorKind::ImageMismatch: return "ImageMismatch";
    case ErrorKind::NonPositiveDet: return "NonPositiveDet";
    case ErrorKind::ObliquenessLost: return "ObliquenessLost";
    case ErrorKind::NewtonStall: return "NewtonStall";
    case ErrorKind::StepRejected: return "StepRejected";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::EllipticityLost: return "EllipticityLost";
    case ErrorKind::NonPositiveTheta: return "NonPositiveTheta";
    case ErrorKind::MetricDegenerate: return "MetricDegenerate";
    case ErrorKind::DegenerateImage: return "DegenerateImage";
    case ErrorKind::NoDecayWindow: return "NoDecayWindow";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingInput: return "MissingInput";
  }
  return "Unknown";
}

}  // namespace potflow
