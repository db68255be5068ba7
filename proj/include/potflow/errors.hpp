#pragma once
#include <stdexcept>
#include <string>

namespace potflow {

enum class ErrorKind {
  NonConvergence,
  OutsideTarget,
  DegenerateCross,
  MassImbalance,
  DensityOutOfBounds,
  BitwistFailure,
  TangentDirection,
  NotCConvex,
  BoundaryIncompatible,
  ImageMismatch,
  NonPositiveDet,
  ObliquenessLost,
  NewtonStall,
  StepRejected,
  NoConvergence,
  EllipticityLost,
  NonPositiveTheta,
  MetricDegenerate,
  DegenerateImage,
  NoDecayWindow,
  DegenerateDenominator,
  ConfigError,
  MissingInput,
};

const char* error_name(ErrorKind k);

class FlowError : public std::runtime_error {
 public:
  FlowError(ErrorKind k, const std::string& msg)
      : std::runtime_error(std::string(error_name(k)) + ": " + msg), kind_(k) {}
  ErrorKind kind() const { return kind_; }
  const char* name() const { return error_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace potflow
