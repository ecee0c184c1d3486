#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace flatsat {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Translational state [p; p_dot] of the vehicle.
using State = Vec6;
/// Input of the linearized double integrator, in m/s^2.
using VirtualInput = Vec3;

inline Vec3 position(const State& xi) { return xi.head<3>(); }
inline Vec3 velocity(const State& xi) { return xi.tail<3>(); }

enum class ErrorKind {
  InvalidArgument,
  ZeroThrust,
  SingularAttitude,
  NonPositiveSampling,
  InfeasibleBall,
  EmptyDifference,
  ZeroVector,
  NoFeasibleScaling,
  OriginNotInterior,
  Infeasible,
  ThresholdAboveInitial,
  UnstableAcl,
  DegenerateConstraint,
  ReferenceTooAggressive,
  InputConstraintViolated,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroThrust: return "ZeroThrust";
    case ErrorKind::SingularAttitude: return "SingularAttitude";
    case ErrorKind::NonPositiveSampling: return "NonPositiveSampling";
    case ErrorKind::InfeasibleBall: return "InfeasibleBall";
    case ErrorKind::EmptyDifference: return "EmptyDifference";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NoFeasibleScaling: return "NoFeasibleScaling";
    case ErrorKind::OriginNotInterior: return "OriginNotInterior";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::ThresholdAboveInitial: return "ThresholdAboveInitial";
    case ErrorKind::UnstableAcl: return "UnstableAcl";
    case ErrorKind::DegenerateConstraint: return "DegenerateConstraint";
    case ErrorKind::ReferenceTooAggressive: return "ReferenceTooAggressive";
    case ErrorKind::InputConstraintViolated: return "InputConstraintViolated";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// The double-integrator pair (A, B) of the flat-output model.
inline Mat6 drift_matrix() {
  Mat6 a = Mat6::Zero();
  a.topRightCorner<3, 3>().setIdentity();
  return a;
}

inline Mat63 input_matrix() {
  Mat63 b = Mat63::Zero();
  b.bottomRows<3>().setIdentity();
  return b;
}

/// Builds the 6x6 matrix [[a*I, b*I], [b*I, c*I]] used throughout for
/// per-axis-identical quadratic forms.
inline Mat6 axis_blocks(double a, double b, double c) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = a * Mat3::Identity();
  m.topRightCorner<3, 3>() = b * Mat3::Identity();
  m.bottomLeftCorner<3, 3>() = b * Mat3::Identity();
  m.bottomRightCorner<3, 3>() = c * Mat3::Identity();
  return m;
}

/// Embeds per-axis 2x2 blocks (position, velocity) into the [p; p_dot]
/// ordering of a 6x6 matrix.
inline Mat6 from_axis_blocks(const Mat2& x, const Mat2& y, const Mat2& z) {
  Mat6 m = Mat6::Zero();
  const Mat2* blocks[3] = {&x, &y, &z};
  for (int i = 0; i < 3; ++i) {
    const Mat2& blk = *blocks[i];
    m(i, i) = blk(0, 0);
    m(i, i + 3) = blk(0, 1);
    m(i + 3, i) = blk(1, 0);
    m(i + 3, i + 3) = blk(1, 1);
  }
  return m;
}

inline Mat2 axis_block(const Mat6& m, int axis) {
  Mat2 blk;
  blk << m(axis, axis), m(axis, axis + 3), m(axis + 3, axis), m(axis + 3, axis + 3);
  return blk;
}

}  // namespace flatsat
