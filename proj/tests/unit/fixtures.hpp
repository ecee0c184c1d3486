#pragma once

#include "flatsat/flatsat.hpp"

#include <numbers>

namespace fixtures {

using namespace flatsat;

inline PhysicalParams nominal_params() { return PhysicalParams{9.81, 1.45 * 9.81, std::numbers::pi / 18.0}; }
inline PhysicalParams wind_params() { return PhysicalParams{9.81, 2.0 * 9.81, 0.698}; }

inline Mat6 nominal_q() { return axis_blocks(2.3148, -1.3889, 1.6667); }
inline Mat6 tracking_p() { return axis_blocks(0.98, 0.78, 1.25); }

inline Mat6 wind_qw() {
  Mat6 q = Mat6::Zero();
  q.topLeftCorner<3, 3>() = Vec3(2.29, 2.29, 4.42).asDiagonal();
  q.topRightCorner<3, 3>() = -2.14 * Mat3::Identity();
  q.bottomLeftCorner<3, 3>() = -2.14 * Mat3::Identity();
  q.bottomRightCorner<3, 3>() = 2.07 * Mat3::Identity();
  return q;
}
inline constexpr double kWindBeta = 0.9668;

inline State sweep_initial_state() {
  State xi;
  xi << 1.05, 1.04, 0.85, -0.02, -1.39, -0.42;
  return xi;
}

inline DisturbanceSpec wind_disturbance() {
  return DisturbanceSpec{wind_e_matrix(),
                         {SineSignal{1.0, 1.5, std::numbers::pi / 8.0}, SineSignal::constant(std::cos(0.15))}};
}

// Triangle A -> B -> C -> A traversed twice, 4 s per leg.
inline ReferencePlan tracking_plan(int start) {
  const std::vector<Vec3> corners{Vec3(0, -0.6, 0.1), Vec3(0.6, 0.6, 0.1), Vec3(-0.6, 0.6, 0.1)};
  ReferencePlan plan;
  for (int i = 0; i < 7; ++i) plan.waypoints.push_back(corners[static_cast<size_t>((start + i) % 3)]);
  plan.segment_durations.assign(6, 4.0);
  plan.vref_margin = 0.2;
  return plan;
}

}  // namespace fixtures
