#pragma once

#include <numbers>

namespace morphwing::aero {

/// Blade-element and indicial-lag constants. The lag poles and gains default
/// to the classical Jones flat-plate approximation of the Wagner function,
/// expressed in semichord time.
struct AeroConstants {
  bool enabled = true;
  double rho = 1.225;                       // kg/m^3
  double cl_alpha = 2.0 * std::numbers::pi;  // 1/rad
  double alpha_max = 0.6;                   // rad, clamp on the effective angle
  double cd0 = 0.05;
  double k_d = 0.1;
  double a1 = 0.165;
  double b1 = 0.0455;
  double a2 = 0.335;
  double b2 = 0.3;
};

}  // namespace morphwing::aero
