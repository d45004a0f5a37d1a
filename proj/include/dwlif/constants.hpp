#pragma once

namespace dwlif::phys {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMu0 = 1.25663706212e-6;        // T·m/A
inline constexpr double kBohrMagneton = 9.2740100783e-24; // J/T
inline constexpr double kElementaryCharge = 1.602176634e-19;

}  // namespace dwlif::phys
