#pragma once

#include <array>

namespace flq::lbm {

// D2Q9 velocity set. Index order is fixed and mirrored by the snapshot file
// docs: 0 rest, 1..4 axis directions (+x, +y, -x, -y), 5..8 diagonals
// (+x+y, -x+y, -x-y, +x-y).
inline constexpr int kQ = 9;

inline constexpr std::array<int, kQ> kEx = {0, 1, 0, -1, 0, 1, -1, -1, 1};
inline constexpr std::array<int, kQ> kEy = {0, 0, 1, 0, -1, 1, 1, -1, -1};

inline constexpr std::array<double, kQ> kWeight = {
    4.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0,
    1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0};

// Opposite-direction table: kOpposite[i] reverses direction i.
inline constexpr std::array<int, kQ> kOpposite = {0, 3, 4, 1, 2, 7, 8, 5, 6};

// Lattice sound speed squared is 1/3; cs = 1/sqrt(3).
inline constexpr double kCs2 = 1.0 / 3.0;

} // namespace flq::lbm
