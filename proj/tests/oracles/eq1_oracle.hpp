#pragma once

#include <cmath>
#include <span>

// Test-only reimplementation of the 17-input benchmark target, written term by
// term from the published formula and independent of the library code.
namespace oracle {

inline double eq1(std::span<const double> x) {
  const double terms[15] = {
      2.5 * x[0],
      -1.2 * x[1] * x[1],
      0.8 * std::sin(x[2]),
      1.5 * std::cos(x[3]),
      0.7 * x[4] * x[5],
      -0.3 * x[6] * x[6] * x[6],
      std::exp(-0.1 * x[7] * x[7]),
      1.1 * x[8],
      -0.5 * x[9] * x[9],
      0.9 * std::tanh(x[10]),
      0.2 * x[11] * x[11],
      -0.6 * std::sqrt(std::fabs(x[12])),
      0.5 * x[13] * x[14],
      -0.4 * x[15],
      0.3 * x[16],
  };
  // Sum in reverse order on purpose; agreement is then to rounding only.
  long double acc = 0.0L;
  for (int i = 14; i >= 0; --i) acc += terms[i];
  return static_cast<double>(acc);
}

}  // namespace oracle
