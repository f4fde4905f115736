#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace selfevo {

// Deliberate defects for exercising the verification suite itself.
enum class Fault {
  none,
  flip_lse_sign,  // advantages computed as scaled reward + baseline
};

struct PropertyResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst observed error or the measured quantity
  double threshold = 0.0;  // bound the measurement is compared against
  std::string detail;
};

// Runs the shaping identities, calibration bounds, KL estimator checks,
// gradient checks and distribution-matching convergence. Deterministic.
std::vector<PropertyResult> run_verification(Fault fault = Fault::none);

// Prints one line per property; returns 0 iff all passed.
int cli_verify(Fault fault, std::ostream& out);

}  // namespace selfevo
