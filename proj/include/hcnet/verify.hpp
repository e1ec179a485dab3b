#pragma once

#include <string>
#include <vector>

namespace hcnet::verify {

// One verification check: `measured` against `threshold` (pass iff
// measured <= threshold unless the check inverts it internally).
struct Check {
  std::string name;
  bool pass = false;
  double measured = 0;
  double threshold = 0;
  std::string note;
};

struct Suite {
  std::string name;
  std::vector<Check> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// Suites backing `hcnet verify --suite ...`; all run in 64-bit.
Suite oracle_suite();         // Fourier decay, FDM-Fourier agreement, HC/FDM equivalence
Suite conservation_suite();   // periodic-sum preservation, FDM and HC layer
Suite convergence_suite();    // measured space/time orders vs (2, 1)
Suite spectrum_suite();       // doubled-frequency pairs of z^2, gelu harmonics
Suite superposition_suite();  // FDM linearity residual
std::vector<Suite> all_suites();

// Finite-difference gradient sweeps (hcnet gradcheck --target ...).
Check gradcheck_ops();
Check gradcheck_hc_layer();
Check gradcheck_ra_layer();
Check gradcheck_model();

std::string format(const Suite& suite);

}  // namespace hcnet::verify
