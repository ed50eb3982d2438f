#pragma once

#include <string>
#include <vector>

namespace fedrlr::schedule {

/// eta(t) = q / (nu + t) (harmonic), or a constant eta = q (for ablations
/// and for exercising the validator).
struct LrSchedule {
  enum class Kind { kHarmonic, kConstant };
  Kind kind = Kind::kHarmonic;
  double q = 2.0;
  double nu = 1000.0;
};

/// mu(t) = c1 / eta(t) (scheduled) or a fixed mu (constant).
struct PenaltySchedule {
  enum class Kind { kScheduled, kConstant };
  Kind kind = Kind::kScheduled;
  double c1 = 0.006;
  double mu = 0.0;
};

double eta(const LrSchedule& lr, long t);

/// Throws InvalidC1 when the scheduled variant has c1 outside (0, 1).
double mu(const PenaltySchedule& pen, const LrSchedule& lr, long t);

struct ScheduleReport {
  bool sum_eta_diverges = false;       // sum_t eta(t) = infinity
  bool sum_eta_sq_converges = false;   // sum_t eta(t)^2 < infinity
  bool ratio_tends_to_one = false;     // eta(t+1)/eta(t) -> 1
  bool c1_valid = false;               // 0 < c1 < 1 (scheduled penalty)
  std::vector<std::string> warnings;

  bool ok() const {
    return sum_eta_diverges && sum_eta_sq_converges && ratio_tends_to_one && c1_valid;
  }
};

/// Checks the step-size conditions used by the convergence theory. The checks
/// are closed-form facts about each family, not numeric partial sums.
/// Never throws; problems land in `warnings`.
ScheduleReport validate_schedules(const LrSchedule& lr, const PenaltySchedule& pen, long rounds);

}  // namespace fedrlr::schedule
