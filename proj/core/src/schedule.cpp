#include "fedrlr/schedule.hpp"

#include <cmath>
#include <sstream>

#include "fedrlr/errors.hpp"

namespace fedrlr::schedule {

double eta(const LrSchedule& lr, long t) {
  if (lr.kind == LrSchedule::Kind::kConstant) return lr.q;
  return lr.q / (lr.nu + static_cast<double>(t));
}

double mu(const PenaltySchedule& pen, const LrSchedule& lr, long t) {
  if (pen.kind == PenaltySchedule::Kind::kConstant) return pen.mu;
  if (!(pen.c1 > 0.0 && pen.c1 < 1.0)) {
    std::ostringstream os;
    os << "c1 = " << pen.c1 << " outside (0, 1)";
    throw InvalidC1(os.str());
  }
  return pen.c1 / eta(lr, t);
}

ScheduleReport validate_schedules(const LrSchedule& lr, const PenaltySchedule& pen,
                                  long rounds) {
  ScheduleReport r;
  if (!(lr.q > 0.0) || !std::isfinite(lr.q)) {
    r.warnings.push_back("learning-rate scale q must be positive");
  } else if (lr.kind == LrSchedule::Kind::kHarmonic) {
    if (!(lr.nu > 0.0)) {
      r.warnings.push_back("nu must be positive so eta(0) is finite");
    } else {
      // sum q/(nu+t) ~ q log t diverges; sum q^2/(nu+t)^2 is a convergent
      // p-series; (nu+t)/(nu+t+1) -> 1.
      r.sum_eta_diverges = true;
      r.sum_eta_sq_converges = true;
      r.ratio_tends_to_one = true;
    }
  } else {
    r.sum_eta_diverges = true;
    r.ratio_tends_to_one = true;
    r.warnings.push_back("constant eta: sum of eta^2 diverges");
  }

  if (pen.kind == PenaltySchedule::Kind::kScheduled) {
    r.c1_valid = pen.c1 > 0.0 && pen.c1 < 1.0;
    if (!r.c1_valid) {
      std::ostringstream os;
      os << "InvalidC1: c1 = " << pen.c1 << " must lie in (0, 1)";
      r.warnings.push_back(os.str());
    }
  } else {
    r.c1_valid = true;
    if (!(pen.mu >= 0.0)) r.warnings.push_back("constant mu must be non-negative");
    r.warnings.push_back("constant mu: the mu(t) = c1/eta(t) coupling does not hold");
  }
  if (rounds < 1) r.warnings.push_back("T_iter must be >= 1");
  return r;
}

}  // namespace fedrlr::schedule
