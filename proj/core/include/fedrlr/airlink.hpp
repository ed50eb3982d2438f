#pragma once

// Simulated uplink for over-the-air aggregation of factored models:
// random +-1/sqrt(R) precoding, Rayleigh block fading with AWGN, power
// control, and least-squares recovery of the superposed sum.
//
// Complex arithmetic lives only here; inputs and outputs are real.

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "fedrlr/manifold.hpp"
#include "fedrlr/rng.hpp"

namespace fedrlr::airlink {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

struct RlcPrecoder {
  Matrix f;  // R x R, entries +-1/sqrt(R)
  int device_id = 0;
  long round_id = 0;
};

/// Entries drawn i.i.d. with P(+1/sqrt(R)) = P(-1/sqrt(R)) = 1/2 from `rng`.
RlcPrecoder draw_precoder(Index rank, int device_id, long round_id, Rng& rng);

/// Deterministic in (seed, device_id, round_id, layer).
RlcPrecoder draw_precoder(Index rank, int device_id, long round_id, std::uint64_t seed,
                          int layer = 0);

/// What one device puts on the air for one layer.
struct TransmitFrame {
  Matrix s_u;   // M x R : U~ F
  Matrix s_v;   // R x N : (V~ F)^T
  Vector bias;  // uncompressed payload, may be empty

  /// Real symbols carried: (M + N) R + bias length.
  std::int64_t symbols() const { return s_u.size() + s_v.size() + bias.size(); }
  double energy() const { return s_u.squaredNorm() + s_v.squaredNorm() + bias.squaredNorm(); }
};

/// S_U = U~ F, S_V = (V~ F)^T.
TransmitFrame precode(const Matrix& u_tilde, const Matrix& v_tilde, const RlcPrecoder& f,
                      Vector bias = {});

struct ChannelRealization {
  std::vector<Complex> h;  // one coefficient per device, CN(0, 1)
  double sigma_z2 = 1.0;
  double gamma = 1.0;
};

ChannelRealization draw_channel(int num_devices, double sigma_z2, double gamma, Rng& rng);

struct PowerPolicy {
  enum class Kind { kGbmaPhaseAlign, kChannelInversion, kErrorFree };
  Kind kind = Kind::kChannelInversion;
  /// Channel-inversion clipping floor on |h|; 0 disables clipping.
  double h_min = 0.2;
};

struct PolicyCoeffs {
  Complex p;   // transmit coefficient
  double rho;  // receive scaling
};

/// GbmaPhaseAlign: p = sqrt(gamma) e^{-j arg h}, rho = sqrt(gamma).
/// ChannelInversion: p = sqrt(gamma) e^{-j arg h} / max(|h|, h_min),
///   rho = sqrt(gamma).
/// ErrorFree: p = 1, rho = 1.
PolicyCoeffs policy_coeffs(const PowerPolicy& policy, Complex h, double gamma);

struct ReceivedSignal {
  ComplexMatrix y_u;
  ComplexMatrix y_v;
  Eigen::VectorXcd y_bias;
};

/// Y = sum_k h_k p_k S_k + Z with Z_ij ~ CN(0, sigma_z2) drawn from `noise_rng`
/// in the order y_u, y_v, y_bias (column-major). ErrorFree returns the exact
/// sum and draws nothing. Frames must all have identical shapes.
ReceivedSignal mac_superpose(std::span<const TransmitFrame> frames,
                             const ChannelRealization& chan, const PowerPolicy& policy,
                             Rng& noise_rng);

/// Re(Y) / rho.
Matrix ls_estimate(const ComplexMatrix& y, double rho);
Vector ls_estimate(const Eigen::VectorXcd& y, double rho);

/// |p|^2 ||S||_F^2 over every payload of the frame.
double transmit_power(const PolicyCoeffs& coeffs, const TransmitFrame& frame);

/// gamma for which the mean per-device transmit energy over this round's
/// frames equals `target_power`. `device_energy[k]` is the energy of all of
/// device k's frames. Returns 1 for ErrorFree.
double calibrate_gamma(const PowerPolicy& policy, std::span<const Complex> h,
                       std::span<const double> device_energy, double target_power);

/// E[min(|h| / h_min, 1)] for h ~ CN(0, 1): the mean gain p h / sqrt(gamma)
/// under clipped channel inversion (1 when h_min = 0).
double inversion_mean_gain(double h_min);

}  // namespace fedrlr::airlink
