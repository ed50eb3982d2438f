#include "fedrlr/airlink.hpp"

#include <cmath>
#include <numbers>

#include "fedrlr/errors.hpp"

namespace fedrlr::airlink {
namespace {

template <typename ComplexDense>
void add_noise(ComplexDense& y, double sigma_z2, Rng& rng) {
  if (sigma_z2 <= 0.0) return;
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma_z2 / 2.0));
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      y(i, j) += Complex(re, im);
    }
  }
}

}  // namespace

RlcPrecoder draw_precoder(Index rank, int device_id, long round_id, Rng& rng) {
  if (rank < 1) throw DimensionMismatch("draw_precoder: R must be >= 1");
  const double a = 1.0 / std::sqrt(static_cast<double>(rank));
  RlcPrecoder out{Matrix(rank, rank), device_id, round_id};
  std::uint64_t bits = 0;
  int left = 0;
  for (Index j = 0; j < rank; ++j) {
    for (Index i = 0; i < rank; ++i) {
      if (left == 0) {
        bits = rng();
        left = 64;
      }
      out.f(i, j) = (bits & 1U) ? a : -a;
      bits >>= 1;
      --left;
    }
  }
  return out;
}

RlcPrecoder draw_precoder(Index rank, int device_id, long round_id, std::uint64_t seed,
                          int layer) {
  Rng rng = make_stream(seed, Stream::kPrecoder, static_cast<std::uint64_t>(device_id),
                        (static_cast<std::uint64_t>(round_id) << 16) ^
                            static_cast<std::uint64_t>(layer));
  return draw_precoder(rank, device_id, round_id, rng);
}

TransmitFrame precode(const Matrix& u_tilde, const Matrix& v_tilde, const RlcPrecoder& f,
                      Vector bias) {
  const Index r = f.f.rows();
  if (f.f.cols() != r || u_tilde.cols() != r || v_tilde.cols() != r) {
    throw DimensionMismatch("precode: factors must have R = " + std::to_string(r) +
                            " columns");
  }
  TransmitFrame frame;
  frame.s_u = u_tilde * f.f;
  frame.s_v = (v_tilde * f.f).transpose();
  frame.bias = std::move(bias);
  return frame;
}

ChannelRealization draw_channel(int num_devices, double sigma_z2, double gamma, Rng& rng) {
  if (num_devices < 1) throw Error("draw_channel: need at least one device");
  if (!(sigma_z2 >= 0.0)) throw Error("draw_channel: sigma_z2 must be >= 0");
  if (!(gamma > 0.0)) throw Error("draw_channel: gamma must be > 0");
  ChannelRealization chan;
  chan.sigma_z2 = sigma_z2;
  chan.gamma = gamma;
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  chan.h.reserve(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k) {
    const double re = normal(rng);
    const double im = normal(rng);
    chan.h.emplace_back(re, im);
  }
  return chan;
}

PolicyCoeffs policy_coeffs(const PowerPolicy& policy, Complex h, double gamma) {
  const double sg = std::sqrt(gamma);
  const Complex phase = std::polar(1.0, -std::arg(h));
  switch (policy.kind) {
    case PowerPolicy::Kind::kGbmaPhaseAlign:
      return {sg * phase, sg};
    case PowerPolicy::Kind::kChannelInversion: {
      const double mag = std::max(std::abs(h), policy.h_min);
      if (!(mag > 0.0)) throw NumericalOverflow("channel inversion with h = 0");
      return {sg * phase / mag, sg};
    }
    case PowerPolicy::Kind::kErrorFree:
      return {Complex(1.0, 0.0), 1.0};
  }
  throw Error("policy_coeffs: unknown policy");
}

ReceivedSignal mac_superpose(std::span<const TransmitFrame> frames,
                             const ChannelRealization& chan, const PowerPolicy& policy,
                             Rng& noise_rng) {
  if (frames.empty()) throw Error("mac_superpose: no frames");
  if (chan.h.size() != frames.size()) {
    throw DimensionMismatch("mac_superpose: " + std::to_string(frames.size()) +
                            " frames but " + std::to_string(chan.h.size()) +
                            " channel coefficients");
  }
  const TransmitFrame& first = frames.front();
  ReceivedSignal rx;
  rx.y_u = ComplexMatrix::Zero(first.s_u.rows(), first.s_u.cols());
  rx.y_v = ComplexMatrix::Zero(first.s_v.rows(), first.s_v.cols());
  rx.y_bias = Eigen::VectorXcd::Zero(first.bias.size());

  const bool exact = policy.kind == PowerPolicy::Kind::kErrorFree;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const TransmitFrame& f = frames[k];
    if (f.s_u.rows() != first.s_u.rows() || f.s_u.cols() != first.s_u.cols() ||
        f.s_v.rows() != first.s_v.rows() || f.s_v.cols() != first.s_v.cols() ||
        f.bias.size() != first.bias.size()) {
      throw DimensionMismatch("mac_superpose: frame " + std::to_string(k) +
                              " differs in shape");
    }
    const Complex gain = exact ? Complex(1.0, 0.0)
                               : chan.h[k] * policy_coeffs(policy, chan.h[k], chan.gamma).p;
    rx.y_u += gain * f.s_u.cast<Complex>();
    rx.y_v += gain * f.s_v.cast<Complex>();
    if (f.bias.size() > 0) rx.y_bias += gain * f.bias.cast<Complex>();
  }
  if (!exact) {
    add_noise(rx.y_u, chan.sigma_z2, noise_rng);
    add_noise(rx.y_v, chan.sigma_z2, noise_rng);
    add_noise(rx.y_bias, chan.sigma_z2, noise_rng);
  }
  return rx;
}

Matrix ls_estimate(const ComplexMatrix& y, double rho) {
  if (!(rho > 0.0)) throw Error("ls_estimate: rho must be > 0");
  return y.real() / rho;
}

Vector ls_estimate(const Eigen::VectorXcd& y, double rho) {
  if (!(rho > 0.0)) throw Error("ls_estimate: rho must be > 0");
  return y.real() / rho;
}

double transmit_power(const PolicyCoeffs& coeffs, const TransmitFrame& frame) {
  return std::norm(coeffs.p) * frame.energy();
}

double calibrate_gamma(const PowerPolicy& policy, std::span<const Complex> h,
                       std::span<const double> device_energy, double target_power) {
  if (policy.kind == PowerPolicy::Kind::kErrorFree) return 1.0;
  if (h.size() != device_energy.size() || h.empty()) {
    throw DimensionMismatch("calibrate_gamma: one energy per channel coefficient");
  }
  if (!(target_power > 0.0)) throw Error("calibrate_gamma: target power must be > 0");
  double unit = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    unit += std::norm(policy_coeffs(policy, h[k], 1.0).p) * device_energy[k];
  }
  unit /= static_cast<double>(h.size());
  if (!(unit > 0.0)) return 1.0;
  return target_power / unit;
}

double inversion_mean_gain(double h_min) {
  if (h_min <= 0.0) return 1.0;
  // E[min(|h|/a, 1)] with |h| Rayleigh(pdf 2r e^{-r^2}) = (sqrt(pi)/2) erf(a) / a.
  return 0.5 * std::sqrt(std::numbers::pi) * std::erf(h_min) / h_min;
}

}  // namespace fedrlr::airlink
