#pragma once

#include <cstddef>
#include <span>

namespace spax {

// SI-SDR is clamped to [-60, +60] dB; the gradient is zero in the clamped
// regions so perfect/degenerate solutions stay finite.
constexpr double kSiSdrClampDb = 60.0;

struct LossBreakdown {
  double si_sdr_db = 0.0;
  double si_sdr_loss = 0.0;  // = -si_sdr_db
  double l1 = 0.0;
  double total = 0.0;  // = si_sdr_loss + lambda*l1
  double lambda = 0.0;
};

// Scale-invariant SDR in dB: project est onto ref, compare target vs residual
// power. Throws invalid_argument on length mismatch or all-zero reference.
double si_sdr(std::span<const double> est, std::span<const double> ref);

// Plain scale-sensitive SDR: 10*log10(||ref||^2 / ||est - ref||^2), same clamp.
double sdr(std::span<const double> est, std::span<const double> ref);

// Mean absolute error (mean over samples, so loss weights stay
// length-independent).
double l1(std::span<const double> est, std::span<const double> ref);

LossBreakdown total_loss(std::span<const double> est,
                         std::span<const double> ref, double lambda);

// Same, plus d(total)/d(est) written to grad_est (length of est).
LossBreakdown total_loss_with_grad(std::span<const double> est,
                                   std::span<const double> ref, double lambda,
                                   std::span<double> grad_est);

}  // namespace spax
