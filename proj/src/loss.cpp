#include "spax/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace spax {

namespace {

constexpr double kLn10 = 2.302585092994045684017991454684;

void check_lengths(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size() || est.empty())
    throw std::invalid_argument("waveform lengths must match and be non-zero");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double clamp_db(double db) {
  if (db > kSiSdrClampDb) return kSiSdrClampDb;
  if (db < -kSiSdrClampDb) return -kSiSdrClampDb;
  return db;
}

}  // namespace

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  check_lengths(est, ref);
  const double ref_pow = dot(ref, ref);
  if (ref_pow <= 0.0)
    throw std::invalid_argument("si_sdr: reference signal is all zero");
  const double alpha = dot(est, ref) / ref_pow;
  const double target_pow = alpha * alpha * ref_pow;
  double resid_pow = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double r = est[i] - alpha * ref[i];
    resid_pow += r * r;
  }
  if (target_pow <= 0.0) return -kSiSdrClampDb;  // zero-correlation estimate
  if (resid_pow <= 1e-12 * target_pow) return kSiSdrClampDb;
  return clamp_db(10.0 * std::log10(target_pow / resid_pow));
}

double sdr(std::span<const double> est, std::span<const double> ref) {
  check_lengths(est, ref);
  const double ref_pow = dot(ref, ref);
  if (ref_pow <= 0.0)
    throw std::invalid_argument("sdr: reference signal is all zero");
  double resid_pow = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double r = est[i] - ref[i];
    resid_pow += r * r;
  }
  if (resid_pow <= 1e-12 * ref_pow) return kSiSdrClampDb;
  return clamp_db(10.0 * std::log10(ref_pow / resid_pow));
}

double l1(std::span<const double> est, std::span<const double> ref) {
  check_lengths(est, ref);
  double acc = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i)
    acc += std::abs(est[i] - ref[i]);
  return acc / static_cast<double>(est.size());
}

LossBreakdown total_loss(std::span<const double> est,
                         std::span<const double> ref, double lambda) {
  LossBreakdown out;
  out.lambda = lambda;
  out.si_sdr_db = si_sdr(est, ref);
  out.si_sdr_loss = -out.si_sdr_db;
  out.l1 = l1(est, ref);
  out.total = out.si_sdr_loss + lambda * out.l1;
  return out;
}

LossBreakdown total_loss_with_grad(std::span<const double> est,
                                   std::span<const double> ref, double lambda,
                                   std::span<double> grad_est) {
  check_lengths(est, ref);
  if (grad_est.size() != est.size())
    throw std::invalid_argument("grad buffer length mismatch");
  LossBreakdown out = total_loss(est, ref, lambda);

  const std::size_t n = est.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = est[i] - ref[i];
    grad_est[i] = lambda * inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
  }

  // SI-SDR gradient vanishes in the clamped regions.
  if (std::abs(out.si_sdr_db) < kSiSdrClampDb) {
    const double ref_pow = dot(ref, ref);
    const double alpha = dot(est, ref) / ref_pow;
    const double target_pow = alpha * alpha * ref_pow;
    double resid_pow = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = est[i] - alpha * ref[i];
      resid_pow += r * r;
    }
    // d(si_sdr)/d(est) = (20/ln10) * (alpha*ref/target_pow - resid/resid_pow)
    const double c = 20.0 / kLn10;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = est[i] - alpha * ref[i];
      const double dsi =
          c * (alpha * ref[i] / target_pow - r / resid_pow);
      grad_est[i] += -dsi;  // loss term is the negative SI-SDR
    }
  }
  return out;
}

}  // namespace spax
