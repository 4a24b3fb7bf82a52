#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spax/loss.hpp"
#include "spax/rng.hpp"

using namespace spax;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  Rng rng(seed);
  for (auto& x : v) x = rng.gaussian();
  return v;
}

}  // namespace

TEST_CASE("si_sdr hand case: [1,1] vs [1,0] gives 0 dB") {
  const std::vector<double> est{1.0, 1.0};
  const std::vector<double> ref{1.0, 0.0};
  CHECK(std::abs(si_sdr(est, ref)) < 1e-12);
}

TEST_CASE("si_sdr clamps perfect reconstruction at +60 dB") {
  const auto ref = randn(64, 1);
  std::vector<double> est = ref;
  for (auto& x : est) x *= 2.5;
  CHECK(si_sdr(est, ref) == kSiSdrClampDb);
  CHECK(si_sdr(ref, ref) == kSiSdrClampDb);
}

TEST_CASE("si_sdr is scale invariant in the estimate") {
  const auto ref = randn(128, 2);
  const auto est = randn(128, 3);
  const double base = si_sdr(est, ref);
  for (const double c : {0.1, 3.0, -2.0}) {
    std::vector<double> scaled = est;
    for (auto& x : scaled) x *= c;
    CHECK(std::abs(si_sdr(scaled, ref) - base) < 1e-9);
  }
}

TEST_CASE("si_sdr rejects a zero reference") {
  const std::vector<double> est{1.0, 2.0};
  const std::vector<double> ref{0.0, 0.0};
  CHECK_THROWS_AS(si_sdr(est, ref), std::invalid_argument);
}

TEST_CASE("si_sdr of an orthogonal estimate hits the floor sentinel") {
  const std::vector<double> est{0.0, 1.0};
  const std::vector<double> ref{1.0, 0.0};
  CHECK(si_sdr(est, ref) == -kSiSdrClampDb);
}

TEST_CASE("si_sdr grows monotonically as orthogonal noise shrinks") {
  const std::size_t n = 256;
  auto ref = randn(n, 4);
  auto noise = randn(n, 5);
  // project the reference direction out of the noise
  double rr = 0.0, nr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rr += ref[i] * ref[i];
    nr += noise[i] * ref[i];
  }
  for (std::size_t i = 0; i < n; ++i) noise[i] -= nr / rr * ref[i];

  double prev = -1e9;
  for (double eps = 1.0; eps > 1e-3; eps /= 2.0) {
    std::vector<double> est(n);
    for (std::size_t i = 0; i < n; ++i) est[i] = ref[i] + eps * noise[i];
    const double db = si_sdr(est, ref);
    CHECK(db > prev);
    prev = db;
  }
}

TEST_CASE("plain sdr cases") {
  const auto ref = randn(64, 6);
  CHECK(sdr(ref, ref) == kSiSdrClampDb);

  std::vector<double> twice = ref;
  for (auto& x : twice) x *= 2.0;
  CHECK(sdr(twice, ref) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<double> zero(ref.size(), 0.0);
  CHECK(sdr(zero, ref) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("l1 is the mean absolute difference") {
  const auto ref = randn(32, 7);
  CHECK(l1(ref, ref) == 0.0);

  std::vector<double> shifted = ref;
  for (auto& x : shifted) x += 0.5;
  CHECK(l1(shifted, ref) == doctest::Approx(0.5).epsilon(1e-12));

  const auto est = randn(8, 8);
  const auto ref8 = randn(8, 9);
  double acc = 0.0;
  for (std::size_t i = 0; i < 8; ++i) acc += std::abs(est[i] - ref8[i]);
  CHECK(l1(est, ref8) == doctest::Approx(acc / 8.0).epsilon(1e-12));

  std::vector<double> wrong(7, 0.0);
  CHECK_THROWS_AS(l1(wrong, ref8), std::invalid_argument);
}

TEST_CASE("total loss composes its terms") {
  const std::vector<double> est{1.0, 1.0};
  const std::vector<double> ref{1.0, 0.0};

  const LossBreakdown no_l1 = total_loss(est, ref, 0.0);
  CHECK(no_l1.total == doctest::Approx(-no_l1.si_sdr_db));

  const LossBreakdown perfect = total_loss(ref, ref, 100.0);
  CHECK(perfect.total == doctest::Approx(-kSiSdrClampDb));

  const LossBreakdown mixed = total_loss(est, ref, 100.0);
  CHECK(mixed.si_sdr_db == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mixed.total == doctest::Approx(0.0 + 100.0 * mixed.l1));
  CHECK(mixed.l1 == doctest::Approx(0.5));
}

TEST_CASE("loss gradient matches central finite differences") {
  const std::size_t n = 48;
  const auto ref = randn(n, 10);
  auto est = randn(n, 11);
  std::vector<double> grad(n);
  total_loss_with_grad(est, ref, 100.0, grad);

  const double eps = 1e-7;
  for (std::size_t i = 0; i < n; i += 5) {
    est[i] += eps;
    const double up = total_loss(est, ref, 100.0).total;
    est[i] -= 2 * eps;
    const double dn = total_loss(est, ref, 100.0).total;
    est[i] += eps;
    const double fd = (up - dn) / (2 * eps);
    const double rel =
        std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-8});
    CHECK(rel < 1e-6);
  }
}

TEST_CASE("gradient is zero inside the clamp region") {
  const auto ref = randn(32, 12);
  std::vector<double> grad(32);
  const LossBreakdown loss = total_loss_with_grad(ref, ref, 0.0, grad);
  CHECK(loss.si_sdr_db == kSiSdrClampDb);
  for (double g : grad) CHECK(g == 0.0);
}
