#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "commgate/enforcers.hpp"
#include "commgate/rng.hpp"

using namespace commgate;

// Straight-line re-implementations of the published formulas, kept separate
// from the production code on purpose.
namespace formula {

double comm_max(double c) { return std::fabs(1.0 - c); }

double p_term(double b, double c, bool paper) {
  if (c <= b) return (b - c) / b;
  return paper ? (b - c) / (1.0 - b) : (c - b) / (1.0 - b);
}

double d_term(double now, double prev) { return now - prev; }

double i_term(double running_sum, double k) {
  if (running_sum > k) return k;
  if (running_sum < -k) return -k;
  return running_sum;
}

double penalty(double rp, double rd, double ri, double kp, double kd, double ki) {
  return kp * rp + kd * rd + ki * ri;
}

double hard(double c_star, double c_hard) { return std::fabs(c_hard - c_star); }

}  // namespace formula

TEST_CASE("comm_max_penalty examples") {
  CHECK(comm_max_penalty(1.0) == doctest::Approx(0.0));
  CHECK(comm_max_penalty(0.0) == doctest::Approx(1.0));
  CHECK(comm_max_penalty(0.7) == doctest::Approx(0.3));
  CHECK_THROWS_AS(comm_max_penalty(1.5), ContractViolation);
}

TEST_CASE("soft_p_term examples") {
  CHECK(soft_p_term(0.3, 0.3) == doctest::Approx(0.0));
  CHECK(soft_p_term(0.5, 0.0) == doctest::Approx(1.0));
  CHECK(soft_p_term(0.5, 0.75, PTermMode::PaperVerbatim) == doctest::Approx(-0.5));
  CHECK(soft_p_term(0.5, 0.75, PTermMode::Symmetric) == doctest::Approx(0.5));
  CHECK_THROWS_AS(soft_p_term(1.0, 0.5), ConfigError);
  CHECK_THROWS_AS(soft_p_term(0.0, 0.5), ConfigError);
}

TEST_CASE("soft p term is zero iff on budget, symmetric mode nonnegative") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    double b = rng.uniform(0.01, 0.99);
    double c = rng.uniform();
    double sym = soft_p_term(b, c, PTermMode::Symmetric);
    CHECK(sym >= 0.0);
    if (std::fabs(c - b) > 1e-12) CHECK(sym > 0.0);
    CHECK(soft_p_term(b, b) == doctest::Approx(0.0));
  }
}

TEST_CASE("soft_d_term examples") {
  CHECK(soft_d_term(0.2, 0.5) == doctest::Approx(-0.3));
  CHECK(soft_d_term(0.42, 0.42) == doctest::Approx(0.0));
  CHECK(soft_d_term(0.4, 0.0) == doctest::Approx(0.4));  // first epoch: prev = 0
}

TEST_CASE("soft_i_term clamps the running sum") {
  EpochCommStats stats;
  double out = 0.0;
  for (int i = 0; i < 5; ++i) out = soft_i_term(stats, 0.1, 0.1);
  CHECK(out == doctest::Approx(0.1));  // sum 0.5 clamped at K
  EpochCommStats neg;
  for (int i = 0; i < 5; ++i) out = soft_i_term(neg, -0.1, 0.1);
  CHECK(out == doctest::Approx(-0.1));
  EpochCommStats zero;
  CHECK(soft_i_term(zero, 0.0, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("soft_penalty with published gains") {
  BudgetConfig cfg;  // gains 1 / 1.6 / 0.026
  EpochCommStats stats;
  stats.r_p = 0.4;
  stats.r_d = 0.4;
  stats.r_i = 0.1;
  CHECK(soft_penalty(stats, cfg) == doctest::Approx(1.0426).epsilon(1e-12));
  EpochCommStats zeros;
  CHECK(soft_penalty(zeros, cfg) == doctest::Approx(0.0));
  BudgetConfig no_gains;
  no_gains.gain_p = no_gains.gain_d = no_gains.gain_i = 0.0;
  CHECK(soft_penalty(stats, no_gains) == doctest::Approx(0.0));
}

TEST_CASE("hard_penalty examples") {
  CHECK(hard_penalty(0.5, 0.2) == doctest::Approx(0.3));
  CHECK(hard_penalty(0.4, 0.4) == doctest::Approx(0.0));
  CHECK(hard_penalty(1.0, 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(hard_penalty(0.2, 0.5), ContractViolation);
}

TEST_CASE("formula oracle agreement on 1e4 random inputs") {
  Rng rng(202);
  for (int i = 0; i < 10000; ++i) {
    double b = rng.uniform(0.01, 0.99);
    double c = rng.uniform();
    CHECK(std::fabs(comm_max_penalty(c) - formula::comm_max(c)) <= 1e-12);
    CHECK(std::fabs(soft_p_term(b, c, PTermMode::Symmetric) -
                    formula::p_term(b, c, false)) <= 1e-12);
    CHECK(std::fabs(soft_p_term(b, c, PTermMode::PaperVerbatim) -
                    formula::p_term(b, c, true)) <= 1e-12);
    double now = rng.uniform(-1.0, 1.0), prev = rng.uniform(-1.0, 1.0);
    CHECK(std::fabs(soft_d_term(now, prev) - formula::d_term(now, prev)) <= 1e-12);
    double k = rng.uniform(0.01, 0.5);
    EpochCommStats st;
    st.integral = rng.uniform(-0.4, 0.4);
    double expect = formula::i_term(st.integral + now, k);
    CHECK(std::fabs(soft_i_term(st, now, k) - expect) <= 1e-12);
    BudgetConfig cfg;
    EpochCommStats s2;
    s2.r_p = rng.uniform(-1, 1);
    s2.r_d = rng.uniform(-1, 1);
    s2.r_i = rng.uniform(-1, 1);
    CHECK(std::fabs(soft_penalty(s2, cfg) -
                    formula::penalty(s2.r_p, s2.r_d, s2.r_i, 1.0, 1.6, 0.026)) <= 1e-12);
    double cs = rng.uniform(), ch = rng.uniform() * cs;
    CHECK(std::fabs(hard_penalty(cs, ch) - formula::hard(cs, ch)) <= 1e-12);
  }
}

TEST_CASE("token bucket: full budget never masks") {
  std::vector<uint8_t> attempts(10, 1);
  Rng rng(5);
  auto delivered = hard_mask(attempts, 1.0, 10, 0.0, 0.0, rng, false);
  for (auto d : delivered) CHECK(d == 1);
}

TEST_CASE("token bucket: deliveries accrue with alive steps") {
  // b=0.2, T=10, attempts at the first five steps: tokens accrue as
  // floor(0.2*s), so only one delivery fits inside the first five steps and
  // the per-episode count stays under floor(b*T) = 2 for any attempt pattern.
  std::vector<uint8_t> attempts = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  Rng rng(5);
  auto delivered = hard_mask(attempts, 0.2, 10, 0.0, 0.0, rng, false);
  int total = 0;
  for (auto d : delivered) total += d;
  CHECK(total == 1);
  CHECK(delivered[4] == 1);  // floor(0.2*5) = 1
  std::vector<uint8_t> all(10, 1);
  auto d2 = hard_mask(all, 0.2, 10, 0.0, 0.0, rng, false);
  int t2 = 0;
  for (auto d : d2) t2 += d;
  CHECK(t2 == 2);  // capacity floor(b*T)
}

TEST_CASE("hard budget structural invariant over random attempt patterns") {
  Rng rng(909);
  for (int trial = 0; trial < 10000; ++trial) {
    int t_max = 1 + rng.uniform_int(40);
    double b = rng.uniform(0.02, 1.0);
    int span = 1 + rng.uniform_int(t_max);  // agent alive for part of the episode
    std::vector<uint8_t> attempts(static_cast<size_t>(span));
    for (auto& a : attempts) a = rng.bernoulli(0.7) ? 1 : 0;
    Rng mask_rng = rng.fork(trial);
    bool training = rng.bernoulli(0.5);
    auto delivered = hard_mask(attempts, b, t_max, 0.0, 0.3, mask_rng, training);
    int total = 0;
    for (size_t s = 0; s < delivered.size(); ++s) {
      CHECK(delivered[s] <= attempts[s]);
      total += delivered[s];
    }
    CHECK(total <= static_cast<int>(std::floor(b * t_max + 1e-9)));
    CHECK(total <= static_cast<int>(std::floor(b * span + 1e-9)));
    // Delivered fraction of alive steps never exceeds the budget.
    CHECK(static_cast<double>(total) <= b * span + 1e-9);
  }
}
