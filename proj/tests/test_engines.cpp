#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "titekit/alt_engines.hpp"
#include "titekit/engine.hpp"

using namespace titekit;

namespace {

DesignParams params_phi(double phi) {
  DesignParams p;
  p.phi = phi;
  return p;
}

EffectiveData eff(int n, int y, int pending, double m) { return {n, y, pending, m}; }

// Beta(2,3) CDF in closed form.
double beta23(double x) { return 6 * x * x - 8 * x * x * x + 3 * x * x * x * x; }

}  // namespace

TEST_SUITE("keyboard") {

TEST_CASE("key layout") {
  Keyboard kb(params_phi(0.3));
  REQUIRE(kb.size() == 9);
  CHECK(kb.target_index() == 2);
  for (int k = 0; k < kb.size(); ++k) {
    CHECK(kb.keys()[k].lo == doctest::Approx(0.05 + 0.1 * k));
    CHECK(kb.keys()[k].width() == doctest::Approx(0.1).epsilon(1e-12));
  }
  CHECK(kb.keys()[2].lo == doctest::Approx(0.25));
  CHECK(kb.keys()[2].hi == doctest::Approx(0.35));

  Keyboard half(params_phi(0.5));
  CHECK(half.size() == 9);
  CHECK(half.target_index() == 4);

  Keyboard low(params_phi(0.2));
  CHECK(low.target_index() == 1);
  CHECK(low.size() == 9);
  CHECK(low.keys().front().lo == doctest::Approx(0.05));
  CHECK(low.keys().back().hi == doctest::Approx(0.95));

  DesignParams bad = params_phi(0.04);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = params_phi(0.3);
  bad.delta2 = 0.8;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("strongest key") {
  const Keyboard kb(params_phi(0.3));
  // Beta(2,2): symmetric about 0.5, so the key (0.45, 0.55) holds the most mass.
  CHECK(strongest_key(eff(2, 1, 0, 1), kb) == 4);
  const auto masses = key_masses(eff(2, 1, 0, 1), kb);
  auto b22 = [](double x) { return 3 * x * x - 2 * x * x * x; };
  for (int k = 0; k < kb.size(); ++k) {
    CHECK(masses[k] == doctest::Approx(b22(kb.keys()[k].hi) - b22(kb.keys()[k].lo)).epsilon(1e-12));
  }
  CHECK(masses[4] == doctest::Approx(0.14950));
  // Beta(1,4): decreasing density.
  CHECK(strongest_key(eff(3, 0, 0, 3), kb) == 0);
  // Beta(1,1): all keys tie, the target wins.
  CHECK(strongest_key(eff(0, 0, 0, 0), kb) == kb.target_index());
  // Equal masses either side of the target go to the higher key.
  CHECK(strongest_key(std::vector<double>{0.1, 0.3, 0.2, 0.3, 0.1}, 2) == 3);
  CHECK(strongest_key(std::vector<double>{0.3, 0.3, 0.2, 0.1}, 2) == 1);
}

TEST_CASE("decision examples") {
  const DesignParams p = params_phi(0.3);
  const Keyboard kb(p);
  const DosePosition mid{false, false};
  CHECK(keyboard_decision(eff(3, 1, 2, 0.5), p, kb, mid).action == Action::DeEscalate);
  CHECK(keyboard_decision(eff(9, 1, 5, 5.5), p, kb, mid).action == Action::Escalate);
  CHECK(keyboard_decision(eff(3, 0, 2, 0.4), p, kb, mid).action == Action::SuspendAccrual);
  CHECK(keyboard_decision(eff(6, 1, 3, 3.0), p, kb, mid).action == Action::Stay);

  const double tail = 1.0 - std::pow(0.3, 4);  // Pr(p > 0.3) under Beta(4,1)
  CHECK(tail > p.eta);
  CHECK(exceeds_elimination_cutoff(3, 3, p));
  CHECK_FALSE(exceeds_elimination_cutoff(3, 2, p));
  CHECK(keyboard_decision(eff(3, 3, 0, 0), p, kb, mid).action == Action::EliminateAndDeEscalate);
  CHECK(keyboard_decision(eff(3, 3, 0, 0), p, kb, {true, false}).action == Action::TerminateTrial);
}

TEST_CASE("elimination cutoff against the binomial-tail oracle") {
  const DesignParams p = params_phi(0.3);
  for (int n = 1; n <= 40; ++n) {
    for (int y = 0; y <= n; ++y) {
      const double tail = 1.0 - oracle::beta_cdf_int(0.3, y + 1, n - y + 1);
      if (std::fabs(tail - p.eta) < 1e-9) continue;
      CHECK(exceeds_elimination_cutoff(n, y, p) == (tail > p.eta));
    }
  }
}

TEST_CASE("safety rules: clamp before suspend") {
  const DesignParams p = params_phi(0.3);
  const Keyboard kb(p);
  // Escalation signal at the highest dose stays, even with too few completions.
  CHECK(keyboard_decision(eff(3, 0, 2, 0.4), p, kb, {false, true}).action == Action::Stay);
  CHECK(keyboard_decision(eff(3, 0, 0, 3), p, kb, {false, true}).action == Action::Stay);
  CHECK(keyboard_decision(eff(3, 2, 0, 1), p, kb, {true, false}).action == Action::Stay);
  CHECK(keyboard_decision(eff(3, 2, 0, 1), p, kb, {false, false}).action == Action::DeEscalate);
  CHECK(apply_safety_rules(Action::Escalate, eff(3, 0, 2, 1.5), p, {}) == Action::SuspendAccrual);
  CHECK(apply_safety_rules(Action::Escalate, eff(3, 0, 1, 2.5), p, {}) == Action::Escalate);
}

TEST_CASE("action names round-trip") {
  for (Action a : {Action::Escalate, Action::Stay, Action::DeEscalate, Action::SuspendAccrual,
                   Action::EliminateAndDeEscalate, Action::TerminateTrial}) {
    CHECK(action_from_string(to_string(a)) == a);
    CHECK(action_from_token(action_token(a)) == a);
  }
  CHECK(action_code(Action::Escalate) == 1);
  CHECK(action_code(Action::Stay) == 0);
  CHECK(action_code(Action::DeEscalate) == -1);
  CHECK(action_code(Action::EliminateAndDeEscalate) == -1);
  CHECK_FALSE(action_from_token("upward").has_value());
}

}

TEST_SUITE("alt_engines") {

TEST_CASE("mTPI unit probability mass") {
  const DesignParams p = params_phi(0.3);
  const auto iv = MtpiIntervals::from(p);
  const auto upm = unit_probability_mass(eff(3, 1, 0, 2), iv);
  CHECK(upm[0] == doctest::Approx(beta23(0.25) / 0.25).epsilon(1e-12));
  CHECK(upm[1] == doctest::Approx((beta23(0.35) - beta23(0.25)) / 0.1).epsilon(1e-12));
  CHECK(upm[2] == doctest::Approx((1 - beta23(0.35)) / 0.65).epsilon(1e-12));
  CHECK(upm[0] == doctest::Approx(1.0469).epsilon(1e-4));
  CHECK(upm[1] == doctest::Approx(1.7530).epsilon(1e-4));
  CHECK(upm[2] == doctest::Approx(0.8661).epsilon(1e-4));
  CHECK(mtpi_decision(eff(3, 1, 0, 2), iv, p, {}).action == Action::Stay);

  const auto flat = unit_probability_mass(eff(0, 0, 0, 0), iv);
  for (double u : flat) CHECK(u == doctest::Approx(1.0));
  CHECK(mtpi_core_action(flat) == Action::Stay);
  CHECK(mtpi_core_action({1.0, 0.5, 1.0}) == Action::DeEscalate);
}

TEST_CASE("mTPI on complete data matches an independent implementation") {
  const DesignParams p = params_phi(0.3);
  const auto iv = MtpiIntervals::from(p);
  for (int n = 1; n <= 12; ++n) {
    for (int y = 0; y <= n; ++y) {
      const int a = y + 1, b = n - y + 1;
      const double lo = oracle::beta_cdf_int(0.25, a, b), hi = oracle::beta_cdf_int(0.35, a, b);
      const double u[3] = {lo / 0.25, (hi - lo) / 0.1, (1 - hi) / 0.65};
      Action expect = Action::Stay;
      if (u[0] > u[1] && u[0] > u[2]) expect = Action::Escalate;
      if (u[2] > u[1] && u[2] >= u[0]) expect = Action::DeEscalate;
      CHECK(mtpi_core_action(unit_probability_mass(complete_data(n, y), iv)) == expect);
    }
  }
}

TEST_CASE("BOIN boundaries") {
  auto lambda = [](double phi, double p1) {
    return std::log((1 - p1) / (1 - phi)) / std::log(phi * (1 - p1) / (p1 * (1 - phi)));
  };
  const auto b = boin_boundaries(0.3);
  CHECK(b.lambda_e == doctest::Approx(lambda(0.3, 0.18)).epsilon(1e-14));
  CHECK(b.lambda_d == doctest::Approx(lambda(0.3, 0.42)).epsilon(1e-14));
  CHECK(std::round(b.lambda_e * 1000) / 1000 == doctest::Approx(0.236));
  // Commonly quoted as 0.358; the exact value is 0.35851.
  CHECK(std::fabs(b.lambda_d - 0.358) < 1e-3);
  const auto sym = boin_boundaries(0.5, 0.3, 0.7);
  CHECK(sym.lambda_e == doctest::Approx(1 - sym.lambda_d).epsilon(1e-12));
  CHECK(boin_boundaries(0.3, 0.2999999, 0.42).lambda_e == doctest::Approx(0.3).epsilon(1e-5));
  CHECK_THROWS_AS(boin_boundaries(0.3, 0.35, 0.42), std::invalid_argument);
}

TEST_CASE("BOIN decisions") {
  const DesignParams p = params_phi(0.3);
  const auto b = boin_boundaries(0.3);
  CHECK(boin_core_action(eff(6, 1, 0, 5), b) == Action::Escalate);
  CHECK(boin_core_action(eff(3, 1, 2, 1.5), b) == Action::DeEscalate);
  CHECK(boin_core_action(eff(3, 0, 3, 0.2), b) == Action::Escalate);
  CHECK(boin_core_action(eff(6, 2, 0, 4), b) == Action::Stay);
  CHECK_THROWS_AS(boin_core_action(eff(1, 0, 1, 0), b), InsufficientData);
  const DoseFindingEngine engine(EngineKind::Boin, p);
  CHECK(engine.core_action(eff(1, 0, 1, 0)) == Action::Stay);
}

}

TEST_SUITE("engine") {

TEST_CASE("recommend across the ladder") {
  const DesignParams p = params_phi(0.3);
  const DoseFindingEngine engine(EngineKind::Keyboard, p);
  std::vector<EffectiveData> ladder(6);
  ladder[0] = complete_data(3, 0);
  auto r = recommend(engine, ladder, 1, 6);
  CHECK(r.action == Action::Escalate);
  CHECK(r.next_dose == 2);

  // Dose 2 meets the elimination rule: it and everything above are removed.
  ladder[1] = complete_data(3, 3);
  r = recommend(engine, ladder, 2, 6);
  CHECK(r.action == Action::EliminateAndDeEscalate);
  CHECK(r.next_dose == 1);
  CHECK(r.admissible_top == 1);

  // Back at dose 1 with an escalation signal: dose 2 is gone, so stay.
  ladder[0] = complete_data(6, 0);
  r = recommend(engine, ladder, 1, 1);
  CHECK(r.action == Action::Stay);
  CHECK(r.next_dose == 1);

  ladder[0] = complete_data(3, 3);
  r = recommend(engine, ladder, 1, 6);
  CHECK(r.action == Action::TerminateTrial);
  CHECK(r.next_dose == 0);
}

TEST_CASE("engine names") {
  CHECK(engine_from_string("keyboard") == EngineKind::Keyboard);
  CHECK(engine_from_string("mtpi") == EngineKind::Mtpi);
  CHECK(engine_from_string("boin") == EngineKind::Boin);
  CHECK_THROWS_AS(engine_from_string("crm"), std::invalid_argument);
}

}
