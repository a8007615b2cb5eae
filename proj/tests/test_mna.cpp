#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csyn/mna.hpp"

using namespace csyn;

TEST_CASE("rc step response tracks the charging law within 1%") {
  // V -- R -- node1 -- C -- gnd, driven directly at the engine level.
  const double R = 1e3, C = 1e-6, V = 1.0;
  const double tau = R * C;
  const double h = tau / 100.0;
  mna::Network net;
  const int n_src = net.add_node();
  const int n_cap = net.add_node();
  net.add_vsource(n_src, 0, V);
  net.add_resistor(n_src, n_cap, R);
  net.add_capacitor(n_cap, 0, C);
  mna::PhaseSystem sys(net, h);
  mna::State state = mna::State::zero(net);
  for (int step = 1; step <= 200; ++step) {
    sys.step(state);
    const double t = step * h;
    const double exact = V * (1.0 - std::exp(-t / tau));
    const double got = state.node_voltage[static_cast<size_t>(n_cap)];
    if (step == 100 || step == 200) {
      CHECK(std::fabs(got - exact) / exact < 0.01);
    }
  }
}

TEST_CASE("rl branch current follows the analytic rise") {
  // V -- R -- L -- gnd: i(t) = V/R (1 - e^{-tR/L}).
  const double R = 10.0, L = 1e-3, V = 5.0;
  const double tau = L / R;
  const double h = tau / 200.0;
  mna::Network net;
  const int n_src = net.add_node();
  const int n_mid = net.add_node();
  net.add_vsource(n_src, 0, V);
  net.add_resistor(n_src, n_mid, R);
  net.add_inductor(n_mid, 0, L);
  mna::PhaseSystem sys(net, h);
  mna::State state = mna::State::zero(net);
  for (int step = 1; step <= 400; ++step) sys.step(state);
  const double exact = V / R * (1.0 - std::exp(-400.0 * h / tau));
  CHECK(std::fabs(state.ind_current[0] - exact) / exact < 0.01);
}

TEST_CASE("voltage source branch reports delivered current") {
  // V across R: delivered current = V/R.
  mna::Network net;
  const int n1 = net.add_node();
  net.add_vsource(n1, 0, 10.0);
  net.add_resistor(n1, 0, 5.0);
  mna::PhaseSystem sys(net, 1e-6);
  mna::State state = mna::State::zero(net);
  sys.step(state);
  CHECK(state.source_current[0] == doctest::Approx(2.0));
  CHECK(state.node_voltage[1] == doctest::Approx(10.0));
}

TEST_CASE("lone capacitor stamp") {
  mna::Network net;
  const int a = net.add_node();
  const int b = net.add_node();
  const double C = 2e-6, h = 1e-7;
  net.add_capacitor(a, b, C);
  net.set_gmin(1e-9);
  mna::PhaseSystem sys(net, h);
  const auto& m = sys.matrix();
  const int n = sys.dimension();
  REQUIRE(n == 2);
  const double g = C / h;
  CHECK(m[0 * n + 0] == doctest::Approx(g + 1e-9));
  CHECK(m[1 * n + 1] == doctest::Approx(g + 1e-9));
  CHECK(m[0 * n + 1] == doctest::Approx(-g));
  CHECK(m[1 * n + 0] == doctest::Approx(-g));
}

TEST_CASE("assembled matrix is symmetric for rlc + source networks") {
  mna::Network net;
  const int a = net.add_node();
  const int b = net.add_node();
  const int c = net.add_node();
  net.add_vsource(a, 0, 3.0);
  net.add_resistor(a, b, 2.0);
  net.add_capacitor(b, c, 1e-6);
  net.add_inductor(c, 0, 1e-3);
  net.add_resistor(b, 0, 7.0);
  net.set_gmin(1e-9);
  mna::PhaseSystem sys(net, 1e-6);
  const auto& m = sys.matrix();
  const int n = sys.dimension();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      CHECK(m[static_cast<size_t>(i) * n + j] ==
            doctest::Approx(m[static_cast<size_t>(j) * n + i]));
    }
  }
}

TEST_CASE("fully disconnected floating network throws SingularSystem") {
  mna::Network net;
  const int a = net.add_node();
  const int b = net.add_node();
  net.add_resistor(a, b, 1.0);  // floating pair, no gmin
  CHECK_THROWS_AS(mna::PhaseSystem(net, 1e-6), mna::SingularSystem);
}

TEST_CASE("gmin rescues floating nodes") {
  mna::Network net;
  const int a = net.add_node();
  const int b = net.add_node();
  net.add_resistor(a, b, 1.0);
  net.set_gmin(1e-9);
  CHECK_NOTHROW(mna::PhaseSystem(net, 1e-6));
}
