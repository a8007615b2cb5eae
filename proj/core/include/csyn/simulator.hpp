#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "csyn/mna.hpp"
#include "csyn/topology.hpp"

namespace csyn {

// Fixed electrical parameters of the evaluation harness: a 100 V source
// behind 0.1 ohm drives IN, a 50 ohm load with a 10 uF smoothing capacitor
// hangs on OUT, devices use fixed values, switches are resistive.
struct SimConfig {
  double c_dev = 10e-6;
  double l_dev = 100e-6;
  double r_in = 0.1;
  double r_load = 50.0;
  double c_out = 10e-6;
  double v_in = 100.0;
  double f_sw = 1e6;
  double r_on = 0.05;
  double r_off = 1e6;
  double g_min = 1e-9;
  int steps_per_period = 100;
  int max_periods = 4000;
  int min_periods = 50;
  double ss_tol = 1e-4;
};

inline constexpr std::array<double, 5> kDutyValues{0.1, 0.3, 0.5, 0.7, 0.9};
bool is_allowed_duty(double duty);

enum class Phase { I, II };

enum class SimStatus { Valid, Invalid };

enum class InvalidReason {
  None,
  Singular,      // LU failed even with g_min
  NonFinite,     // a state left [-1e9, 1e9] or became non-finite
  NoOutputPower, // steady state reached with zero output power
  NoInputPower,  // source delivers nothing; efficiency undefined
  NonPassive     // p_out exceeded p_in beyond numerical slack
};

const char* invalid_reason_name(InvalidReason r);

// Steady-state transient summary. Valid here means the run itself is
// meaningful (finite, power flows); the dataset-level valid/invalid label
// additionally applies the oracle thresholds.
struct SimResult {
  SimStatus status = SimStatus::Invalid;
  InvalidReason reason = InvalidReason::None;
  double v_out_avg = 0.0;
  double p_in = 0.0;
  double p_out = 0.0;
  double efficiency = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  int periods_run = 0;
};

// The harnessed topology for one phase: the factored MNA system plus the
// node bookkeeping needed to read out v_out and the source current.
struct PhaseSystem {
  mna::Network network;
  mna::PhaseSystem system;
  int node_of_in = 0;
  int node_of_out = 0;
};

// Stamps the topology with the harness (source + R_in into IN, R_load ||
// C_out on OUT, g_min everywhere, switches resistive per phase) and factors
// the backward-Euler system at h = 1/(f_sw * steps_per_period).
// Throws mna::SingularSystem if the factorization fails.
PhaseSystem build_mna(const Topology& t, Phase phase, const SimConfig& cfg);

// Fixed-step two-phase transient to (approximate) periodic steady state.
// Deterministic: same inputs give a bit-identical result.
SimResult transient(const Topology& t, double duty, const SimConfig& cfg);

struct OracleResult {
  bool valid = false;
  double efficiency = std::numeric_limits<double>::quiet_NaN();
  std::string reason;  // empty when valid
  SimResult sim;
};

// Validity label: the transient must be well-posed and the circuit must move
// real power (p_out >= 0.01 W, |v_out| >= 1 V, efficiency in [0.001, 1]).
OracleResult oracle(const Topology& t, double duty, const SimConfig& cfg);

}  // namespace csyn
