#include "csyn/simulator.hpp"

#include <algorithm>
#include <limits>

namespace csyn {

bool is_allowed_duty(double duty) {
  for (double d : kDutyValues) {
    if (duty == d) return true;
  }
  return false;
}

const char* invalid_reason_name(InvalidReason r) {
  switch (r) {
    case InvalidReason::None: return "none";
    case InvalidReason::Singular: return "singular";
    case InvalidReason::NonFinite: return "nonfinite";
    case InvalidReason::NoOutputPower: return "no_output_power";
    case InvalidReason::NoInputPower: return "no_input_power";
    case InvalidReason::NonPassive: return "nonpassive";
  }
  return "?";
}

namespace {

// Map each net representative to a dense MNA node id; the ground net (the
// one holding port 0, whose representative is always 0) is node 0.
std::array<int, kNumPorts> node_of_rep(const Topology& t, int* num_net_nodes) {
  std::array<int, kNumPorts> node{};
  node.fill(-1);
  int next = 1;
  for (PortId rep : t.net_representatives()) {
    node[static_cast<size_t>(rep)] = rep == 0 ? 0 : next++;
  }
  *num_net_nodes = next;
  return node;
}

}  // namespace

PhaseSystem build_mna(const Topology& t, Phase phase, const SimConfig& cfg) {
  PhaseSystem ps;
  mna::Network& net = ps.network;

  int num_net_nodes = 0;
  auto node = node_of_rep(t, &num_net_nodes);
  auto node_of_port = [&](PortId p) { return node[static_cast<size_t>(t.net_of(p))]; };
  while (net.num_nodes() < num_net_nodes) net.add_node();

  ps.node_of_in = node_of_port(kPortIn);
  ps.node_of_out = node_of_port(kPortOut);

  // Harness: V_in -- R_in -- net(IN); R_load || C_out from net(OUT) to ground.
  const int source_node = net.add_node();
  net.add_vsource(source_node, 0, cfg.v_in);
  net.add_resistor(source_node, ps.node_of_in, cfg.r_in);
  net.add_resistor(ps.node_of_out, 0, cfg.r_load);
  net.add_capacitor(ps.node_of_out, 0, cfg.c_out);

  for (int slot = 0; slot < kPoolSize; ++slot) {
    const int a = node_of_port(device_port(slot, 1));
    const int b = node_of_port(device_port(slot, 2));
    switch (t.pool().kind(slot)) {
      case DeviceKind::Capacitor:
        net.add_capacitor(a, b, cfg.c_dev);
        break;
      case DeviceKind::Inductor:
        net.add_inductor(a, b, cfg.l_dev);
        break;
      case DeviceKind::PhaseISwitch:
        net.add_resistor(a, b, phase == Phase::I ? cfg.r_on : cfg.r_off);
        break;
      case DeviceKind::PhaseIISwitch:
        net.add_resistor(a, b, phase == Phase::II ? cfg.r_on : cfg.r_off);
        break;
    }
  }
  net.set_gmin(cfg.g_min);

  const double h = 1.0 / (cfg.f_sw * cfg.steps_per_period);
  ps.system = mna::PhaseSystem(net, h);
  return ps;
}

SimResult transient(const Topology& t, double duty, const SimConfig& cfg) {
  SimResult result;
  PhaseSystem sys1, sys2;
  try {
    sys1 = build_mna(t, Phase::I, cfg);
    sys2 = build_mna(t, Phase::II, cfg);
  } catch (const mna::SingularSystem&) {
    result.reason = InvalidReason::Singular;
    return result;
  }

  const int steps1 = std::max(1, static_cast<int>(std::lround(duty * cfg.steps_per_period)));
  const int steps2 =
      std::max(1, static_cast<int>(std::lround((1.0 - duty) * cfg.steps_per_period)));
  const int steps_total = steps1 + steps2;

  mna::State state = mna::State::zero(sys1.network);
  const int out_node = sys1.node_of_out;

  struct PeriodAvg {
    double v_out, p_in, p_out;
  };
  std::array<PeriodAvg, 10> last10{};
  double prev_v_avg = 0.0;
  int consecutive = 0;
  int periods = 0;

  auto finite = [&]() {
    for (double v : state.node_voltage) {
      if (!std::isfinite(v) || std::fabs(v) > 1e9) return false;
    }
    for (double v : state.ind_current) {
      if (!std::isfinite(v) || std::fabs(v) > 1e9) return false;
    }
    return true;
  };

  while (periods < cfg.max_periods) {
    double sum_v = 0.0, sum_pin = 0.0, sum_pout = 0.0;
    for (int s = 0; s < steps_total; ++s) {
      (s < steps1 ? sys1.system : sys2.system).step(state);
      const double v_out = state.node_voltage[static_cast<size_t>(out_node)];
      sum_v += v_out;
      sum_pin += cfg.v_in * state.source_current[0];
      sum_pout += v_out * v_out / cfg.r_load;
    }
    if (!finite()) {
      result.reason = InvalidReason::NonFinite;
      result.periods_run = periods + 1;
      return result;
    }
    const PeriodAvg avg{sum_v / steps_total, sum_pin / steps_total, sum_pout / steps_total};
    last10[static_cast<size_t>(periods % 10)] = avg;
    ++periods;

    if (std::fabs(avg.v_out - prev_v_avg) <= cfg.ss_tol * std::max(1.0, std::fabs(avg.v_out))) {
      ++consecutive;
    } else {
      consecutive = 0;
    }
    prev_v_avg = avg.v_out;
    if (consecutive >= 5 && periods >= cfg.min_periods) break;
  }

  const int tail = std::min(periods, 10);
  double v_sum = 0.0, pin_sum = 0.0, pout_sum = 0.0;
  // Ring order does not matter for a mean, but keep the summation order
  // fixed (slot 0..9) so results are bit-stable.
  for (int k = 0; k < tail; ++k) {
    v_sum += last10[static_cast<size_t>(k)].v_out;
    pin_sum += last10[static_cast<size_t>(k)].p_in;
    pout_sum += last10[static_cast<size_t>(k)].p_out;
  }
  result.v_out_avg = v_sum / tail;
  result.p_in = pin_sum / tail;
  result.p_out = pout_sum / tail;
  result.periods_run = periods;

  if (result.p_out <= 0.0) {
    result.reason = InvalidReason::NoOutputPower;
    return result;
  }
  if (result.p_in <= 0.0) {
    result.reason = InvalidReason::NoInputPower;
    return result;
  }
  const double eta = result.p_out / result.p_in;
  if (eta > 1.0 + 1e-9) {
    result.reason = InvalidReason::NonPassive;
    return result;
  }
  result.efficiency = std::min(eta, 1.0);
  result.status = SimStatus::Valid;
  return result;
}

OracleResult oracle(const Topology& t, double duty, const SimConfig& cfg) {
  OracleResult out;
  out.sim = transient(t, duty, cfg);
  if (out.sim.status != SimStatus::Valid) {
    out.reason = invalid_reason_name(out.sim.reason);
    return out;
  }
  if (out.sim.p_out < 0.01) {
    out.reason = "p_out_below_threshold";
    return out;
  }
  if (std::fabs(out.sim.v_out_avg) < 1.0) {
    out.reason = "v_out_below_threshold";
    return out;
  }
  if (out.sim.efficiency < 0.001 || out.sim.efficiency > 1.0) {
    out.reason = "efficiency_out_of_range";
    return out;
  }
  out.valid = true;
  out.efficiency = out.sim.efficiency;
  return out;
}

}  // namespace csyn
