#include "csyn/mna.hpp"

#include <cmath>

namespace csyn::mna {

void Network::add_resistor(int a, int b, double resistance) {
  resistors_.push_back({a, b, resistance});
}

void Network::add_capacitor(int a, int b, double capacitance) {
  capacitors_.push_back({a, b, capacitance});
}

void Network::add_inductor(int a, int b, double inductance) {
  inductors_.push_back({a, b, inductance});
}

void Network::add_vsource(int pos, int neg, double voltage) {
  vsources_.push_back({pos, neg, voltage});
}

State State::zero(const Network& net) {
  State s;
  s.cap_voltage.assign(static_cast<size_t>(net.num_capacitors()), 0.0);
  s.ind_current.assign(static_cast<size_t>(net.num_inductors()), 0.0);
  s.node_voltage.assign(static_cast<size_t>(net.num_nodes()), 0.0);
  s.source_current.assign(static_cast<size_t>(net.num_vsources()), 0.0);
  return s;
}

PhaseSystem::PhaseSystem(const Network& net, double step_size)
    : h_(step_size),
      num_nodes_(net.num_nodes()),
      capacitors_(net.capacitors_),
      inductors_(net.inductors_),
      vsources_(net.vsources_) {
  const int nv = num_nodes_ - 1;  // ground eliminated
  source_offset_ = nv;
  inductor_offset_ = nv + static_cast<int>(vsources_.size());
  n_ = inductor_offset_ + static_cast<int>(inductors_.size());
  a_.assign(static_cast<size_t>(n_) * static_cast<size_t>(n_), 0.0);

  auto at = [&](int r, int c) -> double& {
    return a_[static_cast<size_t>(r) * static_cast<size_t>(n_) + static_cast<size_t>(c)];
  };
  // Node k (k >= 1) occupies row/column k-1.
  auto stamp_conductance = [&](int a, int b, double g) {
    if (a == b) return;
    if (a > 0) at(a - 1, a - 1) += g;
    if (b > 0) at(b - 1, b - 1) += g;
    if (a > 0 && b > 0) {
      at(a - 1, b - 1) -= g;
      at(b - 1, a - 1) -= g;
    }
  };

  for (const auto& r : net.resistors_) stamp_conductance(r.a, r.b, 1.0 / r.value);
  for (const auto& c : capacitors_) stamp_conductance(c.a, c.b, c.value / h_);
  if (net.gmin_ > 0.0) {
    for (int k = 1; k < num_nodes_; ++k) at(k - 1, k - 1) += net.gmin_;
  }
  for (size_t k = 0; k < vsources_.size(); ++k) {
    const auto& s = vsources_[k];
    const int col = source_offset_ + static_cast<int>(k);
    if (s.a > 0) {
      at(s.a - 1, col) += 1.0;
      at(col, s.a - 1) += 1.0;
    }
    if (s.b > 0) {
      at(s.b - 1, col) -= 1.0;
      at(col, s.b - 1) -= 1.0;
    }
  }
  for (size_t k = 0; k < inductors_.size(); ++k) {
    const auto& l = inductors_[k];
    const int col = inductor_offset_ + static_cast<int>(k);
    if (l.a > 0) {
      at(l.a - 1, col) += 1.0;
      at(col, l.a - 1) += 1.0;
    }
    if (l.b > 0) {
      at(l.b - 1, col) -= 1.0;
      at(col, l.b - 1) -= 1.0;
    }
    at(col, col) -= l.value / h_;
  }
  factorize();
}

void PhaseSystem::factorize() {
  lu_ = a_;
  pivot_.resize(static_cast<size_t>(n_));
  double scale = 0.0;
  for (double v : lu_) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) scale = 1.0;
  auto at = [&](int r, int c) -> double& {
    return lu_[static_cast<size_t>(r) * static_cast<size_t>(n_) + static_cast<size_t>(c)];
  };
  for (int col = 0; col < n_; ++col) {
    int best = col;
    double best_abs = std::fabs(at(col, col));
    for (int r = col + 1; r < n_; ++r) {
      double v = std::fabs(at(r, col));
      if (v > best_abs) {
        best_abs = v;
        best = r;
      }
    }
    if (best_abs < 1e-14 * scale) {
      throw SingularSystem("pivot " + std::to_string(col) + " below threshold");
    }
    pivot_[static_cast<size_t>(col)] = best;
    if (best != col) {
      for (int c = 0; c < n_; ++c) std::swap(at(col, c), at(best, c));
    }
    const double inv = 1.0 / at(col, col);
    for (int r = col + 1; r < n_; ++r) {
      const double m = at(r, col) * inv;
      at(r, col) = m;
      if (m != 0.0) {
        for (int c = col + 1; c < n_; ++c) at(r, c) -= m * at(col, c);
      }
    }
  }
}

void PhaseSystem::step(State& state) const {
  state.scratch.assign(static_cast<size_t>(n_), 0.0);
  std::vector<double>& b = state.scratch;

  // History terms: capacitor companion current and inductor flux.
  for (size_t k = 0; k < capacitors_.size(); ++k) {
    const auto& c = capacitors_[k];
    const double i_eq = c.value / h_ * state.cap_voltage[k];
    if (c.a > 0) b[static_cast<size_t>(c.a - 1)] += i_eq;
    if (c.b > 0) b[static_cast<size_t>(c.b - 1)] -= i_eq;
  }
  for (size_t k = 0; k < vsources_.size(); ++k) {
    b[static_cast<size_t>(source_offset_) + k] = vsources_[k].value;
  }
  for (size_t k = 0; k < inductors_.size(); ++k) {
    b[static_cast<size_t>(inductor_offset_) + k] =
        -(inductors_[k].value / h_) * state.ind_current[k];
  }

  // Apply the pivot interchange sequence, then the two triangular solves.
  const std::vector<double>& lu = lu_;
  auto at = [&](int r, int c) -> double {
    return lu[static_cast<size_t>(r) * static_cast<size_t>(n_) + static_cast<size_t>(c)];
  };
  for (int col = 0; col < n_; ++col) {
    int p = pivot_[static_cast<size_t>(col)];
    if (p != col) std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(p)]);
  }
  for (int col = 0; col < n_; ++col) {
    const double bc = b[static_cast<size_t>(col)];
    if (bc != 0.0) {
      for (int r = col + 1; r < n_; ++r) b[static_cast<size_t>(r)] -= at(r, col) * bc;
    }
  }
  for (int r = n_ - 1; r >= 0; --r) {
    double acc = b[static_cast<size_t>(r)];
    for (int c = r + 1; c < n_; ++c) acc -= at(r, c) * b[static_cast<size_t>(c)];
    b[static_cast<size_t>(r)] = acc / at(r, r);
  }

  // Unpack the solution into the state.
  state.node_voltage[0] = 0.0;
  for (int k = 1; k < num_nodes_; ++k) {
    state.node_voltage[static_cast<size_t>(k)] = b[static_cast<size_t>(k - 1)];
  }
  for (size_t k = 0; k < vsources_.size(); ++k) {
    // The MNA branch unknown is the current from pos through the source; the
    // delivered current (out of the positive terminal) is its negation.
    state.source_current[k] = -b[static_cast<size_t>(source_offset_) + k];
  }
  for (size_t k = 0; k < inductors_.size(); ++k) {
    state.ind_current[k] = b[static_cast<size_t>(inductor_offset_) + k];
  }
  for (size_t k = 0; k < capacitors_.size(); ++k) {
    const auto& c = capacitors_[k];
    state.cap_voltage[k] = state.node_voltage[static_cast<size_t>(c.a)] -
                           state.node_voltage[static_cast<size_t>(c.b)];
  }
}

}  // namespace csyn::mna
