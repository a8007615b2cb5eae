#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace csyn::mna {

struct SingularSystem : std::runtime_error {
  explicit SingularSystem(const std::string& what) : std::runtime_error(what) {}
};

// A linear RLC + voltage-source network over dense node ids. Node 0 is the
// ground reference. The device insertion order defines the layout of the
// state vectors, so two Networks built by the same routine (e.g. the two
// switching phases of a converter) share state.
class Network {
 public:
  // Returns the id of a fresh node.
  int add_node() { return num_nodes_++; }
  int num_nodes() const { return num_nodes_; }

  void add_resistor(int a, int b, double resistance);
  void add_capacitor(int a, int b, double capacitance);
  void add_inductor(int a, int b, double inductance);
  // Ideal source; positive branch current flows out of `pos` into the circuit.
  void add_vsource(int pos, int neg, double voltage);
  // Small conductance from every non-ground node to ground.
  void set_gmin(double gmin) { gmin_ = gmin; }

  int num_capacitors() const { return static_cast<int>(capacitors_.size()); }
  int num_inductors() const { return static_cast<int>(inductors_.size()); }
  int num_vsources() const { return static_cast<int>(vsources_.size()); }

 private:
  friend class PhaseSystem;
  struct TwoTerminal {
    int a, b;
    double value;
  };
  int num_nodes_ = 1;
  double gmin_ = 0.0;
  std::vector<TwoTerminal> resistors_;
  std::vector<TwoTerminal> capacitors_;
  std::vector<TwoTerminal> inductors_;
  std::vector<TwoTerminal> vsources_;  // a = pos, b = neg, value = voltage
};

// Continuous quantities carried across steps and phase switches, plus the
// scratch vectors for one solve. Layout follows the Network device order.
struct State {
  std::vector<double> cap_voltage;    // v(a) - v(b) per capacitor
  std::vector<double> ind_current;    // branch current per inductor, a -> b
  std::vector<double> node_voltage;   // solved node voltages, index = node id
  std::vector<double> source_current; // delivered current per vsource (out of pos)
  std::vector<double> scratch;

  static State zero(const Network& net);
};

// Backward-Euler companion system at a fixed step size: the matrix is
// constant, so it is stamped and LU-factored once and reused every step.
class PhaseSystem {
 public:
  PhaseSystem() = default;
  PhaseSystem(const Network& net, double step_size);

  // Advances the state by one step of length step_size.
  void step(State& state) const;

  double step_size() const { return h_; }
  int dimension() const { return n_; }
  int num_nodes() const { return num_nodes_; }
  // Assembled (pre-factorization) matrix in row-major order, for inspection.
  const std::vector<double>& matrix() const { return a_; }

 private:
  void factorize();

  double h_ = 0.0;
  int num_nodes_ = 1;  // including ground
  int n_ = 0;          // unknowns: (num_nodes-1) voltages + sources + inductors
  int source_offset_ = 0;  // column of the first source branch current
  int inductor_offset_ = 0;
  std::vector<Network::TwoTerminal> capacitors_;
  std::vector<Network::TwoTerminal> inductors_;
  std::vector<Network::TwoTerminal> vsources_;
  std::vector<double> a_;    // stamped matrix, kept for matrix()
  std::vector<double> lu_;   // LU factors, row-major
  std::vector<int> pivot_;
};

}  // namespace csyn::mna
