#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace csyn {

// The four device kinds a converter may use. Every device has two ports.
enum class DeviceKind : uint8_t {
  Capacitor = 0,    // C
  Inductor = 1,     // L
  PhaseISwitch = 2, // Sa, conducts during the first duty*T of each period
  PhaseIISwitch = 3 // Sb, conducts during the remaining (1-duty)*T
};

inline constexpr int kNumDeviceKinds = 4;
inline constexpr int kPoolSize = 5;
inline constexpr int kNumPorts = 13;  // 3 external + 5 devices * 2 ports

const char* kind_name(DeviceKind k);
std::optional<DeviceKind> kind_from_name(std::string_view name);

// Ordered list of exactly 5 devices. Instance names are derived from the
// slot order: the i-th device of kind K (counting from slot 0) is named
// K0, K1, ... so the naming is a pure function of the list.
class ComponentPool {
 public:
  // Default: five capacitors (a well-formed placeholder).
  ComponentPool() : ComponentPool(std::array<DeviceKind, kPoolSize>{}) {}
  explicit ComponentPool(std::array<DeviceKind, kPoolSize> kinds);

  DeviceKind kind(int slot) const { return kinds_[static_cast<size_t>(slot)]; }
  const std::array<DeviceKind, kPoolSize>& kinds() const { return kinds_; }
  // Instance name of a slot, e.g. "C0", "Sa1".
  const std::string& instance_name(int slot) const {
    return names_[static_cast<size_t>(slot)];
  }
  // Slot owning the given instance name, or -1.
  int slot_of_instance(std::string_view name) const;

  bool operator==(const ComponentPool&) const = default;

 private:
  std::array<DeviceKind, kPoolSize> kinds_{};
  std::array<std::string, kPoolSize> names_{};
};

// Port ids 0..12. 0 = external ground "0", 1 = "IN", 2 = "OUT";
// device slot k owns ports 3+2k (its port 1) and 4+2k (its port 2).
using PortId = int;
inline constexpr PortId kPortGround = 0;
inline constexpr PortId kPortIn = 1;
inline constexpr PortId kPortOut = 2;

inline PortId device_port(int slot, int which) { return 3 + 2 * slot + (which - 1); }
inline bool is_external_port(PortId p) { return p < 3; }
inline int port_slot(PortId p) { return (p - 3) / 2; }        // device ports only
inline int port_number(PortId p) { return (p - 3) % 2 + 1; }  // 1 or 2

struct MalformedTopology : std::runtime_error {
  explicit MalformedTopology(const std::string& what) : std::runtime_error(what) {}
};

// A topology assigns each of the 13 ports to a net. A net is stored by its
// representative: the minimum port id among its members, so net_of(p) <= p
// and representatives are fixed points. Immutable after construction.
class Topology {
 public:
  // Default: every port in one net, placeholder pool.
  Topology() = default;

  // `assignment` must cover ports 0..12; each value names the net it puts the
  // port in and must itself map to itself (the representative belongs to its
  // own net). Representatives are re-normalized to the minimum member.
  // Throws MalformedTopology otherwise.
  static Topology create(ComponentPool pool, const std::map<PortId, PortId>& assignment);

  // Builds a topology from groups of ports to merge; unmentioned ports become
  // singleton nets. Convenience for tests and fixtures.
  static Topology from_groups(ComponentPool pool,
                              const std::vector<std::vector<PortId>>& groups);

  const ComponentPool& pool() const { return pool_; }
  PortId net_of(PortId p) const { return net_[static_cast<size_t>(p)]; }
  const std::array<PortId, kNumPorts>& nets() const { return net_; }

  // Representatives in ascending order.
  std::vector<PortId> net_representatives() const;
  std::vector<PortId> net_members(PortId representative) const;

  bool operator==(const Topology&) const = default;

 private:
  ComponentPool pool_;
  std::array<PortId, kNumPorts> net_{};
};

// Canonical byte string identifying a topology up to (a) permutation of
// identical device instances, (b) swapping the two ports of a device and
// (c) net renumbering. Equal keys <=> isomorphic under that group.
using CanonicalKey = std::string;

CanonicalKey canonicalize(const Topology& t);

struct ScreenResult {
  bool connected = false;
};

// True iff IN and OUT share a connected component of the net graph whose
// edges are the 5 devices with all phases merged. Sound in one direction
// only: disconnected implies the simulator sees no output power.
ScreenResult structural_screen(const Topology& t);

// A symmetry-group element: a permutation of pool slots that maps each slot
// to a slot of the same kind, plus a port-swap mask (bit k = swap the two
// ports of slot k). Exposed so tests can exercise key invariance directly.
struct SymmetryElement {
  std::array<int, kPoolSize> slot_perm{0, 1, 2, 3, 4};
  uint8_t swap_mask = 0;
};

// Applies g to t: relabels device ports accordingly, keeps externals fixed.
Topology apply_symmetry(const Topology& t, const SymmetryElement& g);

// Enumerates the full symmetry group of a pool (kind-preserving slot
// permutations x per-device port swaps). Worst case 5! * 2^5 = 3840 elements.
std::vector<SymmetryElement> symmetry_group(const ComponentPool& pool);

}  // namespace csyn
