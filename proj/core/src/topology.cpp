#include "csyn/topology.hpp"

#include <algorithm>
#include <numeric>

namespace csyn {

const char* kind_name(DeviceKind k) {
  switch (k) {
    case DeviceKind::Capacitor: return "C";
    case DeviceKind::Inductor: return "L";
    case DeviceKind::PhaseISwitch: return "Sa";
    case DeviceKind::PhaseIISwitch: return "Sb";
  }
  return "?";
}

std::optional<DeviceKind> kind_from_name(std::string_view name) {
  if (name == "C") return DeviceKind::Capacitor;
  if (name == "L") return DeviceKind::Inductor;
  if (name == "Sa") return DeviceKind::PhaseISwitch;
  if (name == "Sb") return DeviceKind::PhaseIISwitch;
  return std::nullopt;
}

ComponentPool::ComponentPool(std::array<DeviceKind, kPoolSize> kinds) : kinds_(kinds) {
  std::array<int, kNumDeviceKinds> counts{};
  for (int slot = 0; slot < kPoolSize; ++slot) {
    int& c = counts[static_cast<size_t>(kinds_[static_cast<size_t>(slot)])];
    names_[static_cast<size_t>(slot)] =
        std::string(kind_name(kinds_[static_cast<size_t>(slot)])) + std::to_string(c);
    ++c;
  }
}

int ComponentPool::slot_of_instance(std::string_view name) const {
  for (int slot = 0; slot < kPoolSize; ++slot) {
    if (names_[static_cast<size_t>(slot)] == name) return slot;
  }
  return -1;
}

Topology Topology::create(ComponentPool pool, const std::map<PortId, PortId>& assignment) {
  if (assignment.size() != kNumPorts) {
    throw MalformedTopology("assignment must cover exactly the 13 ports, got " +
                            std::to_string(assignment.size()));
  }
  std::array<PortId, kNumPorts> label{};
  for (PortId p = 0; p < kNumPorts; ++p) {
    auto it = assignment.find(p);
    if (it == assignment.end()) {
      throw MalformedTopology("port " + std::to_string(p) + " missing from assignment");
    }
    PortId lab = it->second;
    if (lab < 0 || lab >= kNumPorts) {
      throw MalformedTopology("net label " + std::to_string(lab) + " out of range");
    }
    label[static_cast<size_t>(p)] = lab;
  }
  // Every label used must belong to its own net.
  for (PortId p = 0; p < kNumPorts; ++p) {
    PortId lab = label[static_cast<size_t>(p)];
    if (label[static_cast<size_t>(lab)] != lab) {
      throw MalformedTopology("representative " + std::to_string(lab) +
                              " is not in its own net");
    }
  }
  // Normalize representatives to the minimum member.
  std::array<PortId, kNumPorts> min_of{};
  min_of.fill(kNumPorts);
  for (PortId p = 0; p < kNumPorts; ++p) {
    PortId lab = label[static_cast<size_t>(p)];
    min_of[static_cast<size_t>(lab)] = std::min(min_of[static_cast<size_t>(lab)], p);
  }
  Topology t;
  t.pool_ = std::move(pool);
  for (PortId p = 0; p < kNumPorts; ++p) {
    t.net_[static_cast<size_t>(p)] = min_of[static_cast<size_t>(label[static_cast<size_t>(p)])];
  }
  return t;
}

Topology Topology::from_groups(ComponentPool pool,
                               const std::vector<std::vector<PortId>>& groups) {
  std::map<PortId, PortId> assignment;
  for (PortId p = 0; p < kNumPorts; ++p) assignment[p] = p;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    PortId rep = *std::min_element(g.begin(), g.end());
    for (PortId p : g) assignment[p] = rep;
  }
  // Collapse chains so each label maps to itself even if groups overlap.
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& [p, lab] : assignment) {
      PortId root = assignment[lab];
      if (root != lab) {
        assignment[p] = root;
        changed = true;
      }
    }
  }
  return create(std::move(pool), assignment);
}

std::vector<PortId> Topology::net_representatives() const {
  std::vector<PortId> reps;
  for (PortId p = 0; p < kNumPorts; ++p) {
    if (net_[static_cast<size_t>(p)] == p) reps.push_back(p);
  }
  return reps;
}

std::vector<PortId> Topology::net_members(PortId representative) const {
  std::vector<PortId> members;
  for (PortId p = 0; p < kNumPorts; ++p) {
    if (net_[static_cast<size_t>(p)] == representative) members.push_back(p);
  }
  return members;
}

std::vector<SymmetryElement> symmetry_group(const ComponentPool& pool) {
  // Slots grouped by kind; kind-preserving permutations are the product of
  // the per-group symmetric groups.
  std::array<std::vector<int>, kNumDeviceKinds> by_kind;
  for (int slot = 0; slot < kPoolSize; ++slot) {
    by_kind[static_cast<size_t>(pool.kind(slot))].push_back(slot);
  }
  std::vector<std::array<int, kPoolSize>> perms;
  std::array<int, kPoolSize> base{0, 1, 2, 3, 4};
  // Recursively assign permutations group by group.
  std::array<std::vector<int>, kNumDeviceKinds> arranged = by_kind;
  auto emit = [&]() {
    std::array<int, kPoolSize> perm = base;
    for (size_t k = 0; k < kNumDeviceKinds; ++k) {
      for (size_t i = 0; i < by_kind[k].size(); ++i) {
        perm[static_cast<size_t>(by_kind[k][i])] = arranged[k][i];
      }
    }
    perms.push_back(perm);
  };
  auto recurse = [&](auto&& self, size_t k) -> void {
    if (k == kNumDeviceKinds) {
      emit();
      return;
    }
    std::vector<int>& v = arranged[k];
    std::sort(v.begin(), v.end());
    do {
      self(self, k + 1);
    } while (std::next_permutation(v.begin(), v.end()));
  };
  recurse(recurse, 0);

  std::vector<SymmetryElement> group;
  group.reserve(perms.size() * (1u << kPoolSize));
  for (const auto& perm : perms) {
    for (uint8_t mask = 0;; ++mask) {
      group.push_back(SymmetryElement{perm, mask});
      if (mask == (1u << kPoolSize) - 1) break;
    }
  }
  return group;
}

namespace {

// Port relabeling induced by a symmetry element: externals fixed, the ports
// of slot s move to slot_perm[s], swapped when bit s of swap_mask is set.
std::array<PortId, kNumPorts> port_permutation(const SymmetryElement& g) {
  std::array<PortId, kNumPorts> pi{};
  pi[0] = 0;
  pi[1] = 1;
  pi[2] = 2;
  for (int slot = 0; slot < kPoolSize; ++slot) {
    int target = g.slot_perm[static_cast<size_t>(slot)];
    bool swap = (g.swap_mask >> slot) & 1;
    pi[static_cast<size_t>(device_port(slot, 1))] = device_port(target, swap ? 2 : 1);
    pi[static_cast<size_t>(device_port(slot, 2))] = device_port(target, swap ? 1 : 2);
  }
  return pi;
}

// Restricted-growth encoding of the partition after relabeling ports by pi:
// visiting ports 0..12, each net gets the next index at its first occurrence.
std::array<uint8_t, kNumPorts> rgs_after(const Topology& t,
                                         const std::array<PortId, kNumPorts>& pi) {
  // inverse: which original port sits at relabeled position q
  std::array<PortId, kNumPorts> inv{};
  for (PortId p = 0; p < kNumPorts; ++p) inv[static_cast<size_t>(pi[static_cast<size_t>(p)])] = p;
  std::array<int, kNumPorts> net_index{};
  net_index.fill(-1);
  std::array<uint8_t, kNumPorts> rgs{};
  int next = 0;
  for (PortId q = 0; q < kNumPorts; ++q) {
    PortId rep = t.net_of(inv[static_cast<size_t>(q)]);
    if (net_index[static_cast<size_t>(rep)] < 0) net_index[static_cast<size_t>(rep)] = next++;
    rgs[static_cast<size_t>(q)] = static_cast<uint8_t>(net_index[static_cast<size_t>(rep)]);
  }
  return rgs;
}

}  // namespace

Topology apply_symmetry(const Topology& t, const SymmetryElement& g) {
  auto pi = port_permutation(g);
  std::map<PortId, PortId> assignment;
  // Ports relabeled by pi keep their net mates: q and q' share a net iff
  // their preimages did. Use min relabeled member as the label.
  std::array<PortId, kNumPorts> min_label{};
  min_label.fill(kNumPorts);
  for (PortId p = 0; p < kNumPorts; ++p) {
    PortId rep = t.net_of(p);
    min_label[static_cast<size_t>(rep)] =
        std::min(min_label[static_cast<size_t>(rep)], pi[static_cast<size_t>(p)]);
  }
  for (PortId p = 0; p < kNumPorts; ++p) {
    assignment[pi[static_cast<size_t>(p)]] = min_label[static_cast<size_t>(t.net_of(p))];
  }
  return Topology::create(t.pool(), assignment);
}

CanonicalKey canonicalize(const Topology& t) {
  const auto group = symmetry_group(t.pool());
  std::array<uint8_t, kNumPorts> best{};
  bool first = true;
  for (const auto& g : group) {
    auto rgs = rgs_after(t, port_permutation(g));
    if (first || rgs < best) {
      best = rgs;
      first = false;
    }
  }
  CanonicalKey key;
  key.reserve(kPoolSize + kNumPorts);
  for (int slot = 0; slot < kPoolSize; ++slot) {
    key.push_back(static_cast<char>('0' + static_cast<int>(t.pool().kind(slot))));
  }
  key.push_back('|');
  for (uint8_t b : best) key.push_back(static_cast<char>('a' + b));
  return key;
}

ScreenResult structural_screen(const Topology& t) {
  // Union nets across each device's two ports, then compare IN and OUT roots.
  std::array<PortId, kNumPorts> parent{};
  for (PortId p = 0; p < kNumPorts; ++p) parent[static_cast<size_t>(p)] = t.net_of(p);
  auto find = [&](PortId p) {
    while (parent[static_cast<size_t>(p)] != p) {
      parent[static_cast<size_t>(p)] = parent[static_cast<size_t>(parent[static_cast<size_t>(p)])];
      p = parent[static_cast<size_t>(p)];
    }
    return p;
  };
  auto unite = [&](PortId a, PortId b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  };
  for (int slot = 0; slot < kPoolSize; ++slot) {
    unite(device_port(slot, 1), device_port(slot, 2));
  }
  return ScreenResult{find(kPortIn) == find(kPortOut)};
}

}  // namespace csyn
