#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "csyn/topology.hpp"
#include "testutil.hpp"

using namespace csyn;

TEST_CASE("instance names follow kind order of appearance") {
  ComponentPool pool({DeviceKind::PhaseISwitch, DeviceKind::PhaseIISwitch,
                      DeviceKind::PhaseIISwitch, DeviceKind::Capacitor, DeviceKind::Inductor});
  CHECK(pool.instance_name(0) == "Sa0");
  CHECK(pool.instance_name(1) == "Sb0");
  CHECK(pool.instance_name(2) == "Sb1");
  CHECK(pool.instance_name(3) == "C0");
  CHECK(pool.instance_name(4) == "L0");
  CHECK(pool.slot_of_instance("Sb1") == 2);
  CHECK(pool.slot_of_instance("C1") == -1);
}

TEST_CASE("single-net topology") {
  std::map<PortId, PortId> assignment;
  for (PortId p = 0; p < kNumPorts; ++p) assignment[p] = 0;
  Topology t = Topology::create(test::pool_ccl_sa_sb(), assignment);
  for (PortId p = 0; p < kNumPorts; ++p) CHECK(t.net_of(p) == 0);
}

TEST_CASE("missing port rejected") {
  std::map<PortId, PortId> assignment;
  for (PortId p = 0; p < kNumPorts - 1; ++p) assignment[p] = 0;
  CHECK_THROWS_AS(Topology::create(test::pool_ccl_sa_sb(), assignment), MalformedTopology);
}

TEST_CASE("representative must lie in its own net") {
  std::map<PortId, PortId> assignment;
  for (PortId p = 0; p < kNumPorts; ++p) assignment[p] = p;
  assignment[5] = 4;
  assignment[4] = 3;  // 4 labels others but maps elsewhere
  CHECK_THROWS_AS(Topology::create(test::pool_ccl_sa_sb(), assignment), MalformedTopology);
}

TEST_CASE("constructor normalizes representatives to minimum member") {
  // nets {IN, Sa0.1}, {Sa0.2, L0.1}, {L0.2, OUT}; Sa0 = slot 3, L0 = slot 2.
  Topology t = Topology::from_groups(
      test::pool_ccl_sa_sb(),
      {{kPortIn, device_port(3, 1)}, {device_port(3, 2), device_port(2, 1)},
       {device_port(2, 2), kPortOut}});
  CHECK(t.net_of(device_port(3, 1)) == kPortIn);
  CHECK(t.net_of(device_port(3, 2)) == device_port(2, 1));  // min(9, 7) = 7
  CHECK(t.net_of(kPortOut) == kPortOut);                    // min(2, 8) = 2
  CHECK(t.net_of(device_port(2, 2)) == kPortOut);
  // Idempotence: re-creating from the normalized map is an identity.
  std::map<PortId, PortId> again;
  for (PortId p = 0; p < kNumPorts; ++p) again[p] = t.net_of(p);
  CHECK(Topology::create(t.pool(), again) == t);
}

TEST_CASE("canonical key invariant under instance swap and port swap") {
  auto pool = test::pool_ccl_sa_sb();
  Topology t = Topology::from_groups(
      pool, {{kPortIn, device_port(0, 1)}, {device_port(0, 2), kPortOut},
             {device_port(1, 1), kPortGround}});
  SUBCASE("swapping the two capacitor instances") {
    SymmetryElement g;
    g.slot_perm = {1, 0, 2, 3, 4};
    CHECK(canonicalize(apply_symmetry(t, g)) == canonicalize(t));
  }
  SUBCASE("swapping one capacitor's ports") {
    SymmetryElement g;
    g.swap_mask = 1;
    CHECK(canonicalize(apply_symmetry(t, g)) == canonicalize(t));
  }
}

TEST_CASE("topologies differing in OUT's net get distinct keys") {
  auto pool = test::pool_ccl_sa_sb();
  // a: OUT tied to C0 port 2; b: OUT tied to L0 port 2.
  Topology a = Topology::from_groups(
      pool, {{kPortIn, device_port(0, 1)}, {device_port(0, 2), kPortOut}});
  Topology b = Topology::from_groups(
      pool, {{kPortIn, device_port(0, 1)}, {device_port(2, 2), kPortOut}});
  // The brute-force group search is the oracle for non-isomorphism.
  REQUIRE_FALSE(test::brute_force_isomorphic(a, b));
  CHECK(canonicalize(a) != canonicalize(b));
}

TEST_CASE("canonicalize agrees with the brute-force oracle on random pairs") {
  Rng rng(2024);
  int isomorphic_pairs = 0;
  for (int iter = 0; iter < 60; ++iter) {
    ComponentPool pool = random_pool(rng);
    Topology a = random_topology(pool, rng);
    Topology b = random_topology(pool, rng);
    const bool iso = test::brute_force_isomorphic(a, b);
    if (iso) ++isomorphic_pairs;
    CHECK((canonicalize(a) == canonicalize(b)) == iso);
  }
  // Also exercise pairs guaranteed isomorphic.
  for (int iter = 0; iter < 40; ++iter) {
    ComponentPool pool = random_pool(rng);
    Topology a = random_topology(pool, rng);
    const auto group = symmetry_group(pool);
    const auto& g = group[static_cast<size_t>(rng.next_below(group.size()))];
    CHECK(canonicalize(apply_symmetry(a, g)) == canonicalize(a));
  }
}

TEST_CASE("canonicalize is a congruence over 1000 random group actions") {
  Rng rng(7);
  for (int iter = 0; iter < 1000; ++iter) {
    ComponentPool pool = random_pool(rng);
    Topology t = random_topology(pool, rng);
    const auto group = symmetry_group(pool);
    const auto& g = group[static_cast<size_t>(rng.next_below(group.size()))];
    REQUIRE(canonicalize(apply_symmetry(t, g)) == canonicalize(t));
  }
}

TEST_CASE("structural screen") {
  auto pool = test::pool_ccl_sa_sb();
  SUBCASE("all ports one net: connected") {
    std::map<PortId, PortId> assignment;
    for (PortId p = 0; p < kNumPorts; ++p) assignment[p] = 0;
    CHECK(structural_screen(Topology::create(pool, assignment)).connected);
  }
  SUBCASE("OUT touching no device: disconnected") {
    Topology t = Topology::from_groups(pool, {{kPortIn, device_port(0, 1)}});
    CHECK_FALSE(structural_screen(t).connected);
  }
  SUBCASE("chain IN - Sa0 - L0 - OUT: connected") {
    Topology t = Topology::from_groups(
        pool, {{kPortIn, device_port(3, 1)}, {device_port(3, 2), device_port(2, 1)},
               {device_port(2, 2), kPortOut}});
    CHECK(structural_screen(t).connected);
  }
  SUBCASE("path through the ground net counts") {
    Topology t = Topology::from_groups(
        pool, {{kPortIn, device_port(0, 1)}, {device_port(0, 2), kPortGround},
               {device_port(2, 1), kPortGround}, {device_port(2, 2), kPortOut}});
    CHECK(structural_screen(t).connected);
  }
}

TEST_CASE("symmetry group size") {
  // Pool C,C,L,Sa,Sb: 2! permutations x 2^5 swaps.
  CHECK(symmetry_group(test::pool_ccl_sa_sb()).size() == 2 * 32);
  ComponentPool all_c({DeviceKind::Capacitor, DeviceKind::Capacitor, DeviceKind::Capacitor,
                       DeviceKind::Capacitor, DeviceKind::Capacitor});
  CHECK(symmetry_group(all_c).size() == 120 * 32);
}
