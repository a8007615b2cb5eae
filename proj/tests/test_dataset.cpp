#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "csyn/dataset.hpp"
#include "csyn/encoding.hpp"
#include "testutil.hpp"

using namespace csyn;

TEST_CASE("random topology satisfies the invariants") {
  Rng rng(1);
  for (int iter = 0; iter < 500; ++iter) {
    ComponentPool pool = random_pool(rng);
    Topology t = random_topology(pool, rng);
    for (PortId p = 0; p < kNumPorts; ++p) {
      REQUIRE(t.net_of(p) <= p);
      REQUIRE(t.net_of(t.net_of(p)) == t.net_of(p));
    }
  }
}

TEST_CASE("fixed seed reproduces the topology stream") {
  Rng a(99), b(99);
  auto pool = test::pool_ccl_sa_sb();
  for (int iter = 0; iter < 50; ++iter) {
    CHECK(random_topology(pool, a) == random_topology(pool, b));
  }
}

TEST_CASE("screen-connected fraction is stable across seeds") {
  // Empirical dataset statistic: measured on 100k draws per seed.
  auto fraction = [](uint64_t seed) {
    Rng rng(seed);
    int connected = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      ComponentPool pool = random_pool(rng);
      if (structural_screen(random_topology(pool, rng)).connected) ++connected;
    }
    return static_cast<double>(connected) / n;
  };
  const double f1 = fraction(1001);
  const double f2 = fraction(2002);
  CHECK(std::fabs(f1 - f2) < 0.01);
  CHECK(f1 > 0.05);
  CHECK(f1 < 0.99);
}

TEST_CASE("generate_dataset is deterministic and roundtrips") {
  SimConfig cfg;
  GenerateOptions opt;
  opt.seed = 7;
  opt.threads = 2;
  GenerateStats stats;
  const auto records = generate_dataset(10, cfg, opt, &stats);
  REQUIRE(records.size() == 10);
  CHECK(stats.drawn == 10);
  const auto records2 = generate_dataset(10, cfg, opt);
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(format_record(records[i]) == format_record(records2[i]));
    // Netlist text parses back to a topology consistent with its own encoding.
    Topology t = records[i].topology();
    CHECK(encode_topology(t, EncodingMode::Array) == records[i].netlist_array);
    if (records[i].valid) {
      CHECK(records[i].efficiency > 0.0);
      CHECK(records[i].efficiency <= 1.0);
    } else {
      CHECK(std::isnan(records[i].efficiency));
    }
  }
}

TEST_CASE("dedup leaves no duplicate (key, duty) pairs") {
  SimConfig cfg;
  GenerateOptions opt;
  opt.seed = 3;
  opt.dedup = true;
  const auto records = generate_dataset(60, cfg, opt);
  std::set<std::pair<CanonicalKey, double>> seen;
  for (const auto& r : records) {
    CHECK(seen.insert({canonicalize(r.topology()), r.duty}).second);
  }
}

TEST_CASE("screen fast path agrees with forced simulation") {
  SimConfig cfg;
  GenerateOptions with_screen{.seed = 21, .dedup = false, .use_screen = true, .threads = 2};
  GenerateOptions no_screen{.seed = 21, .dedup = false, .use_screen = false, .threads = 2};
  const auto a = generate_dataset(200, cfg, with_screen);
  const auto b = generate_dataset(200, cfg, no_screen);
  REQUIRE(a.size() == b.size());
  // A record the screen labeled invalid must stay invalid when simulated.
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].valid == b[i].valid);
}

TEST_CASE("record io roundtrip") {
  SimConfig cfg;
  GenerateOptions opt;
  opt.seed = 4;
  const auto records = generate_dataset(50, cfg, opt);
  std::ostringstream out;
  write_records(out, records);
  std::istringstream in(out.str());
  const auto back = read_records(in);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].pool == records[i].pool);
    CHECK(back[i].duty == records[i].duty);
    CHECK(back[i].netlist_array == records[i].netlist_array);
    CHECK(back[i].valid == records[i].valid);
    const bool eff_match = (std::isnan(back[i].efficiency) && std::isnan(records[i].efficiency)) ||
                           back[i].efficiency == records[i].efficiency;
    CHECK(eff_match);
    CHECK(back[i].v_out_avg == records[i].v_out_avg);
  }
}

TEST_CASE("format errors carry the line number") {
  std::istringstream in("0\tC C L Sa Sb\t0.5\tbad\n");
  CHECK_THROWS_AS(read_records(in), FormatError);
  std::istringstream in2("0\tC C L Sa Sb\t0.5\n");
  try {
    read_records(in2);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line == 1);
  }
}

TEST_CASE("nan efficiency serializes as literal nan") {
  DatasetRecord r;
  r.pool = test::pool_ccl_sa_sb();
  r.duty = 0.5;
  r.netlist_array = encode_topology(test::divider_topology(), EncodingMode::Array);
  r.valid = 0;
  const std::string line = format_record(r);
  CHECK(line.find("\tnan\t") != std::string::npos);
  const DatasetRecord back = parse_record(line, 1);
  CHECK(std::isnan(back.efficiency));
}

TEST_CASE("split determinism, disjointness and fractions") {
  SimConfig cfg;
  GenerateOptions opt;
  opt.seed = 5;
  opt.use_screen = true;
  auto records = generate_dataset(2000, cfg, opt);
  SplitSpec spec;
  spec.seed = 77;
  const Split s1 = split(records, spec);
  const Split s2 = split(records, spec);
  CHECK(s1.train.size() == s2.train.size());
  CHECK(s1.train.size() + s1.val.size() + s1.test.size() == records.size());
  std::set<uint64_t> train_ids, val_ids, test_ids;
  for (const auto& r : s1.train) train_ids.insert(r.id);
  for (const auto& r : s1.val) val_ids.insert(r.id);
  for (const auto& r : s1.test) test_ids.insert(r.id);
  for (uint64_t id : val_ids) CHECK(train_ids.count(id) == 0);
  for (uint64_t id : test_ids) {
    CHECK(train_ids.count(id) == 0);
    CHECK(val_ids.count(id) == 0);
  }
  // Law-of-large-numbers bound at n=2000: about 3.3 sigma for p=0.8 is 0.03.
  CHECK(std::fabs(static_cast<double>(s1.train.size()) / records.size() - 0.8) < 0.03);
  CHECK_THROWS_AS(split(records, SplitSpec{0.5, 0.2, 0.2, 0}), std::invalid_argument);
}

TEST_CASE("desk corpus keeps both labels represented") {
  SimConfig cfg;
  GenerateOptions opt;
  opt.seed = 12;
  opt.threads = 2;
  GenerateStats stats;
  const auto records = generate_dataset(1500, cfg, opt, &stats);
  const double valid_fraction = static_cast<double>(stats.valid) / records.size();
  CHECK(valid_fraction > 0.02);
  CHECK(valid_fraction < 0.98);
}
