#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "csyn/rng.hpp"
#include "csyn/simulator.hpp"
#include "csyn/topology.hpp"

namespace csyn {

// One labeled circuit: the array-form netlist plus the oracle verdict.
// Efficiency is NaN for invalid records.
struct DatasetRecord {
  uint64_t id = 0;
  ComponentPool pool;
  double duty = 0.5;
  std::string netlist_array;
  int valid = 0;
  double efficiency = std::numeric_limits<double>::quiet_NaN();
  double v_out_avg = 0.0;

  Topology topology() const;
};

struct FormatError : std::runtime_error {
  FormatError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  int line;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Random net partition of the 13 ports, Chinese-restaurant style: ports are
// visited in random order and each joins an existing net with probability
// proportional to its size, or opens a new net with weight alpha. The
// default alpha keeps both oracle labels well represented.
inline constexpr double kPartitionAlpha = 1.5;
Topology random_topology(const ComponentPool& pool, Rng& rng, double alpha = kPartitionAlpha);

// Uniform pool: each of the 5 slots drawn independently over the 4 kinds.
ComponentPool random_pool(Rng& rng);
double random_duty(Rng& rng);

struct GenerateOptions {
  uint64_t seed = 0;
  bool dedup = false;       // drop repeated (canonical key, duty) pairs
  bool use_screen = true;   // label screen-disconnected circuits invalid without simulating
  int threads = 0;          // 0 = hardware concurrency
};

struct GenerateStats {
  uint64_t drawn = 0;          // topologies sampled (>= emitted when dedup)
  uint64_t screened_out = 0;   // labeled invalid by the structural screen
  uint64_t valid = 0;
  uint64_t duplicates = 0;
};

// Emits n records. Sampling is a single serial stream of rng draws;
// simulation fans out over a worker pool; records arrive in id order, so the
// output is a deterministic function of (n, cfg, options.seed).
std::vector<DatasetRecord> generate_dataset(uint64_t n, const SimConfig& cfg,
                                            const GenerateOptions& options,
                                            GenerateStats* stats = nullptr);

// Tab-separated, one record per line, floats at 17 significant digits,
// NaN spelled `nan`. read_records(write_records(r)) == r.
void write_records(std::ostream& out, const std::vector<DatasetRecord>& records);
void write_records(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_records(std::istream& in);
std::vector<DatasetRecord> read_records(const std::string& path);

std::string format_record(const DatasetRecord& r);
DatasetRecord parse_record(const std::string& line, int line_number);

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  uint64_t seed = 0;
};

struct Split {
  std::vector<DatasetRecord> train, val, test;
};

// Deterministic hash(id, seed) assignment; every record lands in exactly one
// part regardless of input order.
Split split(const std::vector<DatasetRecord>& records, const SplitSpec& spec);

}  // namespace csyn
