#include "csyn/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "csyn/encoding.hpp"

namespace csyn {

Topology DatasetRecord::topology() const {
  return parse_topology(netlist_array, pool, EncodingMode::Array);
}

Topology random_topology(const ComponentPool& pool, Rng& rng, double alpha) {
  std::vector<PortId> order(kNumPorts);
  for (PortId p = 0; p < kNumPorts; ++p) order[static_cast<size_t>(p)] = p;
  rng.shuffle(order);

  std::vector<std::vector<PortId>> nets;
  int placed = 0;
  for (PortId p : order) {
    const double total = placed + alpha;
    const double u = rng.next_double() * total;
    if (u < placed) {
      // Find the net by cumulative size, in creation order.
      double acc = 0.0;
      size_t chosen = nets.size() - 1;
      for (size_t k = 0; k < nets.size(); ++k) {
        acc += static_cast<double>(nets[k].size());
        if (u < acc) {
          chosen = k;
          break;
        }
      }
      nets[chosen].push_back(p);
    } else {
      nets.push_back({p});
    }
    ++placed;
  }
  return Topology::from_groups(pool, nets);
}

ComponentPool random_pool(Rng& rng) {
  std::array<DeviceKind, kPoolSize> kinds{};
  for (auto& k : kinds) {
    k = static_cast<DeviceKind>(rng.next_below(kNumDeviceKinds));
  }
  return ComponentPool(kinds);
}

double random_duty(Rng& rng) {
  return kDutyValues[rng.next_below(kDutyValues.size())];
}

namespace {

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, threads);
  if (threads == 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

std::vector<DatasetRecord> generate_dataset(uint64_t n, const SimConfig& cfg,
                                            const GenerateOptions& options,
                                            GenerateStats* stats) {
  Rng rng(options.seed);
  GenerateStats local;

  struct Draw {
    ComponentPool pool;
    double duty;
    Topology topology;
    bool screened_out;
  };

  // Sampling is serial so the record stream is a pure function of the seed;
  // only the oracle labeling below runs on worker threads.
  std::vector<Draw> draws;
  std::set<std::pair<CanonicalKey, double>> seen;
  const uint64_t max_attempts = options.dedup ? n * 100 + 1000 : n;
  while (draws.size() < n && local.drawn < max_attempts) {
    ComponentPool pool = random_pool(rng);
    double duty = random_duty(rng);
    Topology t = random_topology(pool, rng);
    ++local.drawn;
    if (options.dedup) {
      auto key = std::make_pair(canonicalize(t), duty);
      if (!seen.insert(key).second) {
        ++local.duplicates;
        continue;
      }
    }
    bool screened_out = options.use_screen && !structural_screen(t).connected;
    if (screened_out) ++local.screened_out;
    draws.push_back(Draw{std::move(pool), duty, std::move(t), screened_out});
  }

  std::vector<DatasetRecord> records(draws.size());
  parallel_for(draws.size(), options.threads, [&](size_t i) {
    const Draw& d = draws[i];
    DatasetRecord& r = records[i];
    r.id = i;
    r.pool = d.pool;
    r.duty = d.duty;
    r.netlist_array = encode_topology(d.topology, EncodingMode::Array);
    if (d.screened_out) {
      r.valid = 0;
      r.v_out_avg = 0.0;
      return;
    }
    OracleResult o = oracle(d.topology, d.duty, cfg);
    r.valid = o.valid ? 1 : 0;
    r.efficiency = o.valid ? o.efficiency : std::numeric_limits<double>::quiet_NaN();
    r.v_out_avg = o.sim.v_out_avg;
  });
  for (const auto& r : records) local.valid += static_cast<uint64_t>(r.valid);

  if (stats) *stats = local;
  return records;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, int line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw FormatError(line, "trailing characters in number '" + s + "'");
    return v;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError(line, "bad number '" + s + "'");
  }
}

std::string format_pool(const ComponentPool& pool) {
  std::string out;
  for (int slot = 0; slot < kPoolSize; ++slot) {
    if (slot) out.push_back(' ');
    out += kind_name(pool.kind(slot));
  }
  return out;
}

ComponentPool parse_pool(const std::string& s, int line) {
  std::istringstream in(s);
  std::array<DeviceKind, kPoolSize> kinds{};
  std::string w;
  int i = 0;
  while (in >> w) {
    if (i >= kPoolSize) throw FormatError(line, "pool has more than 5 devices");
    auto k = kind_from_name(w);
    if (!k) throw FormatError(line, "unknown device kind '" + w + "'");
    kinds[static_cast<size_t>(i++)] = *k;
  }
  if (i != kPoolSize) throw FormatError(line, "pool must list exactly 5 devices");
  return ComponentPool(kinds);
}

}  // namespace

std::string format_record(const DatasetRecord& r) {
  std::string out = std::to_string(r.id);
  out += '\t';
  out += format_pool(r.pool);
  out += '\t';
  out += format_double(r.duty);
  out += '\t';
  out += r.netlist_array;
  out += '\t';
  out += std::to_string(r.valid);
  out += '\t';
  out += format_double(r.efficiency);
  out += '\t';
  out += format_double(r.v_out_avg);
  return out;
}

DatasetRecord parse_record(const std::string& line, int line_number) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (fields.size() != 7) {
    throw FormatError(line_number,
                      "expected 7 tab-separated fields, got " + std::to_string(fields.size()));
  }
  DatasetRecord r;
  try {
    r.id = std::stoull(fields[0]);
  } catch (const std::exception&) {
    throw FormatError(line_number, "bad id '" + fields[0] + "'");
  }
  r.pool = parse_pool(fields[1], line_number);
  r.duty = parse_double(fields[2], line_number);
  r.netlist_array = fields[3];
  if (fields[4] != "0" && fields[4] != "1") {
    throw FormatError(line_number, "valid flag must be 0 or 1");
  }
  r.valid = fields[4] == "1" ? 1 : 0;
  r.efficiency = parse_double(fields[5], line_number);
  r.v_out_avg = parse_double(fields[6], line_number);
  try {
    (void)r.topology();
  } catch (const ParseError& e) {
    throw FormatError(line_number, std::string("netlist does not parse: ") + e.what());
  }
  return r;
}

void write_records(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) {
    out << format_record(r) << '\n';
  }
  if (!out) throw IoError("write failed");
}

void write_records(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_records(out, records);
}

std::vector<DatasetRecord> read_records(std::istream& in) {
  std::vector<DatasetRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    records.push_back(parse_record(line, line_number));
  }
  return records;
}

std::vector<DatasetRecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_records(in);
}

Split split(const std::vector<DatasetRecord>& records, const SplitSpec& spec) {
  const double total = spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  Split out;
  for (const auto& r : records) {
    const double u =
        static_cast<double>(mix64(r.id, spec.seed) >> 11) * 0x1.0p-53;
    if (u < spec.train_fraction) {
      out.train.push_back(r);
    } else if (u < spec.train_fraction + spec.val_fraction) {
      out.val.push_back(r);
    } else {
      out.test.push_back(r);
    }
  }
  return out;
}

}  // namespace csyn
