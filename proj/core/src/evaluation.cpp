#include "csyn/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <thread>

namespace csyn {

namespace {

// Regularized incomplete beta I_x(a,b) by the Lentz continued fraction;
// relative error well below 1e-10 for the t-test's arguments.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

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

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw DegenerateGroups("both groups need at least 2 samples");
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma), vb = sample_variance(b, mb);
  if (va == 0.0 && vb == 0.0) {
    throw DegenerateGroups("both groups have zero variance");
  }
  const double se2 = va / na + vb / nb;
  TTestResult r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  // two-sided: p = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = r.df / (r.df + r.t * r.t);
  r.p = incomplete_beta(r.df / 2.0, 0.5, x);
  return r;
}

GenerateUniqueResult generate_unique(Generator& model, int n_unique, const DecodeParams& decode,
                                     int64_t max_attempts, EncodingMode mode, uint64_t seed) {
  if (n_unique < 1) throw std::invalid_argument("n_unique must be >= 1");
  if (max_attempts < n_unique) throw std::invalid_argument("max_attempts < n_unique");
  Rng rng(seed);
  GenerateUniqueResult out;
  std::set<CanonicalKey> seen;
  while (static_cast<int>(out.samples.size()) < n_unique && out.attempts < max_attempts) {
    const ComponentPool pool = random_pool(rng);
    TokenSequence prompt_ids = tokenize(encode_prompt(pool));
    prompt_ids.pop_back();  // BOS + prompt words; generation supplies the EOS
    const TokenSequence generated = sample(model, prompt_ids, decode, rng);
    ++out.attempts;
    const std::string text = detokenize(generated);
    std::optional<Topology> topo;
    try {
      topo = parse_topology(text, pool, mode);
    } catch (const ParseError&) {
      continue;
    } catch (const std::length_error&) {
      continue;
    }
    CanonicalKey key = canonicalize(*topo);
    if (!seen.insert(key).second) continue;
    GeneratedSample s;
    s.pool = pool;
    s.topology = std::move(*topo);
    s.duty = random_duty(rng);
    s.text = text;
    out.samples.push_back(std::move(s));
  }
  out.budget_exhausted = static_cast<int>(out.samples.size()) < n_unique;
  return out;
}

EvalReport eval_metrics(const GenerateUniqueResult& generation, Classifier& clf,
                        const SimConfig& sim_cfg, const EvalOptions& options) {
  return eval_metrics(generation, clf, sim_cfg, options, nullptr);
}

EvalReport eval_metrics(const GenerateUniqueResult& generation, Classifier& clf,
                        const SimConfig& sim_cfg, const EvalOptions& options,
                        EvalDetails* details) {
  const auto& samples = generation.samples;
  if (samples.empty()) throw std::invalid_argument("eval_metrics on empty sample set");
  const size_t n = samples.size();

  EvalDetails local;
  local.p_valid.resize(n);
  local.oracle_valid.assign(n, 0);
  local.efficiency.assign(n, std::numeric_limits<double>::quiet_NaN());

  // Classifier scoring is cheap and serial; simulations fan out over the
  // pool and land in per-index slots, so aggregation is order-independent.
  for (size_t i = 0; i < n; ++i) {
    local.p_valid[i] = clf.p_valid(content_ids(samples[i].text));
  }
  parallel_for(n, options.threads, [&](size_t i) {
    const OracleResult o = oracle(samples[i].topology, samples[i].duty, sim_cfg);
    local.oracle_valid[i] = o.valid ? 1 : 0;
    if (o.valid) local.efficiency[i] = o.efficiency;
  });

  EvalReport r;
  r.n_unique = static_cast<int>(n);
  r.n_attempts = generation.attempts;
  r.rho = static_cast<double>(generation.attempts) / static_cast<double>(n);
  int clf_valid = 0, sim_valid = 0;
  double eff_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (local.p_valid[i] > options.threshold) ++clf_valid;
    if (local.oracle_valid[i]) {
      ++sim_valid;
      eff_sum += local.efficiency[i];
    }
  }
  r.e_f_valid = static_cast<double>(clf_valid) / static_cast<double>(n);
  r.e_f_s_valid = static_cast<double>(sim_valid) / static_cast<double>(n);
  r.e_f_s_eff = sim_valid > 0 ? eff_sum / sim_valid : 0.0;

  std::vector<double> probs_valid, probs_invalid;
  for (size_t i = 0; i < n; ++i) {
    (local.oracle_valid[i] ? probs_valid : probs_invalid).push_back(local.p_valid[i]);
  }
  try {
    const TTestResult tt = welch_t_test(probs_valid, probs_invalid);
    r.t_stat = tt.t;
    r.p_value = tt.p;
  } catch (const DegenerateGroups&) {
    // left as NaN
  }
  if (details) *details = std::move(local);
  return r;
}

std::string format_eval_report(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "E_f_valid\tE_f_S_valid\tE_f_S_eff\trho\tn_unique\tn_attempts\tt_stat\tp_value\n"
                "%.6f\t%.6f\t%.6f\t%.6f\t%d\t%lld\t%.6f\t%.6g\n",
                r.e_f_valid, r.e_f_s_valid, r.e_f_s_eff, r.rho, r.n_unique,
                static_cast<long long>(r.n_attempts), r.t_stat, r.p_value);
  return buf;
}

void write_eval_report(const std::string& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << format_eval_report(r);
}

ClfReport train_pipeline_classifier(const std::vector<DatasetRecord>& records,
                                    EncodingMode mode, const PipelineConfig& cfg,
                                    Classifier& clf) {
  const Split s = split(records, cfg.split_spec);
  const auto train = make_clf_examples(s.train, mode);
  const auto val = make_clf_examples(s.val, mode);
  return train_classifier(clf, train, val, cfg.clf_train);
}

PipelineOutcome run_refinement_pipeline(const std::vector<DatasetRecord>& records,
                                        EncodingMode mode, const PipelineConfig& cfg,
                                        Classifier& clf, uint64_t seed) {
  PipelineOutcome out;
  const Split s = split(records, cfg.split_spec);
  const auto lm_train = make_lm_examples(s.train, mode);
  const auto lm_val = make_lm_examples(s.val, mode);

  Generator g(cfg.generator, seed);
  TrainConfig lm_cfg = cfg.lm_train;
  lm_cfg.seed = seed;
  out.lm_report = pretrain_lm(g, lm_train, lm_val, lm_cfg);

  EvalOptions eval_opts;
  eval_opts.threshold = cfg.threshold;
  eval_opts.threads = cfg.threads;
  eval_opts.mode = mode;
  const uint64_t eval_seed = mix64(seed, 0x6576616cULL);
  out.baseline = eval_metrics(
      generate_unique(g, cfg.n_unique, cfg.decode, cfg.max_attempts, mode, eval_seed), clf,
      cfg.sim, eval_opts);

  LossWeights weights;
  TrainConfig refine_cfg = cfg.refine_train;
  refine_cfg.seed = seed;
  out.refine_report = refine(g, clf, lm_train, weights, refine_cfg);

  out.refined = eval_metrics(
      generate_unique(g, cfg.n_unique, cfg.decode, cfg.max_attempts, mode, eval_seed), clf,
      cfg.sim, eval_opts);
  return out;
}

std::pair<AblationOutcome, AblationOutcome> ablation_run(
    const std::vector<DatasetRecord>& records, const PipelineConfig& cfg, uint64_t seed) {
  std::pair<AblationOutcome, AblationOutcome> out;
  AblationOutcome* slots[2] = {&out.first, &out.second};
  const EncodingMode modes[2] = {EncodingMode::NLIncident, EncodingMode::Array};
  for (int i = 0; i < 2; ++i) {
    AblationOutcome& o = *slots[i];
    o.mode = modes[i];
    Classifier clf(cfg.classifier, cfg.clf_train.seed);
    o.clf_report = train_pipeline_classifier(records, modes[i], cfg, clf);
    o.pipeline = run_refinement_pipeline(records, modes[i], cfg, clf, seed);
  }
  return out;
}

std::string format_ablation_table(const AblationOutcome& nl, const AblationOutcome& array) {
  auto row = [](const char* name, const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s\t%.6f\t%.6f\t%.6f\t%.6f\n", name, r.e_f_valid,
                  r.e_f_s_valid, r.e_f_s_eff, r.rho);
    return std::string(buf);
  };
  std::string out = "model\tE_f_valid\tE_f_S_valid\tE_f_S_eff\trho\n";
  out += row("refined (nl incident)", nl.pipeline.refined);
  out += row("refined (w/o nl)", array.pipeline.refined);
  out += row("baseline (nl incident)", nl.pipeline.baseline);
  out += row("baseline (w/o nl)", array.pipeline.baseline);
  return out;
}

void write_eval_plot_data(const std::string& path, const EvalDetails& details, int bins) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "bin_lo\tbin_hi\tvalid\tinvalid\n";
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins;
    const double hi = static_cast<double>(b + 1) / bins;
    int cv = 0, ci = 0;
    for (size_t i = 0; i < details.p_valid.size(); ++i) {
      const double p = details.p_valid[i];
      const bool in_bin = b + 1 == bins ? (p >= lo && p <= hi) : (p >= lo && p < hi);
      if (!in_bin) continue;
      if (details.oracle_valid[i]) ++cv;
      else ++ci;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.2f\t%.2f\t%d\t%d\n", lo, hi, cv, ci);
    out << buf;
  }
}

}  // namespace csyn
