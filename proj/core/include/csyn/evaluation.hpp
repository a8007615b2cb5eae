#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csyn/training.hpp"

namespace csyn {

struct DegenerateGroups : std::runtime_error {
  explicit DegenerateGroups(const std::string& what) : std::runtime_error(what) {}
};

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

// Welch two-sample t statistic with Welch-Satterthwaite degrees of freedom;
// two-sided p from the t survival function (incomplete-beta continued
// fraction, abs error < 1e-8). Requires both groups >= 2 samples and nonzero
// variance in at least one.
TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
  double e_f_valid = 0.0;    // classifier-valid fraction (p_valid > threshold)
  double e_f_s_valid = 0.0;  // simulator-valid fraction
  double e_f_s_eff = 0.0;    // mean efficiency over simulator-valid samples
  double rho = 0.0;          // attempts / uniques
  int n_unique = 0;
  int64_t n_attempts = 0;
  double t_stat = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
};

struct GeneratedSample {
  ComponentPool pool;
  Topology topology;
  double duty = 0.5;
  std::string text;  // raw generated netlist text
};

struct GenerateUniqueResult {
  std::vector<GeneratedSample> samples;
  int64_t attempts = 0;
  bool budget_exhausted = false;
};

// Samples prompts with fresh random pools, decodes, parses, and keeps
// topologies with unseen canonical keys until n_unique or max_attempts.
// Unparseable and duplicate generations count as attempts only.
GenerateUniqueResult generate_unique(Generator& model, int n_unique, const DecodeParams& decode,
                                     int64_t max_attempts, EncodingMode mode, uint64_t seed);

struct EvalOptions {
  double threshold = 0.6;
  int threads = 0;
  EncodingMode mode = EncodingMode::NLIncident;
};

// Scores every sample with the classifier (on its raw text) and the
// simulator oracle (at its duty), then aggregates Table-style metrics and the
// classifier/simulator correlation t-test. Pure function of its inputs.
EvalReport eval_metrics(const GenerateUniqueResult& generation, Classifier& clf,
                        const SimConfig& sim_cfg, const EvalOptions& options);

// Per-sample details retained for plotting and the t-test.
struct EvalDetails {
  std::vector<double> p_valid;
  std::vector<uint8_t> oracle_valid;
  std::vector<double> efficiency;  // NaN when invalid
};

EvalReport eval_metrics(const GenerateUniqueResult& generation, Classifier& clf,
                        const SimConfig& sim_cfg, const EvalOptions& options,
                        EvalDetails* details);

// Single-row tab-separated table with a header naming the report columns.
std::string format_eval_report(const EvalReport& r);
void write_eval_report(const std::string& path, const EvalReport& r);
// Histogram of p_valid split by oracle label: `bin_lo bin_hi valid invalid`.
void write_eval_plot_data(const std::string& path, const EvalDetails& details, int bins = 20);

// ---- end-to-end pipeline (shared by `ablate` and the experiment suites) ----

struct PipelineConfig {
  GeneratorConfig generator;
  ClassifierConfig classifier;
  TrainConfig clf_train;
  TrainConfig lm_train;
  TrainConfig refine_train;
  DecodeParams decode;
  SimConfig sim;
  SplitSpec split_spec;
  int n_unique = 200;
  int64_t max_attempts = 10000;
  double threshold = 0.6;
  int threads = 0;
};

struct PipelineOutcome {
  ClfReport clf_report;
  LmReport lm_report;
  RefineReport refine_report;
  EvalReport baseline;  // pretrained-only model
  EvalReport refined;
};

// Classifier training on the split corpus under one encoding mode.
ClfReport train_pipeline_classifier(const std::vector<DatasetRecord>& records,
                                    EncodingMode mode, const PipelineConfig& cfg,
                                    Classifier& clf);

// Pretrain -> eval -> refine -> eval with every stage seeded by `seed`
// (model init, batch order, rollouts, and sample generation).
PipelineOutcome run_refinement_pipeline(const std::vector<DatasetRecord>& records,
                                        EncodingMode mode, const PipelineConfig& cfg,
                                        Classifier& clf, uint64_t seed);

struct AblationOutcome {
  EncodingMode mode;
  ClfReport clf_report;
  PipelineOutcome pipeline;
};

// Trains and evaluates the full stack under both encodings on the same
// record set (same dataset seed), mirroring the encoding ablation.
std::pair<AblationOutcome, AblationOutcome> ablation_run(
    const std::vector<DatasetRecord>& records, const PipelineConfig& cfg, uint64_t seed);

// Side-by-side table of the two reports.
std::string format_ablation_table(const AblationOutcome& nl, const AblationOutcome& array);

}  // namespace csyn
