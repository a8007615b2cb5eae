#pragma once

#include <optional>
#include <string>
#include <vector>

#include "csyn/classifier.hpp"
#include "csyn/dataset.hpp"
#include "csyn/generator.hpp"
#include "csyn/tensor.hpp"

namespace csyn {

struct DegenerateLabels : std::runtime_error {
  explicit DegenerateLabels(const std::string& what) : std::runtime_error(what) {}
};

struct AdamWConfig {
  double lr = 3e-4;  // desk-scale default; 0.95e-5 preset matches the large-model recipe
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam with bias-corrected moments.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg);
  // Clips the global gradient norm (clip <= 0 disables), applies one update,
  // zeroes the gradients.
  void step(double clip = 0.0);
  int64_t t() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

struct TauSchedule {
  enum class Mode { Fixed, ExpAnneal };
  Mode mode = Mode::Fixed;
  double tau0 = 1.0;
  double tau_min = 0.3;

  double at(int step, int total_steps) const;
};

struct TrainConfig {
  AdamWConfig optimizer;
  int batch_size = 32;
  int epochs = 5;
  uint64_t seed = 42;
  double grad_clip = 1.0;
  TauSchedule tau;
  bool keep_best_on_val = true;
  bool balance_classes = true;  // classifier batches: half per label
  // refinement
  int refine_steps = 300;
  int nll_batch = 8;
  int rollout_batch = 8;
  bool fix_loss_weights = false;      // freeze s1/s2 with lambda1 = 1
  bool disable_validity_loss = false; // lambda2 = 0 and no rollouts
  std::string metrics_path;           // append per-step lines when non-empty
};

// Learnable combination weights: lambda_i = exp(-s_i) stays positive for any
// real s_i; the additive s_i terms keep the weights from collapsing to zero.
struct LossWeights {
  Parameter s1{"loss.s1", {1}};
  Parameter s2{"loss.s2", {1}};
  double lambda1() const { return std::exp(-s1.value[0]); }
  double lambda2() const { return std::exp(-s2.value[0]); }
};

// ---- data preparation ----

struct ClfExample {
  TokenSequence ids;  // netlist content tokens, no specials
  int label = 0;
};

struct LmExample {
  TokenSequence tokens;  // BOS prompt netlist EOS
  int first_target = 0;  // index of the first netlist token in `tokens`
};

// Content token ids of a text (tokenize minus BOS/EOS).
TokenSequence content_ids(const std::string& text);

std::vector<ClfExample> make_clf_examples(const std::vector<DatasetRecord>& records,
                                          EncodingMode mode);
// Valid records only; prompt from the record's pool.
std::vector<LmExample> make_lm_examples(const std::vector<DatasetRecord>& records,
                                        EncodingMode mode);

// Deterministic epoch-reshuffling index stream shared by the trainers.
class BatchStream {
 public:
  BatchStream(size_t n, uint64_t seed);
  std::vector<size_t> next_batch(size_t batch_size);
  int64_t batches_per_epoch(size_t batch_size) const;

 private:
  void reshuffle();
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  Rng rng_;
};

// ---- classifier training ----

struct ClfReport {
  double f1 = 0.0, precision = 0.0, recall = 0.0, accuracy = 0.0;
  int best_epoch = -1;
  double val_loss = 0.0;
};

ClfReport evaluate_classifier(Classifier& clf, const std::vector<ClfExample>& examples,
                              double threshold = 0.5);

// Binary cross-entropy training; the checkpoint with the best validation F1
// is kept. Throws DegenerateLabels unless both labels appear in train.
ClfReport train_classifier(Classifier& clf, const std::vector<ClfExample>& train,
                           const std::vector<ClfExample>& val, const TrainConfig& cfg);

// ---- generator training ----

struct EmptyTarget : std::runtime_error {
  explicit EmptyTarget(const std::string& what) : std::runtime_error(what) {}
};

// Mean NLL per target token over the batch (teacher forcing, prompt and PAD
// positions excluded). Value only.
double lm_nll(Generator& g, const std::vector<LmExample>& batch);

struct LmReport {
  std::vector<double> step_losses;
  double best_val_nll = 0.0;
  double final_val_nll = 0.0;
  int best_epoch = -1;
};

LmReport pretrain_lm(Generator& g, const std::vector<LmExample>& train,
                     const std::vector<LmExample>& val, const TrainConfig& cfg);

// ---- Gumbel straight-through refinement ----

struct GumbelSample {
  int hard_index = 0;
  std::vector<double> noise;  // z_i, one per vocabulary entry
  std::vector<double> soft;   // softmax((logits + z) / tau)
};

// u ~ U(0,1) per class, z = -log(-log u), hard = argmax(logits + z),
// soft = softmax((logits + z) / tau). argmax(soft) == hard for every draw.
GumbelSample gumbel_st_step(const std::vector<double>& logits, double tau, Rng& rng);

struct RefineReport {
  std::vector<double> step_l_llm;
  std::vector<double> step_l_valid;
  std::vector<double> step_mean_p_valid;
  double lambda1_final = 1.0, lambda2_final = 1.0;
};

// Combined-loss refinement: per step, a teacher-forced NLL batch plus a batch
// of Gumbel straight-through rollouts scored by the frozen classifier.
// Updates the generator and the loss weights only.
RefineReport refine(Generator& g, Classifier& clf, const std::vector<LmExample>& train,
                    LossWeights& weights, const TrainConfig& cfg);

}  // namespace csyn
