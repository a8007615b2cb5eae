#include "csyn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace csyn {

// ---- AdamW ------------------------------------------------------------------

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void AdamW::step(double clip) {
  if (clip > 0.0) {
    double norm_sq = 0.0;
    for (const Parameter* p : params_) {
      for (double g : p->grad) norm_sq += g * g;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > clip) {
      const double scale = clip / norm;
      for (Parameter* p : params_) {
        for (double& g : p->grad) g *= scale;
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                               cfg_.weight_decay * p.value[i]);
    }
    p.zero_grad();
  }
}

double TauSchedule::at(int step, int total_steps) const {
  if (mode == Mode::Fixed || total_steps <= 1) return tau0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return tau0 * std::pow(tau_min / tau0, frac);
}

// ---- data preparation -------------------------------------------------------

TokenSequence content_ids(const std::string& text) {
  TokenSequence seq = tokenize(text);
  return TokenSequence(seq.begin() + 1, seq.end() - 1);
}

std::vector<ClfExample> make_clf_examples(const std::vector<DatasetRecord>& records,
                                          EncodingMode mode) {
  std::vector<ClfExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    ClfExample ex;
    ex.ids = content_ids(encode_topology(r.topology(), mode));
    ex.label = r.valid;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LmExample> make_lm_examples(const std::vector<DatasetRecord>& records,
                                        EncodingMode mode) {
  std::vector<LmExample> out;
  for (const auto& r : records) {
    if (!r.valid) continue;
    const std::string prompt = encode_prompt(r.pool);
    const std::string topo = encode_topology(r.topology(), mode);
    LmExample ex;
    ex.tokens = tokenize(prompt + " " + topo);
    ex.first_target = static_cast<int>(tokenize(prompt).size()) - 1;  // BOS + prompt words
    out.push_back(std::move(ex));
  }
  return out;
}

BatchStream::BatchStream(size_t n, uint64_t seed) : rng_(seed) {
  order_.resize(n);
  for (size_t i = 0; i < n; ++i) order_[i] = i;
  reshuffle();
}

void BatchStream::reshuffle() {
  rng_.shuffle(order_);
  cursor_ = 0;
}

std::vector<size_t> BatchStream::next_batch(size_t batch_size) {
  std::vector<size_t> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    if (cursor_ >= order_.size()) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

int64_t BatchStream::batches_per_epoch(size_t batch_size) const {
  return static_cast<int64_t>(order_.size() / batch_size);
}

// ---- classifier training ----------------------------------------------------

ClfReport evaluate_classifier(Classifier& clf, const std::vector<ClfExample>& examples,
                              double threshold) {
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double loss = 0.0;
  for (const auto& ex : examples) {
    Tape tape(false);
    const double p = clf.forward_ids(tape, ex.ids).scalar();
    const double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
    loss -= ex.label ? std::log(pc) : std::log(1.0 - pc);
    const bool pred = p > threshold;
    if (pred && ex.label) ++tp;
    else if (pred && !ex.label) ++fp;
    else if (!pred && ex.label) ++fn;
    else ++tn;
  }
  ClfReport r;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.accuracy = examples.empty() ? 0.0 : static_cast<double>(tp + tn) / examples.size();
  r.val_loss = examples.empty() ? 0.0 : loss / examples.size();
  return r;
}

namespace {

void append_metrics(const std::string& path, int64_t step, double l_llm, double l_valid,
                    double lambda1, double lambda2, double mean_p_valid) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                static_cast<long long>(step), l_llm, l_valid, lambda1, lambda2, mean_p_valid);
  out << buf;
}

std::vector<double> snapshot(const std::vector<Parameter*>& params) {
  std::vector<double> all;
  for (const Parameter* p : params) all.insert(all.end(), p->value.begin(), p->value.end());
  return all;
}

void restore(const std::vector<Parameter*>& params, const std::vector<double>& all) {
  size_t off = 0;
  for (Parameter* p : params) {
    std::copy(all.begin() + static_cast<long>(off),
              all.begin() + static_cast<long>(off + p->value.size()), p->value.begin());
    off += p->value.size();
  }
}

}  // namespace

ClfReport train_classifier(Classifier& clf, const std::vector<ClfExample>& train,
                           const std::vector<ClfExample>& val, const TrainConfig& cfg) {
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < train.size(); ++i) {
    (train[i].label ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) {
    throw DegenerateLabels("classifier training needs both labels present");
  }

  AdamW opt(clf.parameters(), cfg.optimizer);
  // The oracle labels are imbalanced; by default batches draw half from each
  // class (the minority class cycles more often), keeping p = 1/2 the
  // natural decision boundary.
  BatchStream pos_stream(pos.size(), mix64(cfg.seed, 1));
  BatchStream neg_stream(neg.size(), mix64(cfg.seed, 2));
  BatchStream flat_stream(train.size(), cfg.seed);
  const size_t half = static_cast<size_t>(std::max(1, cfg.batch_size / 2));
  const int64_t batches =
      std::max<int64_t>(1, static_cast<int64_t>(train.size()) / cfg.batch_size);
  double best_f1 = -1.0;
  std::vector<double> best_params;
  int best_epoch = -1;
  int64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int64_t b = 0; b < batches; ++b) {
      std::vector<size_t> batch;
      if (cfg.balance_classes) {
        for (size_t i : pos_stream.next_batch(half)) batch.push_back(pos[i]);
        for (size_t i : neg_stream.next_batch(half)) batch.push_back(neg[i]);
      } else {
        batch = flat_stream.next_batch(static_cast<size_t>(cfg.batch_size));
      }
      double loss_sum = 0.0;
      for (size_t idx : batch) {
        const ClfExample& ex = train[idx];
        Tape tape;
        Tensor p = clf.forward_ids(tape, ex.ids);
        Tensor loss = tape.binary_cross_entropy(p, ex.label);
        loss_sum += loss.scalar();
        tape.backward(loss, 1.0 / static_cast<double>(batch.size()));
      }
      opt.step(cfg.grad_clip);
      ++global_step;
      append_metrics(cfg.metrics_path, global_step,
                     std::numeric_limits<double>::quiet_NaN(),
                     loss_sum / static_cast<double>(batch.size()), 0.0, 1.0,
                     std::numeric_limits<double>::quiet_NaN());
    }
    const ClfReport r = evaluate_classifier(clf, val);
    if (r.f1 > best_f1) {
      best_f1 = r.f1;
      best_params = snapshot(clf.parameters());
      best_epoch = epoch;
    }
  }
  if (cfg.keep_best_on_val && !best_params.empty()) restore(clf.parameters(), best_params);
  ClfReport final_report = evaluate_classifier(clf, val);
  final_report.best_epoch = best_epoch;
  return final_report;
}

// ---- generator training -----------------------------------------------------

namespace {

struct NllBatchResult {
  double loss = 0.0;  // mean over target tokens in the batch
  int64_t tokens = 0;
};

// One teacher-forced pass over a batch. When `grad_seed` is nonzero, grads of
// grad_seed * (batch token-mean NLL) accumulate into the generator.
NllBatchResult lm_nll_batch(Generator& g, const std::vector<LmExample>& examples,
                            const std::vector<size_t>& batch, double grad_seed) {
  int64_t total = 0;
  for (size_t idx : batch) {
    const LmExample& ex = examples[idx];
    const int n = static_cast<int>(ex.tokens.size());
    if (ex.first_target >= n) throw EmptyTarget("example has no target tokens");
    total += n - ex.first_target;
  }
  if (total == 0) throw EmptyTarget("batch has no target tokens");

  double weighted_loss = 0.0;
  for (size_t idx : batch) {
    const LmExample& ex = examples[idx];
    const int n = static_cast<int>(ex.tokens.size());
    const int count = n - ex.first_target;
    TokenSequence input(ex.tokens.begin(), ex.tokens.end() - 1);
    std::vector<int> targets(ex.tokens.begin() + 1, ex.tokens.end());
    std::vector<uint8_t> mask(targets.size(), 0);
    for (size_t t = 0; t < targets.size(); ++t) {
      mask[t] = static_cast<int>(t) + 1 >= ex.first_target ? 1 : 0;
    }
    Tape tape(grad_seed != 0.0);
    Tensor logits = g.forward(tape, input);
    Tensor ce = tape.cross_entropy(logits, targets, mask);  // mean over this example
    weighted_loss += ce.scalar() * count;
    if (grad_seed != 0.0) {
      tape.backward(ce, grad_seed * static_cast<double>(count) / static_cast<double>(total));
    }
  }
  return {weighted_loss / static_cast<double>(total), total};
}

std::vector<size_t> all_indices(size_t n) {
  std::vector<size_t> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

double lm_nll(Generator& g, const std::vector<LmExample>& batch) {
  return lm_nll_batch(g, batch, all_indices(batch.size()), 0.0).loss;
}

LmReport pretrain_lm(Generator& g, const std::vector<LmExample>& train,
                     const std::vector<LmExample>& val, const TrainConfig& cfg) {
  if (train.empty()) throw EmptyTarget("no valid training records");
  AdamW opt(g.parameters(), cfg.optimizer);
  BatchStream stream(train.size(), cfg.seed);
  const int64_t batches = std::max<int64_t>(1, stream.batches_per_epoch(
                                                   static_cast<size_t>(cfg.batch_size)));
  LmReport report;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  int64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int64_t b = 0; b < batches; ++b) {
      const auto batch = stream.next_batch(static_cast<size_t>(cfg.batch_size));
      const auto res = lm_nll_batch(g, train, batch, 1.0);
      opt.step(cfg.grad_clip);
      report.step_losses.push_back(res.loss);
      ++global_step;
      append_metrics(cfg.metrics_path, global_step, res.loss,
                     std::numeric_limits<double>::quiet_NaN(), 1.0, 0.0,
                     std::numeric_limits<double>::quiet_NaN());
    }
    const double val_nll = val.empty() ? report.step_losses.back() : lm_nll(g, val);
    if (val_nll < best_val) {
      best_val = val_nll;
      best_params = snapshot(g.parameters());
      report.best_epoch = epoch;
    }
  }
  if (cfg.keep_best_on_val && !best_params.empty()) restore(g.parameters(), best_params);
  report.best_val_nll = best_val;
  report.final_val_nll = val.empty() ? best_val : lm_nll(g, val);
  return report;
}

// ---- Gumbel straight-through refinement --------------------------------------

GumbelSample gumbel_st_step(const std::vector<double>& logits, double tau, Rng& rng) {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  const size_t v = logits.size();
  GumbelSample s;
  s.noise.resize(v);
  std::vector<double> noised(v);
  for (size_t i = 0; i < v; ++i) {
    const double u = rng.next_double01();
    s.noise[i] = -std::log(-std::log(u));
    noised[i] = logits[i] + s.noise[i];
  }
  s.hard_index = 0;
  for (size_t i = 1; i < v; ++i) {
    if (noised[i] > noised[static_cast<size_t>(s.hard_index)]) s.hard_index = static_cast<int>(i);
  }
  s.soft.resize(v);
  double mx = noised[0] / tau;
  for (size_t i = 0; i < v; ++i) {
    s.soft[i] = noised[i] / tau;
    mx = std::max(mx, s.soft[i]);
  }
  double sum = 0.0;
  for (size_t i = 0; i < v; ++i) {
    s.soft[i] = std::exp(s.soft[i] - mx);
    sum += s.soft[i];
  }
  for (auto& p : s.soft) p /= sum;
  return s;
}

RefineReport refine(Generator& g, Classifier& clf, const std::vector<LmExample>& train,
                    LossWeights& weights, const TrainConfig& cfg) {
  if (train.empty()) throw EmptyTarget("no valid training records");
  const Vocabulary& vocab = Vocabulary::instance();
  const bool was_frozen = clf.frozen();
  clf.set_frozen(true);

  std::vector<Parameter*> opt_params = g.parameters();
  if (!cfg.fix_loss_weights) {
    opt_params.push_back(&weights.s1);
    opt_params.push_back(&weights.s2);
  }
  AdamW opt(opt_params, cfg.optimizer);
  BatchStream stream(train.size(), cfg.seed);
  RefineReport report;

  for (int step = 0; step < cfg.refine_steps; ++step) {
    const double lambda1 = cfg.fix_loss_weights ? 1.0 : weights.lambda1();
    const double lambda2 = cfg.disable_validity_loss ? 0.0 : weights.lambda2();
    const double tau = cfg.tau.at(step, cfg.refine_steps);

    // (a) teacher-forced NLL on ground-truth valid netlists
    const auto batch = stream.next_batch(static_cast<size_t>(cfg.nll_batch));
    const auto nll = lm_nll_batch(g, train, batch, lambda1);

    // (b) Gumbel straight-through rollouts scored by the frozen classifier
    double l_valid = 0.0;
    double mean_p_valid = 0.0;
    if (!cfg.disable_validity_loss) {
      for (int b = 0; b < cfg.rollout_batch; ++b) {
        // Per-sample stream derived from (seed, step, index): rollouts are
        // reproducible however the batch is scheduled.
        Rng rng(mix64(mix64(cfg.seed, 0x726f6c6cULL), mix64(static_cast<uint64_t>(step),
                                                            static_cast<uint64_t>(b))));
        const ComponentPool pool = random_pool(rng);
        TokenSequence prompt_ids = tokenize(encode_prompt(pool));
        prompt_ids.pop_back();  // keep BOS + prompt; EOS ends a full sequence
        const int prompt_len = static_cast<int>(prompt_ids.size());

        // Phase 1: value-only rollout, recording hard tokens and noises.
        IncrementalDecoder dec(g);
        std::vector<double> logits;
        for (int tok : prompt_ids) logits = dec.feed(tok);
        std::vector<int> sampled;
        std::vector<std::vector<double>> noises;
        while (prompt_len + static_cast<int>(sampled.size()) < g.config().max_seq) {
          GumbelSample gs = gumbel_st_step(logits, tau, rng);
          sampled.push_back(gs.hard_index);
          noises.push_back(std::move(gs.noise));
          if (gs.hard_index == vocab.eos()) break;
          if (prompt_len + static_cast<int>(sampled.size()) >= g.config().max_seq) break;
          logits = dec.feed(gs.hard_index);
        }
        const int m = static_cast<int>(sampled.size());
        const int content = m > 0 && sampled.back() == vocab.eos() ? m - 1 : m;
        if (content == 0) {
          // Immediate EOS: nothing for the classifier to score.
          l_valid += 1.0;
          continue;
        }

        // Phase 2: one differentiable pass over the realized sequence. The
        // recomputed logits are bit-identical to the rollout's, so the same
        // noises reproduce the same hard tokens.
        TokenSequence full = prompt_ids;
        full.insert(full.end(), sampled.begin(), sampled.end() - 1);
        Tape tape;
        Tensor logits_all = g.forward(tape, full);
        std::vector<Tensor> st_rows;
        st_rows.reserve(static_cast<size_t>(content));
        for (int j = 0; j < content; ++j) {
          const int row = prompt_len - 1 + j;
          Tensor lrow = tape.slice_rows(logits_all, row, row + 1);
          Tensor noised = tape.add(lrow, tape.constant({1, g.vocab_size()}, noises[static_cast<size_t>(j)]));
          Tensor soft = tape.softmax_rows(tape.scale(noised, 1.0 / tau));
          // Consistency of the two phases: the stored hard token must win.
          {
            const auto& sv = soft.value();
            int arg = 0;
            for (int i2 = 1; i2 < g.vocab_size(); ++i2) {
              if (sv[static_cast<size_t>(i2)] > sv[static_cast<size_t>(arg)]) arg = i2;
            }
            if (arg != sampled[static_cast<size_t>(j)]) {
              throw std::logic_error("rollout/teacher-forced logits diverged");
            }
          }
          std::vector<double> onehot(static_cast<size_t>(g.vocab_size()), 0.0);
          onehot[static_cast<size_t>(sampled[static_cast<size_t>(j)])] = 1.0;
          Tensor hard = tape.constant({1, g.vocab_size()}, std::move(onehot));
          st_rows.push_back(tape.straight_through(hard, soft));
        }
        Tensor dist = tape.concat_rows(st_rows);
        Tensor p_valid = clf.forward_dist(tape, dist);
        Tensor sample_loss = tape.sub(tape.constant({1, 1}, {1.0}), p_valid);
        l_valid += sample_loss.scalar();
        mean_p_valid += p_valid.scalar();
        tape.backward(sample_loss, lambda2 / static_cast<double>(cfg.rollout_batch));
      }
      l_valid /= static_cast<double>(cfg.rollout_batch);
      mean_p_valid /= static_cast<double>(cfg.rollout_batch);
    }

    // (c) closed-form gradients of lambda_i = exp(-s_i):
    // d/ds (exp(-s) L + s) = 1 - exp(-s) L.
    if (!cfg.fix_loss_weights) {
      weights.s1.grad[0] += 1.0 - lambda1 * nll.loss;
      weights.s2.grad[0] += 1.0 - lambda2 * l_valid;
    }
    opt.step(cfg.grad_clip);

    report.step_l_llm.push_back(nll.loss);
    report.step_l_valid.push_back(l_valid);
    report.step_mean_p_valid.push_back(mean_p_valid);
    append_metrics(cfg.metrics_path, step + 1, nll.loss, l_valid, lambda1, lambda2,
                   mean_p_valid);
  }
  report.lambda1_final = cfg.fix_loss_weights ? 1.0 : weights.lambda1();
  report.lambda2_final = cfg.disable_validity_loss ? 0.0 : weights.lambda2();
  clf.set_frozen(was_frozen);
  return report;
}

}  // namespace csyn
