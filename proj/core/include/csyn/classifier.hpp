#pragma once

#include <vector>

#include "csyn/encoding.hpp"
#include "csyn/tensor.hpp"

namespace csyn {

struct NonStochasticRows : std::runtime_error {
  explicit NonStochasticRows(const std::string& what) : std::runtime_error(what) {}
};

struct ClassifierConfig {
  int d_model = 64;
  int hidden = 64;
  int n_layers = 1;
  int n_heads = 4;
  int max_seq = kMaxSequenceLength;
  double init_std = 0.02;
};

// Validity scorer: a small bidirectional encoder (token + position
// embeddings, pre-layer-norm self-attention blocks) mean-pooled over non-PAD
// positions into a 2-layer MLP with a single sigmoid output. Accepts either
// token ids (as exact one-hot rows) or row-stochastic distribution matrices;
// both go through the same soft-embedding path, so an id sequence and its
// one-hot matrix give bitwise-identical probabilities. The output head
// starts at zero, making the initial prediction exactly 1/2.
class Classifier {
 public:
  Classifier(ClassifierConfig cfg, uint64_t seed);

  const ClassifierConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  int64_t num_parameters() const;

  // p_valid in (0,1) as a scalar tensor.
  Tensor forward_ids(Tape& tape, const TokenSequence& ids);
  // dist: {T, |V|} with rows summing to 1 (tolerance 1e-9).
  Tensor forward_dist(Tape& tape, Tensor dist);

  // Convenience: probability without a recording tape.
  double p_valid(const TokenSequence& ids);

  // Frozen: forwards treat the weights as constants, so no gradient is ever
  // computed or applied for them (refinement keeps the classifier fixed).
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

 private:
  struct Block {
    Parameter ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln2_g, ln2_b, w1, b1, w2, b2;
  };
  Tensor weight(Tape& tape, Parameter& p);
  ClassifierConfig cfg_;
  int vocab_size_;
  bool frozen_ = false;
  Parameter emb_, pos_;
  std::vector<Block> blocks_;
  Parameter lnf_g_, lnf_b_;
  Parameter w1_, b1_, w2_, b2_;
};

}  // namespace csyn
