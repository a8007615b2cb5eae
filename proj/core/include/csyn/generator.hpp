#pragma once

#include <memory>
#include <string>
#include <vector>

#include "csyn/encoding.hpp"
#include "csyn/tensor.hpp"

namespace csyn {

struct SequenceTooLong : std::runtime_error {
  explicit SequenceTooLong(const std::string& what) : std::runtime_error(what) {}
};

struct GeneratorConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_seq = kMaxSequenceLength;
  double init_std = 0.02;
};

// Decoder-only autoregressive model over the closed vocabulary: learned token
// and position embeddings, pre-layer-norm blocks with causal multi-head
// attention and a gelu MLP, and a zero-initialized output projection (so the
// untrained model is exactly uniform).
class Generator {
 public:
  Generator(GeneratorConfig cfg, uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  int64_t num_parameters() const;

  // Full-sequence causal forward. Row t of the result holds the pre-softmax
  // scores for position t+1. Throws SequenceTooLong past max_seq.
  Tensor forward(Tape& tape, const TokenSequence& tokens);

  // Value-only logits for the whole sequence (no tape, same arithmetic).
  std::vector<std::vector<double>> forward_logits(const TokenSequence& tokens);

 private:
  friend class IncrementalDecoder;
  struct Block {
    Parameter ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln2_g, ln2_b, w1, b1, w2, b2;
  };
  GeneratorConfig cfg_;
  int vocab_size_;
  Parameter wte_, wpe_;
  std::vector<Block> blocks_;
  Parameter lnf_g_, lnf_b_, wout_, bout_;
};

// KV-cached single-position decoder for sampling and rollouts. Produces
// logits bit-identical to Generator::forward row by row.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const Generator& g);

  // Appends `token` and returns the logits row scoring the next position.
  // Throws SequenceTooLong once max_seq positions have been consumed.
  std::vector<double> feed(int token);
  int length() const { return length_; }

 private:
  const Generator& g_;
  int length_ = 0;
  // Per layer: cached keys and values, one d_model row per position.
  std::vector<std::vector<double>> k_cache_, v_cache_;
};

struct DecodeParams {
  double temperature = 1.0;
  int top_k = 40;
  double top_p = 0.95;
  int max_len = kMaxSequenceLength;
  uint64_t seed = 0;
};

// Ancestral sampling with temperature, then top-k, then nucleus filtering.
// Returns the generated continuation (EOS included when emitted); the prompt
// is not repeated. Deterministic in (weights, prompt, params.seed).
TokenSequence sample(const Generator& g, const TokenSequence& prompt, const DecodeParams& params);
// Same, drawing from a caller-managed stream.
TokenSequence sample(const Generator& g, const TokenSequence& prompt, const DecodeParams& params,
                     Rng& rng);

// One filtered draw from a logits row (temperature -> top_k -> top_p ->
// renormalize -> sample). Exposed for sampler tests.
int sample_from_logits(const std::vector<double>& logits, const DecodeParams& params, Rng& rng);

}  // namespace csyn
