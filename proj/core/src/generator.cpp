#include "csyn/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csyn {

namespace {

void init_normal(Parameter& p, Rng& rng, double std) {
  for (auto& v : p.value) v = rng.next_normal() * std;
}

void init_const(Parameter& p, double c) { std::fill(p.value.begin(), p.value.end(), c); }

// Row kernels shared (by construction, not by code) with the tape ops in
// tensor.cpp: identical loop order keeps the incremental decoder bit-equal
// to the full forward.
void layer_norm_row(const double* x, int n, const double* gain, const double* bias,
                    double eps, double* out) {
  double mean = 0.0;
  for (int j = 0; j < n; ++j) mean += x[j];
  mean /= n;
  double var = 0.0;
  for (int j = 0; j < n; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= n;
  const double is = 1.0 / std::sqrt(var + eps);
  for (int j = 0; j < n; ++j) out[j] = gain[j] * ((x[j] - mean) * is) + bias[j];
}

// y += x^T W, mirroring matmul_acc's p-outer / j-inner order and zero skip.
void matvec_acc(const double* x, const double* w, int k, int n, double* y) {
  for (int p = 0; p < k; ++p) {
    const double xv = x[p];
    if (xv == 0.0) continue;
    const double* wrow = w + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) y[j] += xv * wrow[j];
  }
}

double gelu_scalar(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double a = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(c * (x + a * x * x * x)));
}

}  // namespace

Generator::Generator(GeneratorConfig cfg, uint64_t seed)
    : cfg_(cfg), vocab_size_(Vocabulary::instance().size()) {
  const int d = cfg_.d_model;
  const int v = vocab_size_;
  Rng rng(seed);
  wte_ = Parameter("wte", {v, d});
  wpe_ = Parameter("wpe", {cfg_.max_seq, d});
  init_normal(wte_, rng, cfg_.init_std);
  init_normal(wpe_, rng, cfg_.init_std);
  blocks_.resize(static_cast<size_t>(cfg_.n_layers));
  for (int i = 0; i < cfg_.n_layers; ++i) {
    Block& b = blocks_[static_cast<size_t>(i)];
    const std::string pre = "block" + std::to_string(i) + ".";
    b.ln1_g = Parameter(pre + "ln1.g", {d});
    b.ln1_b = Parameter(pre + "ln1.b", {d});
    b.wq = Parameter(pre + "wq", {d, d});
    b.bq = Parameter(pre + "bq", {d});
    b.wk = Parameter(pre + "wk", {d, d});
    b.bk = Parameter(pre + "bk", {d});
    b.wv = Parameter(pre + "wv", {d, d});
    b.bv = Parameter(pre + "bv", {d});
    b.wo = Parameter(pre + "wo", {d, d});
    b.bo = Parameter(pre + "bo", {d});
    b.ln2_g = Parameter(pre + "ln2.g", {d});
    b.ln2_b = Parameter(pre + "ln2.b", {d});
    b.w1 = Parameter(pre + "w1", {d, 4 * d});
    b.b1 = Parameter(pre + "b1", {4 * d});
    b.w2 = Parameter(pre + "w2", {4 * d, d});
    b.b2 = Parameter(pre + "b2", {d});
    init_const(b.ln1_g, 1.0);
    init_const(b.ln2_g, 1.0);
    init_normal(b.wq, rng, cfg_.init_std);
    init_normal(b.wk, rng, cfg_.init_std);
    init_normal(b.wv, rng, cfg_.init_std);
    init_normal(b.wo, rng, cfg_.init_std);
    init_normal(b.w1, rng, cfg_.init_std);
    init_normal(b.w2, rng, cfg_.init_std);
  }
  lnf_g_ = Parameter("lnf.g", {d});
  lnf_b_ = Parameter("lnf.b", {d});
  init_const(lnf_g_, 1.0);
  // Zero output projection: softmax of the initial logits is exactly uniform.
  wout_ = Parameter("wout", {d, v});
  bout_ = Parameter("bout", {v});
}

std::vector<Parameter*> Generator::parameters() {
  std::vector<Parameter*> out{&wte_, &wpe_};
  for (auto& b : blocks_) {
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo,
                         &b.bo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&lnf_g_);
  out.push_back(&lnf_b_);
  out.push_back(&wout_);
  out.push_back(&bout_);
  return out;
}

std::vector<const Parameter*> Generator::parameters() const {
  auto mut = const_cast<Generator*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

int64_t Generator::num_parameters() const {
  int64_t n = 0;
  for (const Parameter* p : parameters()) n += p->size();
  return n;
}

Tensor Generator::forward(Tape& tape, const TokenSequence& tokens) {
  const int t_len = static_cast<int>(tokens.size());
  if (t_len > cfg_.max_seq) {
    throw SequenceTooLong("sequence of length " + std::to_string(t_len) + " exceeds " +
                          std::to_string(cfg_.max_seq));
  }
  if (t_len == 0) throw ShapeMismatch("forward on empty sequence");
  const int d = cfg_.d_model;
  const int hd = d / cfg_.n_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor wte = tape.param(wte_);
  Tensor wpe = tape.param(wpe_);
  Tensor x = tape.add(tape.embedding_lookup(wte, tokens), tape.slice_rows(wpe, 0, t_len));

  // Additive causal mask: 0 on and below the diagonal, -1e30 above. The
  // masked terms exponentiate to exactly zero inside softmax.
  std::vector<double> mask(static_cast<size_t>(t_len) * t_len, 0.0);
  for (int i = 0; i < t_len; ++i) {
    for (int j = i + 1; j < t_len; ++j) mask[static_cast<size_t>(i) * t_len + j] = -1e30;
  }
  Tensor mask_t = tape.constant({t_len, t_len}, std::move(mask));

  for (auto& blk : blocks_) {
    Tensor xn = tape.layer_norm_rows(x, tape.param(blk.ln1_g), tape.param(blk.ln1_b));
    Tensor q = tape.add_rowvec(tape.matmul(xn, tape.param(blk.wq)), tape.param(blk.bq));
    Tensor k = tape.add_rowvec(tape.matmul(xn, tape.param(blk.wk)), tape.param(blk.bk));
    Tensor v = tape.add_rowvec(tape.matmul(xn, tape.param(blk.wv)), tape.param(blk.bv));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg_.n_heads));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Tensor qh = tape.slice_cols(q, h * hd, (h + 1) * hd);
      Tensor kh = tape.slice_cols(k, h * hd, (h + 1) * hd);
      Tensor vh = tape.slice_cols(v, h * hd, (h + 1) * hd);
      Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_hd);
      Tensor attn = tape.softmax_rows(tape.add(scores, mask_t));
      heads.push_back(tape.matmul(attn, vh));
    }
    Tensor ctx = tape.concat_cols(heads);
    Tensor attn_out = tape.add_rowvec(tape.matmul(ctx, tape.param(blk.wo)), tape.param(blk.bo));
    x = tape.add(x, attn_out);

    Tensor xm = tape.layer_norm_rows(x, tape.param(blk.ln2_g), tape.param(blk.ln2_b));
    Tensor h1 = tape.gelu(tape.add_rowvec(tape.matmul(xm, tape.param(blk.w1)), tape.param(blk.b1)));
    Tensor mlp = tape.add_rowvec(tape.matmul(h1, tape.param(blk.w2)), tape.param(blk.b2));
    x = tape.add(x, mlp);
  }
  Tensor xf = tape.layer_norm_rows(x, tape.param(lnf_g_), tape.param(lnf_b_));
  return tape.add_rowvec(tape.matmul(xf, tape.param(wout_)), tape.param(bout_));
}

std::vector<std::vector<double>> Generator::forward_logits(const TokenSequence& tokens) {
  IncrementalDecoder dec(*this);
  std::vector<std::vector<double>> rows;
  rows.reserve(tokens.size());
  for (int tok : tokens) rows.push_back(dec.feed(tok));
  return rows;
}

IncrementalDecoder::IncrementalDecoder(const Generator& g)
    : g_(g),
      k_cache_(static_cast<size_t>(g.cfg_.n_layers)),
      v_cache_(static_cast<size_t>(g.cfg_.n_layers)) {}

std::vector<double> IncrementalDecoder::feed(int token) {
  const auto& cfg = g_.cfg_;
  if (length_ >= cfg.max_seq) {
    throw SequenceTooLong("decoder already holds " + std::to_string(length_) + " positions");
  }
  const int d = cfg.d_model;
  const int hd = d / cfg.n_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  const int pos = length_;

  std::vector<double> x(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) {
    x[static_cast<size_t>(j)] = g_.wte_.value[static_cast<size_t>(token) * d + j] +
                                g_.wpe_.value[static_cast<size_t>(pos) * d + j];
  }

  std::vector<double> xn(static_cast<size_t>(d));
  std::vector<double> q(static_cast<size_t>(d)), k(static_cast<size_t>(d)),
      v(static_cast<size_t>(d));
  std::vector<double> ctx(static_cast<size_t>(d));
  std::vector<double> scores;
  std::vector<double> h1(static_cast<size_t>(4 * d));
  std::vector<double> tmp(static_cast<size_t>(d));

  for (int li = 0; li < cfg.n_layers; ++li) {
    const auto& blk = g_.blocks_[static_cast<size_t>(li)];
    layer_norm_row(x.data(), d, blk.ln1_g.value.data(), blk.ln1_b.value.data(), 1e-5, xn.data());
    // The tape path computes (x W + b) via add_rowvec(matmul(...)), i.e.
    // products accumulate onto 0 and the bias lands last; replicate that.
    for (int j = 0; j < d; ++j) {
      tmp[static_cast<size_t>(j)] = 0.0;
    }
    matvec_acc(xn.data(), blk.wq.value.data(), d, d, tmp.data());
    for (int j = 0; j < d; ++j) q[static_cast<size_t>(j)] = tmp[static_cast<size_t>(j)] + blk.bq.value[static_cast<size_t>(j)];
    for (int j = 0; j < d; ++j) tmp[static_cast<size_t>(j)] = 0.0;
    matvec_acc(xn.data(), blk.wk.value.data(), d, d, tmp.data());
    for (int j = 0; j < d; ++j) k[static_cast<size_t>(j)] = tmp[static_cast<size_t>(j)] + blk.bk.value[static_cast<size_t>(j)];
    for (int j = 0; j < d; ++j) tmp[static_cast<size_t>(j)] = 0.0;
    matvec_acc(xn.data(), blk.wv.value.data(), d, d, tmp.data());
    for (int j = 0; j < d; ++j) v[static_cast<size_t>(j)] = tmp[static_cast<size_t>(j)] + blk.bv.value[static_cast<size_t>(j)];

    auto& kc = k_cache_[static_cast<size_t>(li)];
    auto& vc = v_cache_[static_cast<size_t>(li)];
    kc.insert(kc.end(), k.begin(), k.end());
    vc.insert(vc.end(), v.begin(), v.end());
    const int t_len = pos + 1;

    for (int h = 0; h < cfg.n_heads; ++h) {
      const int c0 = h * hd;
      scores.assign(static_cast<size_t>(t_len), 0.0);
      for (int j = 0; j < t_len; ++j) {
        const double* krow = kc.data() + static_cast<size_t>(j) * d + c0;
        double acc = 0.0;
        for (int p = 0; p < hd; ++p) acc += q[static_cast<size_t>(c0 + p)] * krow[p];
        scores[static_cast<size_t>(j)] = acc * inv_sqrt_hd;
      }
      double mx = scores[0];
      for (int j = 1; j < t_len; ++j) mx = std::max(mx, scores[static_cast<size_t>(j)]);
      double sum = 0.0;
      for (int j = 0; j < t_len; ++j) {
        scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
        sum += scores[static_cast<size_t>(j)];
      }
      const double inv = 1.0 / sum;
      for (int j = 0; j < t_len; ++j) scores[static_cast<size_t>(j)] *= inv;
      for (int p = 0; p < hd; ++p) ctx[static_cast<size_t>(c0 + p)] = 0.0;
      for (int j = 0; j < t_len; ++j) {
        const double w = scores[static_cast<size_t>(j)];
        if (w == 0.0) continue;
        const double* vrow = vc.data() + static_cast<size_t>(j) * d + c0;
        for (int p = 0; p < hd; ++p) ctx[static_cast<size_t>(c0 + p)] += w * vrow[p];
      }
    }

    for (int j = 0; j < d; ++j) tmp[static_cast<size_t>(j)] = 0.0;
    matvec_acc(ctx.data(), blk.wo.value.data(), d, d, tmp.data());
    for (int j = 0; j < d; ++j) {
      x[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)] + blk.bo.value[static_cast<size_t>(j)];
    }

    layer_norm_row(x.data(), d, blk.ln2_g.value.data(), blk.ln2_b.value.data(), 1e-5, xn.data());
    std::fill(h1.begin(), h1.end(), 0.0);
    matvec_acc(xn.data(), blk.w1.value.data(), d, 4 * d, h1.data());
    for (int j = 0; j < 4 * d; ++j) {
      h1[static_cast<size_t>(j)] = gelu_scalar(h1[static_cast<size_t>(j)] + blk.b1.value[static_cast<size_t>(j)]);
    }
    for (int j = 0; j < d; ++j) tmp[static_cast<size_t>(j)] = 0.0;
    matvec_acc(h1.data(), blk.w2.value.data(), 4 * d, d, tmp.data());
    for (int j = 0; j < d; ++j) {
      x[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)] + blk.b2.value[static_cast<size_t>(j)];
    }
  }

  layer_norm_row(x.data(), d, g_.lnf_g_.value.data(), g_.lnf_b_.value.data(), 1e-5, xn.data());
  std::vector<double> logits(static_cast<size_t>(g_.vocab_size_), 0.0);
  matvec_acc(xn.data(), g_.wout_.value.data(), d, g_.vocab_size_, logits.data());
  for (int j = 0; j < g_.vocab_size_; ++j) {
    logits[static_cast<size_t>(j)] += g_.bout_.value[static_cast<size_t>(j)];
  }
  ++length_;
  return logits;
}

int sample_from_logits(const std::vector<double>& logits, const DecodeParams& params, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  std::vector<double> probs(logits);
  const double inv_t = 1.0 / params.temperature;
  double mx = probs[0] * inv_t;
  for (int j = 0; j < v; ++j) {
    probs[static_cast<size_t>(j)] *= inv_t;
    mx = std::max(mx, probs[static_cast<size_t>(j)]);
  }
  double sum = 0.0;
  for (int j = 0; j < v; ++j) {
    probs[static_cast<size_t>(j)] = std::exp(probs[static_cast<size_t>(j)] - mx);
    sum += probs[static_cast<size_t>(j)];
  }
  for (auto& p : probs) p /= sum;

  std::vector<int> order(static_cast<size_t>(v));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)]) {
      return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    }
    return a < b;
  });

  const int keep_k = std::min(std::max(1, params.top_k), v);
  // Renormalize over the top-k survivors, then apply the nucleus cut on that
  // conditional distribution, keeping the token that crosses top_p.
  double k_mass = 0.0;
  for (int r = 0; r < keep_k; ++r) k_mass += probs[static_cast<size_t>(order[static_cast<size_t>(r)])];
  int keep = keep_k;
  double cum = 0.0;
  for (int r = 0; r < keep_k; ++r) {
    cum += probs[static_cast<size_t>(order[static_cast<size_t>(r)])] / k_mass;
    if (cum >= params.top_p) {
      keep = r + 1;
      break;
    }
  }
  double mass = 0.0;
  for (int r = 0; r < keep; ++r) mass += probs[static_cast<size_t>(order[static_cast<size_t>(r)])];
  const double u = rng.next_double() * mass;
  double acc = 0.0;
  for (int r = 0; r < keep; ++r) {
    acc += probs[static_cast<size_t>(order[static_cast<size_t>(r)])];
    if (u < acc) return order[static_cast<size_t>(r)];
  }
  return order[static_cast<size_t>(keep - 1)];
}

TokenSequence sample(const Generator& g, const TokenSequence& prompt, const DecodeParams& params,
                     Rng& rng) {
  IncrementalDecoder dec(g);
  std::vector<double> logits;
  for (size_t i = 0; i < prompt.size(); ++i) logits = dec.feed(prompt[i]);
  TokenSequence out;
  const int eos = Vocabulary::instance().eos();
  const int cap = std::min(params.max_len, g.config().max_seq);
  while (static_cast<int>(prompt.size() + out.size()) < cap) {
    const int tok = sample_from_logits(logits, params, rng);
    out.push_back(tok);
    if (tok == eos) break;
    if (static_cast<int>(prompt.size() + out.size()) >= cap) break;
    logits = dec.feed(tok);
  }
  return out;
}

TokenSequence sample(const Generator& g, const TokenSequence& prompt, const DecodeParams& params) {
  Rng rng(params.seed);
  return sample(g, prompt, params, rng);
}

}  // namespace csyn
