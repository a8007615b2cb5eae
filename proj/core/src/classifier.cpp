#include "csyn/classifier.hpp"

#include <cmath>

namespace csyn {

namespace {

void init_normal(Parameter& p, Rng& rng, double std) {
  for (auto& v : p.value) v = rng.next_normal() * std;
}

void init_const(Parameter& p, double c) { std::fill(p.value.begin(), p.value.end(), c); }

}  // namespace

Classifier::Classifier(ClassifierConfig cfg, uint64_t seed)
    : cfg_(cfg), vocab_size_(Vocabulary::instance().size()) {
  Rng rng(seed);
  const int d = cfg_.d_model;
  emb_ = Parameter("clf.emb", {vocab_size_, d});
  pos_ = Parameter("clf.pos", {cfg_.max_seq, d});
  init_normal(emb_, rng, cfg_.init_std);
  init_normal(pos_, rng, cfg_.init_std);
  blocks_.resize(static_cast<size_t>(cfg_.n_layers));
  for (int i = 0; i < cfg_.n_layers; ++i) {
    Block& b = blocks_[static_cast<size_t>(i)];
    const std::string pre = "clf.block" + std::to_string(i) + ".";
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
  lnf_g_ = Parameter("clf.lnf.g", {d});
  lnf_b_ = Parameter("clf.lnf.b", {d});
  init_const(lnf_g_, 1.0);
  w1_ = Parameter("clf.head.w1", {d, cfg_.hidden});
  b1_ = Parameter("clf.head.b1", {cfg_.hidden});
  init_normal(w1_, rng, cfg_.init_std);
  // Zero output head: logit 0, p_valid exactly 0.5 before training.
  w2_ = Parameter("clf.head.w2", {cfg_.hidden, 1});
  b2_ = Parameter("clf.head.b2", {1});
}

std::vector<Parameter*> Classifier::parameters() {
  std::vector<Parameter*> out{&emb_, &pos_};
  for (auto& b : blocks_) {
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo,
                         &b.bo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  for (Parameter* p : {&lnf_g_, &lnf_b_, &w1_, &b1_, &w2_, &b2_}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Classifier::parameters() const {
  auto mut = const_cast<Classifier*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

int64_t Classifier::num_parameters() const {
  int64_t n = 0;
  for (const Parameter* p : parameters()) n += p->size();
  return n;
}

Tensor Classifier::forward_ids(Tape& tape, const TokenSequence& ids) {
  if (ids.empty()) throw ShapeMismatch("classifier input is empty");
  const int t_len = static_cast<int>(ids.size());
  std::vector<double> onehot(static_cast<size_t>(t_len) * vocab_size_, 0.0);
  for (int t = 0; t < t_len; ++t) {
    const int id = ids[static_cast<size_t>(t)];
    if (id < 0 || id >= vocab_size_) throw ShapeMismatch("token id out of range");
    onehot[static_cast<size_t>(t) * vocab_size_ + id] = 1.0;
  }
  return forward_dist(tape, tape.constant({t_len, vocab_size_}, std::move(onehot)));
}

Tensor Classifier::forward_dist(Tape& tape, Tensor dist) {
  if (dist.shape().size() != 2 || dist.cols() != vocab_size_) {
    throw ShapeMismatch("classifier expects {T, |V|} distributions");
  }
  const int t_len = dist.rows();
  if (t_len > cfg_.max_seq) {
    throw ShapeMismatch("classifier input longer than " + std::to_string(cfg_.max_seq));
  }
  const auto& dv = dist.value();
  double pad_mass = 0.0;
  for (int t = 0; t < t_len; ++t) {
    double row_sum = 0.0;
    for (int j = 0; j < vocab_size_; ++j) {
      row_sum += dv[static_cast<size_t>(t) * vocab_size_ + j];
    }
    if (std::fabs(row_sum - 1.0) > 1e-9) {
      throw NonStochasticRows("row " + std::to_string(t) + " sums to " + std::to_string(row_sum));
    }
    pad_mass += dv[static_cast<size_t>(t) * vocab_size_];  // PAD id is 0
  }
  if (pad_mass >= t_len - 1e-9) throw ShapeMismatch("classifier input is all PAD");

  const int d = cfg_.d_model;
  const int hd = d / cfg_.n_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor x = tape.add(tape.soft_embedding(dist, weight(tape, emb_)),
                      tape.slice_rows(weight(tape, pos_), 0, t_len));
  for (auto& blk : blocks_) {
    // Bidirectional pre-LN block: attention over every position.
    Tensor xn = tape.layer_norm_rows(x, weight(tape, blk.ln1_g), weight(tape, blk.ln1_b));
    Tensor q = tape.add_rowvec(tape.matmul(xn, weight(tape, blk.wq)), weight(tape, blk.bq));
    Tensor k = tape.add_rowvec(tape.matmul(xn, weight(tape, blk.wk)), weight(tape, blk.bk));
    Tensor v = tape.add_rowvec(tape.matmul(xn, weight(tape, blk.wv)), weight(tape, blk.bv));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg_.n_heads));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Tensor qh = tape.slice_cols(q, h * hd, (h + 1) * hd);
      Tensor kh = tape.slice_cols(k, h * hd, (h + 1) * hd);
      Tensor vh = tape.slice_cols(v, h * hd, (h + 1) * hd);
      Tensor attn = tape.softmax_rows(tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_hd));
      heads.push_back(tape.matmul(attn, vh));
    }
    Tensor ctx = tape.concat_cols(heads);
    x = tape.add(x, tape.add_rowvec(tape.matmul(ctx, weight(tape, blk.wo)), weight(tape, blk.bo)));
    Tensor xm = tape.layer_norm_rows(x, weight(tape, blk.ln2_g), weight(tape, blk.ln2_b));
    Tensor h1 = tape.gelu(
        tape.add_rowvec(tape.matmul(xm, weight(tape, blk.w1)), weight(tape, blk.b1)));
    x = tape.add(x, tape.add_rowvec(tape.matmul(h1, weight(tape, blk.w2)), weight(tape, blk.b2)));
  }
  x = tape.layer_norm_rows(x, weight(tape, lnf_g_), weight(tape, lnf_b_));

  // Mean-pool over non-PAD positions: weight = 1 - mass on PAD per row.
  Tensor pad_col = tape.slice_cols(dist, 0, 1);  // {T,1}
  Tensor w = tape.sub(
      tape.constant({t_len, 1}, std::vector<double>(static_cast<size_t>(t_len), 1.0)), pad_col);
  Tensor pooled_sum = tape.matmul(tape.transpose(w), x);  // {1, d}
  Tensor pooled = tape.scale_by(pooled_sum, tape.recip(tape.sum_all(w)));
  Tensor h = tape.relu(tape.add_rowvec(tape.matmul(pooled, weight(tape, w1_)), weight(tape, b1_)));
  Tensor logit = tape.add_rowvec(tape.matmul(h, weight(tape, w2_)), weight(tape, b2_));
  return tape.sigmoid(logit);
}

double Classifier::p_valid(const TokenSequence& ids) {
  Tape tape(false);
  return forward_ids(tape, ids).scalar();
}

Tensor Classifier::weight(Tape& tape, Parameter& p) {
  if (frozen_) return tape.constant(p.shape, p.value);
  return tape.param(p);
}

}  // namespace csyn
