#include "csyn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace csyn {

namespace {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "{";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "}";
}

// C += A * B, row-major; ikj order so the inner loop streams rows of B and C.
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;  // exact: skipping only drops additions of 0
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Parameter::Parameter(std::string name, std::vector<int> shape)
    : name(std::move(name)), shape(std::move(shape)) {
  value.assign(static_cast<size_t>(shape_size(this->shape)), 0.0);
  grad.assign(value.size(), 0.0);
}

const std::vector<int>& Tensor::shape() const { return tape_->node(*this).shape; }
int64_t Tensor::size() const { return static_cast<int64_t>(tape_->node(*this).value.size()); }
const std::vector<double>& Tensor::value() const { return tape_->node(*this).value; }
const std::vector<double>& Tensor::grad() const { return tape_->node(*this).acc_grad; }
bool Tensor::requires_grad() const { return tape_->node(*this).requires_grad; }

double Tensor::scalar() const {
  const auto& v = value();
  if (v.size() != 1) {
    throw ShapeMismatch("scalar() on tensor of size " + std::to_string(v.size()));
  }
  return v[0];
}

void Tape::check_same_tape(const Tensor& t) const {
  if (t.tape_ != this) throw std::logic_error("tensor belongs to another tape");
}

Tensor Tape::make(std::vector<int> shape, std::vector<double> value, bool requires_grad,
                  std::function<void(int)> backward_fn) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.requires_grad = recording_ && requires_grad;
  if (n.requires_grad) n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeMismatch("leaf data size does not match shape " + shape_str(shape));
  }
  Tensor t = make(std::move(shape), std::move(data), requires_grad, nullptr);
  node(t).is_leaf = true;
  if (node(t).requires_grad) node(t).acc_grad.assign(node(t).value.size(), 0.0);
  return t;
}

Tensor Tape::param(Parameter& p) {
  Tensor t = leaf(p.shape, p.value, true);
  node(t).bound = &p;
  return t;
}

void Tape::backward(Tensor loss, double seed) {
  check_same_tape(loss);
  if (loss.size() != 1) throw NonScalarLoss("backward requires a scalar loss");
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (!node(loss).requires_grad) return;  // loss independent of any leaf
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.assign(n.value.size(), 0.0);
  }
  node(loss).grad[0] = seed;
  for (int i = loss.index_; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.backward_fn) n.backward_fn(i);
  }
  for (auto& n : nodes_) {
    if (!n.is_leaf || !n.requires_grad) continue;
    for (size_t j = 0; j < n.grad.size(); ++j) n.acc_grad[j] += n.grad[j];
    if (n.bound) {
      for (size_t j = 0; j < n.grad.size(); ++j) n.bound->grad[j] += n.grad[j];
    }
  }
}

// ---- element-wise ----------------------------------------------------------

Tensor Tape::add(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("add " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.index_, ib = b.index_;
  return make(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
              [this, ia, ib](int self) {
                const auto& g = grad_of(self);
                push_grad(ia, [&](std::vector<double>& da) {
                  for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                });
                push_grad(ib, [&](std::vector<double>& db) {
                  for (size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                });
              });
}

Tensor Tape::sub(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("sub " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.index_, ib = b.index_;
  return make(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
              [this, ia, ib](int self) {
                const auto& g = grad_of(self);
                push_grad(ia, [&](std::vector<double>& da) {
                  for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                });
                push_grad(ib, [&](std::vector<double>& db) {
                  for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                });
              });
}

Tensor Tape::mul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("mul " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.index_, ib = b.index_;
  return make(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
              [this, ia, ib](int self) {
                const auto& g = grad_of(self);
                const auto& av = nodes_[static_cast<size_t>(ia)].value;
                const auto& bv2 = nodes_[static_cast<size_t>(ib)].value;
                push_grad(ia, [&](std::vector<double>& da) {
                  for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv2[i];
                });
                push_grad(ib, [&](std::vector<double>& db) {
                  for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
                });
              });
}

Tensor Tape::add_rowvec(Tensor a, Tensor v) {
  check_same_tape(a);
  check_same_tape(v);
  if (a.shape().size() != 2 || v.size() != a.cols()) {
    throw ShapeMismatch("add_rowvec " + shape_str(a.shape()) + " vs " + shape_str(v.shape()));
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> out = a.value();
  const auto& vv = v.value();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += vv[static_cast<size_t>(j)];
  }
  const int ia = a.index_, iv = v.index_;
  return make(a.shape(), std::move(out), a.requires_grad() || v.requires_grad(),
              [this, ia, iv, m, n](int self) {
                const auto& g = grad_of(self);
                push_grad(ia, [&](std::vector<double>& da) {
                  for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                });
                push_grad(iv, [&](std::vector<double>& dv) {
                  for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                      dv[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * n + j];
                    }
                  }
                });
              });
}

Tensor Tape::scale(Tensor a, double c) {
  check_same_tape(a);
  std::vector<double> out = a.value();
  for (auto& x : out) x *= c;
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia, c](int self) {
    const auto& g = grad_of(self);
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
    });
  });
}

Tensor Tape::scale_by(Tensor a, Tensor s) {
  check_same_tape(a);
  check_same_tape(s);
  if (s.size() != 1) throw ShapeMismatch("scale_by needs a scalar");
  const double sv = s.value()[0];
  std::vector<double> out = a.value();
  for (auto& x : out) x *= sv;
  const int ia = a.index_, is = s.index_;
  return make(a.shape(), std::move(out), a.requires_grad() || s.requires_grad(),
              [this, ia, is, sv](int self) {
                const auto& g = grad_of(self);
                const auto& av = nodes_[static_cast<size_t>(ia)].value;
                push_grad(ia, [&](std::vector<double>& da) {
                  for (size_t i = 0; i < g.size(); ++i) da[i] += sv * g[i];
                });
                push_grad(is, [&](std::vector<double>& ds) {
                  double acc = 0.0;
                  for (size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
                  ds[0] += acc;
                });
              });
}

Tensor Tape::recip(Tensor a) {
  check_same_tape(a);
  std::vector<double> out = a.value();
  for (auto& x : out) x = 1.0 / x;
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia](int self) {
    const auto& g = grad_of(self);
    const auto& y = nodes_[static_cast<size_t>(self)].value;
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) da[i] -= g[i] * y[i] * y[i];
    });
  });
}

Tensor Tape::exp(Tensor a) {
  check_same_tape(a);
  std::vector<double> out = a.value();
  for (auto& x : out) x = std::exp(x);
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia](int self) {
    const auto& g = grad_of(self);
    const auto& y = nodes_[static_cast<size_t>(self)].value;
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
    });
  });
}

// ---- linear algebra --------------------------------------------------------

Tensor Tape::matmul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw ShapeMismatch("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  matmul_acc(a.value().data(), b.value().data(), out.data(), m, k, n);
  const int ia = a.index_, ib = b.index_;
  return make({m, n}, std::move(out), a.requires_grad() || b.requires_grad(),
              [this, ia, ib, m, k, n](int self) {
                const auto& g = grad_of(self);
                const auto& av = nodes_[static_cast<size_t>(ia)].value;
                const auto& bv = nodes_[static_cast<size_t>(ib)].value;
                push_grad(ia, [&](std::vector<double>& da) {
                  // dA[i,p] += sum_j G[i,j] B[p,j]
                  for (int i = 0; i < m; ++i) {
                    const double* grow = g.data() + static_cast<size_t>(i) * n;
                    double* darow = da.data() + static_cast<size_t>(i) * k;
                    for (int p = 0; p < k; ++p) {
                      const double* brow = bv.data() + static_cast<size_t>(p) * n;
                      double acc = 0.0;
                      for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                      darow[p] += acc;
                    }
                  }
                });
                push_grad(ib, [&](std::vector<double>& db) {
                  // dB[p,j] += sum_i A[i,p] G[i,j]
                  for (int i = 0; i < m; ++i) {
                    const double* arow = av.data() + static_cast<size_t>(i) * k;
                    const double* grow = g.data() + static_cast<size_t>(i) * n;
                    for (int p = 0; p < k; ++p) {
                      const double apv = arow[p];
                      if (apv == 0.0) continue;
                      double* dbrow = db.data() + static_cast<size_t>(p) * n;
                      for (int j = 0; j < n; ++j) dbrow[j] += apv * grow[j];
                    }
                  }
                });
              });
}

Tensor Tape::transpose(Tensor a) {
  check_same_tape(a);
  if (a.shape().size() != 2) throw ShapeMismatch("transpose needs rank 2");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<size_t>(m) * n);
  const auto& av = a.value();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    }
  }
  const int ia = a.index_;
  return make({n, m}, std::move(out), a.requires_grad(), [this, ia, m, n](int self) {
    const auto& g = grad_of(self);
    push_grad(ia, [&](std::vector<double>& da) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          da[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
        }
      }
    });
  });
}

Tensor Tape::slice_rows(Tensor a, int r0, int r1) {
  check_same_tape(a);
  if (a.shape().size() != 2 || r0 < 0 || r1 > a.rows() || r0 >= r1) {
    throw ShapeMismatch("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                        ") of " + shape_str(a.shape()));
  }
  const int n = a.cols();
  const auto& av = a.value();
  std::vector<double> out(av.begin() + static_cast<size_t>(r0) * n,
                          av.begin() + static_cast<size_t>(r1) * n);
  const int ia = a.index_;
  return make({r1 - r0, n}, std::move(out), a.requires_grad(), [this, ia, r0, n](int self) {
    const auto& g = grad_of(self);
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) da[static_cast<size_t>(r0) * n + i] += g[i];
    });
  });
}

Tensor Tape::slice_cols(Tensor a, int c0, int c1) {
  check_same_tape(a);
  if (a.shape().size() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1) {
    throw ShapeMismatch("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                        ") of " + shape_str(a.shape()));
  }
  const int m = a.rows(), n = a.cols(), w = c1 - c0;
  const auto& av = a.value();
  std::vector<double> out(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < w; ++j) {
      out[static_cast<size_t>(i) * w + j] = av[static_cast<size_t>(i) * n + c0 + j];
    }
  }
  const int ia = a.index_;
  return make({m, w}, std::move(out), a.requires_grad(), [this, ia, m, n, c0, w](int self) {
    const auto& g = grad_of(self);
    push_grad(ia, [&](std::vector<double>& da) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) {
          da[static_cast<size_t>(i) * n + c0 + j] += g[static_cast<size_t>(i) * w + j];
        }
      }
    });
  });
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const int n = parts[0].cols();
  int m = 0;
  bool rg = false;
  std::vector<double> out;
  std::vector<int> indices, offsets;
  for (const auto& p : parts) {
    check_same_tape(p);
    if (p.shape().size() != 2 || p.cols() != n) throw ShapeMismatch("concat_rows width mismatch");
    offsets.push_back(static_cast<int>(out.size()));
    out.insert(out.end(), p.value().begin(), p.value().end());
    indices.push_back(p.index_);
    m += p.rows();
    rg = rg || p.requires_grad();
  }
  return make({m, n}, std::move(out), rg, [this, indices, offsets](int self) {
    const auto& g = grad_of(self);
    for (size_t k = 0; k < indices.size(); ++k) {
      push_grad(indices[k], [&](std::vector<double>& da) {
        const size_t off = static_cast<size_t>(offsets[k]);
        for (size_t i = 0; i < da.size(); ++i) da[i] += g[off + i];
      });
    }
  });
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const int m = parts[0].rows();
  int n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check_same_tape(p);
    if (p.shape().size() != 2 || p.rows() != m) throw ShapeMismatch("concat_cols height mismatch");
    n += p.cols();
    rg = rg || p.requires_grad();
  }
  std::vector<double> out(static_cast<size_t>(m) * n);
  std::vector<int> indices, widths, col0s;
  int c = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    const auto& pv = p.value();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < w; ++j) {
        out[static_cast<size_t>(i) * n + c + j] = pv[static_cast<size_t>(i) * w + j];
      }
    }
    indices.push_back(p.index_);
    widths.push_back(w);
    col0s.push_back(c);
    c += w;
  }
  return make({m, n}, std::move(out), rg, [this, indices, widths, col0s, m, n](int self) {
    const auto& g = grad_of(self);
    for (size_t k = 0; k < indices.size(); ++k) {
      const int w = widths[k], c0 = col0s[k];
      push_grad(indices[k], [&](std::vector<double>& da) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < w; ++j) {
            da[static_cast<size_t>(i) * w + j] += g[static_cast<size_t>(i) * n + c0 + j];
          }
        }
      });
    }
  });
}

Tensor Tape::broadcast_rows(Tensor v, int m) {
  check_same_tape(v);
  const int n = static_cast<int>(v.size());
  std::vector<double> out(static_cast<size_t>(m) * n);
  const auto& vv = v.value();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] = vv[static_cast<size_t>(j)];
  }
  const int iv = v.index_;
  return make({m, n}, std::move(out), v.requires_grad(), [this, iv, m, n](int self) {
    const auto& g = grad_of(self);
    push_grad(iv, [&](std::vector<double>& dv) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          dv[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * n + j];
        }
      }
    });
  });
}

// ---- nonlinearities --------------------------------------------------------

Tensor Tape::softmax_rows(Tensor a) {
  check_same_tape(a);
  if (a.shape().size() != 2) throw ShapeMismatch("softmax_rows needs rank 2");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out = a.value();
  for (int i = 0; i < m; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) row[j] *= inv;
  }
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia, m, n](int self) {
    const auto& g = grad_of(self);
    const auto& y = nodes_[static_cast<size_t>(self)].value;
    push_grad(ia, [&](std::vector<double>& da) {
      for (int i = 0; i < m; ++i) {
        const double* grow = g.data() + static_cast<size_t>(i) * n;
        const double* yrow = y.data() + static_cast<size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += grow[j] * yrow[j];
        double* darow = da.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) darow[j] += yrow[j] * (grow[j] - dot);
      }
    });
  });
}

Tensor Tape::log_softmax_rows(Tensor a) {
  check_same_tape(a);
  if (a.shape().size() != 2) throw ShapeMismatch("log_softmax_rows needs rank 2");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out = a.value();
  for (int i = 0; i < m; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) row[j] -= lse;
  }
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia, m, n](int self) {
    const auto& g = grad_of(self);
    const auto& y = nodes_[static_cast<size_t>(self)].value;  // log-probs
    push_grad(ia, [&](std::vector<double>& da) {
      for (int i = 0; i < m; ++i) {
        const double* grow = g.data() + static_cast<size_t>(i) * n;
        const double* yrow = y.data() + static_cast<size_t>(i) * n;
        double gsum = 0.0;
        for (int j = 0; j < n; ++j) gsum += grow[j];
        double* darow = da.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) darow[j] += grow[j] - std::exp(yrow[j]) * gsum;
      }
    });
  });
}

Tensor Tape::relu(Tensor a) {
  check_same_tape(a);
  std::vector<double> out = a.value();
  for (auto& x : out) x = x > 0.0 ? x : 0.0;
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia](int self) {
    const auto& g = grad_of(self);
    const auto& x = nodes_[static_cast<size_t>(ia)].value;
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) da[i] += x[i] > 0.0 ? g[i] : 0.0;
    });
  });
}

Tensor Tape::gelu(Tensor a) {
  check_same_tape(a);
  std::vector<double> out = a.value();
  for (auto& x : out) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia](int self) {
    const auto& g = grad_of(self);
    const auto& x = nodes_[static_cast<size_t>(ia)].value;
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) {
        const double xi = x[i];
        const double u = kGeluC * (xi + kGeluA * xi * xi * xi);
        const double t = std::tanh(u);
        const double sech2 = 1.0 - t * t;
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
        da[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * xi * sech2 * du);
      }
    });
  });
}

Tensor Tape::sigmoid(Tensor a) {
  check_same_tape(a);
  std::vector<double> out = a.value();
  for (auto& x : out) x = 1.0 / (1.0 + std::exp(-x));
  const int ia = a.index_;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia](int self) {
    const auto& g = grad_of(self);
    const auto& y = nodes_[static_cast<size_t>(self)].value;
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  });
}

Tensor Tape::layer_norm_rows(Tensor a, Tensor gain, Tensor bias, double eps) {
  check_same_tape(a);
  check_same_tape(gain);
  check_same_tape(bias);
  if (a.shape().size() != 2 || gain.size() != a.cols() || bias.size() != a.cols()) {
    throw ShapeMismatch("layer_norm_rows shapes " + shape_str(a.shape()));
  }
  const int m = a.rows(), n = a.cols();
  const auto& av = a.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  std::vector<double> out(static_cast<size_t>(m) * n);
  std::vector<double> inv_std(static_cast<size_t>(m));
  std::vector<double> xhat(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* row = av.data() + static_cast<size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat[static_cast<size_t>(i) * n + j] = xh;
      out[static_cast<size_t>(i) * n + j] = gv[static_cast<size_t>(j)] * xh + bv[static_cast<size_t>(j)];
    }
  }
  const int ia = a.index_, ig = gain.index_, ib = bias.index_;
  const bool rg = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  auto xhat_p = std::make_shared<std::vector<double>>(std::move(xhat));
  auto inv_std_p = std::make_shared<std::vector<double>>(std::move(inv_std));
  return make(a.shape(), std::move(out), rg,
              [this, ia, ig, ib, m, n, xhat_p, inv_std_p](int self) {
                const auto& g = grad_of(self);
                const auto& gv2 = nodes_[static_cast<size_t>(ig)].value;
                const auto& xh = *xhat_p;
                const auto& istd = *inv_std_p;
                push_grad(ig, [&](std::vector<double>& dgain) {
                  for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                      dgain[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * n + j] *
                                                       xh[static_cast<size_t>(i) * n + j];
                    }
                  }
                });
                push_grad(ib, [&](std::vector<double>& dbias) {
                  for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                      dbias[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * n + j];
                    }
                  }
                });
                push_grad(ia, [&](std::vector<double>& da) {
                  for (int i = 0; i < m; ++i) {
                    const double* grow = g.data() + static_cast<size_t>(i) * n;
                    const double* xrow = xh.data() + static_cast<size_t>(i) * n;
                    // dxhat = g * gain; dx derived from the normalized form.
                    double sum_dx = 0.0, sum_dx_xh = 0.0;
                    for (int j = 0; j < n; ++j) {
                      const double dxh = grow[j] * gv2[static_cast<size_t>(j)];
                      sum_dx += dxh;
                      sum_dx_xh += dxh * xrow[j];
                    }
                    const double is = istd[static_cast<size_t>(i)];
                    for (int j = 0; j < n; ++j) {
                      const double dxh = grow[j] * gv2[static_cast<size_t>(j)];
                      da[static_cast<size_t>(i) * n + j] +=
                          is * (dxh - sum_dx / n - xrow[j] * sum_dx_xh / n);
                    }
                  }
                });
              });
}

Tensor Tape::mean_all(Tensor a) {
  check_same_tape(a);
  const auto& av = a.value();
  double sum = 0.0;
  for (double x : av) sum += x;
  const double inv = 1.0 / static_cast<double>(av.size());
  const int ia = a.index_;
  return make({1}, {sum * inv}, a.requires_grad(), [this, ia, inv](int self) {
    const double g = grad_of(self)[0];
    push_grad(ia, [&](std::vector<double>& da) {
      for (auto& x : da) x += g * inv;
    });
  });
}

Tensor Tape::sum_all(Tensor a) {
  check_same_tape(a);
  const auto& av = a.value();
  double sum = 0.0;
  for (double x : av) sum += x;
  const int ia = a.index_;
  return make({1}, {sum}, a.requires_grad(), [this, ia](int self) {
    const double g = grad_of(self)[0];
    push_grad(ia, [&](std::vector<double>& da) {
      for (auto& x : da) x += g;
    });
  });
}

// ---- embeddings and losses -------------------------------------------------

Tensor Tape::embedding_lookup(Tensor table, const std::vector<int>& ids) {
  check_same_tape(table);
  if (table.shape().size() != 2) throw ShapeMismatch("embedding table must be rank 2");
  const int v = table.rows(), d = table.cols();
  const int t_len = static_cast<int>(ids.size());
  const auto& tv = table.value();
  std::vector<double> out(static_cast<size_t>(t_len) * d);
  for (int t = 0; t < t_len; ++t) {
    const int id = ids[static_cast<size_t>(t)];
    if (id < 0 || id >= v) throw ShapeMismatch("embedding id out of range");
    for (int j = 0; j < d; ++j) {
      out[static_cast<size_t>(t) * d + j] = tv[static_cast<size_t>(id) * d + j];
    }
  }
  const int it = table.index_;
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return make({t_len, d}, std::move(out), table.requires_grad(),
              [this, it, ids_copy, d](int self) {
                const auto& g = grad_of(self);
                push_grad(it, [&](std::vector<double>& dt) {
                  for (size_t t = 0; t < ids_copy->size(); ++t) {
                    const size_t id = static_cast<size_t>((*ids_copy)[t]);
                    for (int j = 0; j < d; ++j) {
                      dt[id * d + j] += g[t * d + j];
                    }
                  }
                });
              });
}

Tensor Tape::cross_entropy(Tensor logits, const std::vector<int>& targets,
                           const std::vector<uint8_t>& mask) {
  check_same_tape(logits);
  if (logits.shape().size() != 2 || targets.size() != static_cast<size_t>(logits.rows()) ||
      mask.size() != targets.size()) {
    throw ShapeMismatch("cross_entropy rows/targets/mask mismatch");
  }
  const int m = logits.rows(), n = logits.cols();
  const auto& lv = logits.value();
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
  double loss = 0.0;
  int count = 0;
  for (int i = 0; i < m; ++i) {
    const double* row = lv.data() + static_cast<size_t>(i) * n;
    double* prow = probs->data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) prow[j] *= inv;
    if (mask[static_cast<size_t>(i)]) {
      const int y = targets[static_cast<size_t>(i)];
      if (y < 0 || y >= n) throw ShapeMismatch("cross_entropy target out of range");
      loss -= std::log(prow[y]);
      ++count;
    }
  }
  if (count == 0) throw ShapeMismatch("cross_entropy with empty mask");
  loss /= count;
  const int il = logits.index_;
  auto targets_copy = std::make_shared<std::vector<int>>(targets);
  auto mask_copy = std::make_shared<std::vector<uint8_t>>(mask);
  return make({1}, {loss}, logits.requires_grad(),
              [this, il, probs, targets_copy, mask_copy, m, n, count](int self) {
                const double g = grad_of(self)[0] / count;
                push_grad(il, [&](std::vector<double>& dl) {
                  for (int i = 0; i < m; ++i) {
                    if (!(*mask_copy)[static_cast<size_t>(i)]) continue;
                    const double* prow = probs->data() + static_cast<size_t>(i) * n;
                    double* drow = dl.data() + static_cast<size_t>(i) * n;
                    const int y = (*targets_copy)[static_cast<size_t>(i)];
                    for (int j = 0; j < n; ++j) drow[j] += g * prow[j];
                    drow[y] -= g;
                  }
                });
              });
}

Tensor Tape::binary_cross_entropy(Tensor p, double label) {
  check_same_tape(p);
  if (p.size() != 1) throw ShapeMismatch("binary_cross_entropy expects a scalar probability");
  constexpr double kClamp = 1e-12;
  const double raw = p.value()[0];
  const double pc = std::clamp(raw, kClamp, 1.0 - kClamp);
  const double loss = -(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc));
  const bool clamped = raw != pc;
  const int ip = p.index_;
  return make({1}, {loss}, p.requires_grad(), [this, ip, pc, label, clamped](int self) {
    if (clamped) return;  // constant region
    const double g = grad_of(self)[0];
    push_grad(ip, [&](std::vector<double>& dp) {
      dp[0] += g * (-label / pc + (1.0 - label) / (1.0 - pc));
    });
  });
}

Tensor Tape::dropout(Tensor a, double rate, Rng& rng) {
  check_same_tape(a);
  if (rate < 0.0 || rate >= 1.0) throw ShapeMismatch("dropout rate must be in [0,1)");
  std::vector<double> out = a.value();
  auto keep = std::make_shared<std::vector<uint8_t>>(out.size(), 1);
  if (rate > 0.0) {
    const double scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < out.size(); ++i) {
      if (rng.next_double() < rate) {
        out[i] = 0.0;
        (*keep)[i] = 0;
      } else {
        out[i] *= scale;
      }
    }
  }
  const int ia = a.index_;
  const double scale = rate > 0.0 ? 1.0 / (1.0 - rate) : 1.0;
  return make(a.shape(), std::move(out), a.requires_grad(), [this, ia, keep, scale](int self) {
    const auto& g = grad_of(self);
    push_grad(ia, [&](std::vector<double>& da) {
      for (size_t i = 0; i < g.size(); ++i) {
        if ((*keep)[i]) da[i] += g[i] * scale;
      }
    });
  });
}

Tensor Tape::straight_through(Tensor hard, Tensor soft) {
  check_same_tape(hard);
  check_same_tape(soft);
  if (hard.shape() != soft.shape()) {
    throw ShapeMismatch("straight_through shapes " + shape_str(hard.shape()) + " vs " +
                        shape_str(soft.shape()));
  }
  std::vector<double> out = hard.value();
  const int is = soft.index_;
  return make(hard.shape(), std::move(out), soft.requires_grad(), [this, is](int self) {
    const auto& g = grad_of(self);
    push_grad(is, [&](std::vector<double>& ds) {
      for (size_t i = 0; i < g.size(); ++i) ds[i] += g[i];
    });
  });
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double atol) {
  if (a.size() != b.size()) throw ShapeMismatch("max_relative_error size mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = std::fabs(a[i] - b[i]);
    if (diff <= atol) continue;
    const double denom = std::max(std::fabs(a[i]), std::fabs(b[i]));
    worst = std::max(worst, diff / denom);
  }
  return worst;
}

}  // namespace csyn
