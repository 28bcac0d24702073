#include "tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "errors.h"

namespace melvae {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EMat>;
using MutMap = Eigen::Map<EMat>;

size_t shapeNumel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DataError("tensor: non-positive dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

void ensureGrad(const Tensor& t) {
  if (t->grad.size() != t->values.size()) t->grad.assign(t->values.size(), 0.0);
}

bool sameShape(const TensorData& a, const TensorData& b) { return a.shape == b.shape; }

// Probabilities are clamped this far away from 0 and 1 inside the BCE logs.
constexpr double BCE_EPS = 1e-12;

}  // namespace

std::string shapeString(const TensorData& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

Tensor makeTensor(std::vector<int> shape, bool requiresGrad) {
  auto t = std::make_shared<TensorData>();
  size_t n = shapeNumel(shape);
  t->shape = std::move(shape);
  t->values.assign(n, 0.0);
  t->grad.assign(n, 0.0);
  t->requires_grad = requiresGrad;
  return t;
}

Tensor makeTensor(std::vector<int> shape, std::vector<double> values, bool requiresGrad) {
  auto t = std::make_shared<TensorData>();
  if (shapeNumel(shape) != values.size()) {
    throw DataError("tensor: shape/value count mismatch");
  }
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->grad.assign(t->values.size(), 0.0);
  t->requires_grad = requiresGrad;
  return t;
}

Tensor scalarTensor(double value) { return makeTensor({1}, std::vector<double>{value}); }

void zeroGrad(const Tensor& t) { std::fill(t->grad.begin(), t->grad.end(), 0.0); }

void initUniform(const Tensor& t, Rng& rng, int fanIn) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fanIn));
  for (double& v : t->values) v = rng.uniform(-bound, bound);
}

Tensor Graph::node(std::vector<int> shape) {
  Tensor t = makeTensor(std::move(shape));
  outputs_.push_back(t);
  return t;
}

void Graph::record(std::function<void()> adjoint) { ops_.push_back(std::move(adjoint)); }

void Graph::checkFinite(const Tensor& t, const char* op) const {
  if (!finite_checks_) return;
  for (double v : t->values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output " + shapeString(*t));
    }
  }
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    throw DataError("matmul: incompatible shapes " + shapeString(*a) + " x " + shapeString(*b));
  }
  ensureGrad(a);
  ensureGrad(b);
  int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  Tensor out = node({m, n});
  ConstMap A(a->values.data(), m, k);
  ConstMap B(b->values.data(), k, n);
  MutMap C(out->values.data(), m, n);
  C.noalias() = A * B;
  checkFinite(out, "matmul");
  record([a, b, out, m, k, n] {
    ConstMap A2(a->values.data(), m, k);
    ConstMap B2(b->values.data(), k, n);
    ConstMap dC(out->grad.data(), m, n);
    MutMap dA(a->grad.data(), m, k);
    MutMap dB(b->grad.data(), k, n);
    dA.noalias() += dC * B2.transpose();
    dB.noalias() += A2.transpose() * dC;
  });
  return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  if (!sameShape(*a, *b)) {
    throw DataError("add: shape mismatch " + shapeString(*a) + " vs " + shapeString(*b));
  }
  ensureGrad(a);
  ensureGrad(b);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] + b->values[i];
  checkFinite(out, "add");
  record([a, b, out] {
    for (size_t i = 0; i < out->numel(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] += out->grad[i];
    }
  });
  return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  if (!sameShape(*a, *b)) {
    throw DataError("sub: shape mismatch " + shapeString(*a) + " vs " + shapeString(*b));
  }
  ensureGrad(a);
  ensureGrad(b);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] - b->values[i];
  checkFinite(out, "sub");
  record([a, b, out] {
    for (size_t i = 0; i < out->numel(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] -= out->grad[i];
    }
  });
  return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  if (!sameShape(*a, *b)) {
    throw DataError("mul: shape mismatch " + shapeString(*a) + " vs " + shapeString(*b));
  }
  ensureGrad(a);
  ensureGrad(b);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] * b->values[i];
  checkFinite(out, "mul");
  record([a, b, out] {
    for (size_t i = 0; i < out->numel(); ++i) {
      a->grad[i] += out->grad[i] * b->values[i];
      b->grad[i] += out->grad[i] * a->values[i];
    }
  });
  return out;
}

Tensor Graph::scale(const Tensor& a, double s) {
  ensureGrad(a);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] * s;
  checkFinite(out, "scale");
  record([a, out, s] {
    for (size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i] * s;
  });
  return out;
}

Tensor Graph::sigmoid(const Tensor& a) {
  ensureGrad(a);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) {
    double x = a->values[i];
    // Branch avoids overflow in exp for large |x|.
    out->values[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
  }
  checkFinite(out, "sigmoid");
  record([a, out] {
    for (size_t i = 0; i < out->numel(); ++i) {
      double y = out->values[i];
      a->grad[i] += out->grad[i] * y * (1.0 - y);
    }
  });
  return out;
}

Tensor Graph::tanh(const Tensor& a) {
  ensureGrad(a);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) out->values[i] = std::tanh(a->values[i]);
  checkFinite(out, "tanh");
  record([a, out] {
    for (size_t i = 0; i < out->numel(); ++i) {
      double y = out->values[i];
      a->grad[i] += out->grad[i] * (1.0 - y * y);
    }
  });
  return out;
}

Tensor Graph::exp(const Tensor& a) {
  ensureGrad(a);
  Tensor out = node(a->shape);
  for (size_t i = 0; i < out->numel(); ++i) out->values[i] = std::exp(a->values[i]);
  checkFinite(out, "exp");
  record([a, out] {
    for (size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i] * out->values[i];
  });
  return out;
}

Tensor Graph::addRowBias(const Tensor& a, const Tensor& bias) {
  if (a->shape.size() != 2 || bias->numel() != static_cast<size_t>(a->shape[1])) {
    throw DataError("addRowBias: shape mismatch " + shapeString(*a) + " vs " +
                    shapeString(*bias));
  }
  ensureGrad(a);
  ensureGrad(bias);
  int m = a->shape[0], n = a->shape[1];
  Tensor out = node(a->shape);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out->values[static_cast<size_t>(i * n + j)] =
          a->values[static_cast<size_t>(i * n + j)] + bias->values[static_cast<size_t>(j)];
    }
  }
  checkFinite(out, "addRowBias");
  record([a, bias, out, m, n] {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double g = out->grad[static_cast<size_t>(i * n + j)];
        a->grad[static_cast<size_t>(i * n + j)] += g;
        bias->grad[static_cast<size_t>(j)] += g;
      }
    }
  });
  return out;
}

Tensor Graph::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DataError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DataError("concat: axis must be 0 or 1");
  int m0 = parts[0]->rows(), n0 = parts[0]->cols();
  int total = 0;
  for (const Tensor& p : parts) {
    ensureGrad(p);
    if (axis == 0 && p->cols() != n0) {
      throw DataError("concat: column mismatch " + shapeString(*parts[0]) + " vs " +
                      shapeString(*p));
    }
    if (axis == 1 && p->rows() != m0) {
      throw DataError("concat: row mismatch " + shapeString(*parts[0]) + " vs " + shapeString(*p));
    }
    total += axis == 0 ? p->rows() : p->cols();
  }
  Tensor out = axis == 0 ? node({total, n0}) : node({m0, total});
  int offset = 0;
  for (const Tensor& p : parts) {
    int pm = p->rows(), pn = p->cols();
    for (int i = 0; i < pm; ++i) {
      for (int j = 0; j < pn; ++j) {
        size_t dst = axis == 0 ? static_cast<size_t>((offset + i) * n0 + j)
                               : static_cast<size_t>(i * total + offset + j);
        out->values[dst] = p->values[static_cast<size_t>(i * pn + j)];
      }
    }
    offset += axis == 0 ? pm : pn;
  }
  checkFinite(out, "concat");
  record([parts, out, axis, total, n0] {
    int offset2 = 0;
    for (const Tensor& p : parts) {
      int pm = p->rows(), pn = p->cols();
      for (int i = 0; i < pm; ++i) {
        for (int j = 0; j < pn; ++j) {
          size_t src = axis == 0 ? static_cast<size_t>((offset2 + i) * n0 + j)
                                 : static_cast<size_t>(i * total + offset2 + j);
          p->grad[static_cast<size_t>(i * pn + j)] += out->grad[src];
        }
      }
      offset2 += axis == 0 ? pm : pn;
    }
  });
  return out;
}

Tensor Graph::slice(const Tensor& a, int axis, int start, int length) {
  if (axis != 0 && axis != 1) throw DataError("slice: axis must be 0 or 1");
  int m = a->rows(), n = a->cols();
  int limit = axis == 0 ? m : n;
  if (start < 0 || length < 1 || start + length > limit) {
    throw DataError("slice: range [" + std::to_string(start) + "," +
                    std::to_string(start + length) + ") out of bounds for " + shapeString(*a));
  }
  ensureGrad(a);
  Tensor out = axis == 0 ? node({length, n}) : node({m, length});
  int om = out->rows(), on = out->cols();
  for (int i = 0; i < om; ++i) {
    for (int j = 0; j < on; ++j) {
      size_t src = axis == 0 ? static_cast<size_t>((start + i) * n + j)
                             : static_cast<size_t>(i * n + start + j);
      out->values[static_cast<size_t>(i * on + j)] = a->values[src];
    }
  }
  checkFinite(out, "slice");
  record([a, out, axis, start, n, om, on] {
    for (int i = 0; i < om; ++i) {
      for (int j = 0; j < on; ++j) {
        size_t dst = axis == 0 ? static_cast<size_t>((start + i) * n + j)
                               : static_cast<size_t>(i * n + start + j);
        a->grad[dst] += out->grad[static_cast<size_t>(i * on + j)];
      }
    }
  });
  return out;
}

Tensor Graph::sum(const Tensor& a) {
  ensureGrad(a);
  Tensor out = node({1});
  long double acc = 0.0L;
  for (double v : a->values) acc += v;
  out->values[0] = static_cast<double>(acc);
  checkFinite(out, "sum");
  record([a, out] {
    for (size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[0];
  });
  return out;
}

Tensor Graph::mean(const Tensor& a) {
  ensureGrad(a);
  Tensor out = node({1});
  long double acc = 0.0L;
  for (double v : a->values) acc += v;
  double inv = 1.0 / static_cast<double>(a->numel());
  out->values[0] = static_cast<double>(acc * inv);
  checkFinite(out, "mean");
  record([a, out, inv] {
    for (size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[0] * inv;
  });
  return out;
}

Tensor Graph::bceMean(const Tensor& probs, const Tensor& targets) {
  if (!sameShape(*probs, *targets)) {
    throw DataError("bce: shape mismatch " + shapeString(*probs) + " vs " + shapeString(*targets));
  }
  ensureGrad(probs);
  int batch = probs->rows();
  double invBatch = 1.0 / static_cast<double>(batch);
  long double acc = 0.0L;
  for (size_t i = 0; i < probs->numel(); ++i) {
    double p = probs->values[i];
    // A saturated sigmoid legitimately rounds to exactly 0 or 1 in doubles;
    // anything beyond [0,1] is a real contract violation.
    if (p < 0.0 || p > 1.0) throw DataError("bce: probability outside [0,1]");
    double pc = std::clamp(p, BCE_EPS, 1.0 - BCE_EPS);
    double t = targets->values[i];
    acc -= static_cast<long double>(t * std::log(pc) + (1.0 - t) * std::log1p(-pc));
  }
  Tensor out = node({1});
  out->values[0] = static_cast<double>(acc * invBatch);
  checkFinite(out, "bce");
  record([probs, targets, out, invBatch] {
    for (size_t i = 0; i < probs->numel(); ++i) {
      double pc = std::clamp(probs->values[i], BCE_EPS, 1.0 - BCE_EPS);
      double t = targets->values[i];
      probs->grad[i] += out->grad[0] * invBatch * ((1.0 - t) / (1.0 - pc) - t / pc);
    }
  });
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (loss->numel() != 1) {
    throw DataError("backward: loss must be scalar, got " + shapeString(*loss));
  }
  // Graph-owned intermediates restart from zero each pass; leaves (inputs and
  // parameters) keep accumulating across passes.
  for (const Tensor& t : outputs_) std::fill(t->grad.begin(), t->grad.end(), 0.0);
  ensureGrad(loss);
  loss->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  if (finite_checks_) {
    for (const Tensor& t : outputs_) {
      for (double g : t->grad) {
        if (!std::isfinite(g)) throw NumericError("backward: non-finite gradient");
      }
    }
  }
}

GruParams makeGruParams(int inputDim, int hiddenDim, Rng& rng) {
  GruParams p;
  int fanIn = inputDim + hiddenDim;
  for (Tensor* w : {&p.w_r, &p.w_u, &p.w_h}) {
    *w = makeTensor({fanIn, hiddenDim}, true);
    initUniform(*w, rng, fanIn);
  }
  // Biases start at zero; only the weights draw from the seeded uniform.
  for (Tensor* b : {&p.b_r, &p.b_u, &p.b_h}) *b = makeTensor({hiddenDim}, true);
  return p;
}

std::vector<Tensor> gruParamList(const GruParams& p) {
  return {p.w_r, p.b_r, p.w_u, p.b_u, p.w_h, p.b_h};
}

Tensor gruCell(Graph& g, const Tensor& x, const Tensor& hPrev, const GruParams& params) {
  Tensor xh = g.concat({x, hPrev}, 1);
  Tensor r = g.sigmoid(g.addRowBias(g.matmul(xh, params.w_r), params.b_r));
  Tensor u = g.sigmoid(g.addRowBias(g.matmul(xh, params.w_u), params.b_u));
  Tensor xrh = g.concat({x, g.mul(r, hPrev)}, 1);
  Tensor cand = g.tanh(g.addRowBias(g.matmul(xrh, params.w_h), params.b_h));
  return g.add(g.sub(hPrev, g.mul(u, hPrev)), g.mul(u, cand));
}

std::vector<Tensor> bgru(Graph& g, const std::vector<Tensor>& sequence, const GruParams& fwd,
                         const GruParams& bwd) {
  if (sequence.empty()) throw DataError("bgru: empty sequence");
  int batch = sequence[0]->rows();
  int hidden = fwd.b_r->shape[0];
  size_t steps = sequence.size();
  std::vector<Tensor> forward(steps), backward(steps);
  Tensor h = makeTensor({batch, hidden});
  for (size_t t = 0; t < steps; ++t) {
    h = gruCell(g, sequence[t], h, fwd);
    forward[t] = h;
  }
  h = makeTensor({batch, hidden});
  for (size_t t = steps; t-- > 0;) {
    h = gruCell(g, sequence[t], h, bwd);
    backward[t] = h;
  }
  std::vector<Tensor> out(steps);
  for (size_t t = 0; t < steps; ++t) out[t] = g.concat({forward[t], backward[t]}, 1);
  return out;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params) : params_(std::move(params)) {
  for (const Tensor& p : params_) {
    ensureGrad(p);
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void AdamOptimizer::zeroGrad() {
  for (const Tensor& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

double AdamOptimizer::clipGradients(double maxNorm) {
  long double sq = 0.0L;
  for (const Tensor& p : params_) {
    for (double g : p->grad) sq += static_cast<long double>(g) * g;
  }
  double norm = std::sqrt(static_cast<double>(sq));
  if (norm > maxNorm && norm > 0.0) {
    double factor = maxNorm / norm;
    for (const Tensor& p : params_) {
      for (double& g : p->grad) g *= factor;
    }
  }
  return norm;
}

void AdamOptimizer::step(double lr) {
  constexpr double BETA1 = 0.9, BETA2 = 0.999, EPS = 1e-8;
  ++t_;
  double c1 = 1.0 - std::pow(BETA1, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(BETA2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    TensorData& p = *params_[k];
    for (size_t i = 0; i < p.numel(); ++i) {
      double g = p.grad[i];
      m_[k][i] = BETA1 * m_[k][i] + (1.0 - BETA1) * g;
      v_[k][i] = BETA2 * v_[k][i] + (1.0 - BETA2) * g * g;
      double mHat = m_[k][i] / c1;
      double vHat = v_[k][i] / c2;
      p.values[i] -= lr * mHat / (std::sqrt(vHat) + EPS);
    }
  }
}

void AdamOptimizer::resetMoments() {
  for (auto& m : m_) std::fill(m.begin(), m.end(), 0.0);
  for (auto& v : v_) std::fill(v.begin(), v.end(), 0.0);
  t_ = 0;
}

// --- checkpoint container ---------------------------------------------------

namespace {

constexpr char MAGIC[4] = {'M', 'V', 'C', 'K'};
constexpr uint32_t CKPT_VERSION = 1;

void putU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void putU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class CkptReader {
 public:
  CkptReader(const std::string& bytes, size_t start) : bytes_(bytes), pos_(start) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<size_t>(i)]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<size_t>(i)]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(double* dst, size_t count) {
    need(count * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string checkpointBytes(const Checkpoint& ckpt) {
  std::string out(MAGIC, 4);
  putU32(out, CKPT_VERSION);
  putU32(out, static_cast<uint32_t>(ckpt.config.size()));
  out += ckpt.config;
  putU32(out, static_cast<uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, tensor] : ckpt.arrays) {
    putU32(out, static_cast<uint32_t>(name.size()));
    out += name;
    putU32(out, static_cast<uint32_t>(tensor->shape.size()));
    for (int d : tensor->shape) putU32(out, static_cast<uint32_t>(d));
    putU64(out, tensor->numel());
    size_t at = out.size();
    out.resize(at + tensor->numel() * sizeof(double));
    std::memcpy(out.data() + at, tensor->values.data(), tensor->numel() * sizeof(double));
  }
  return out;
}

Checkpoint checkpointFromBytes(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), MAGIC, 4) != 0) {
    throw DataError("checkpoint: bad magic");
  }
  CkptReader r(bytes, 4);
  uint32_t version = r.u32();
  if (version != CKPT_VERSION) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config = r.str(r.u32());
  uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    uint32_t ndim = r.u32();
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(r.u32()));
    uint64_t numel = r.u64();
    Tensor t = makeTensor(shape);
    if (t->numel() != numel) throw DataError("checkpoint: shape/count mismatch in " + name);
    r.doubles(t->values.data(), numel);
    ckpt.arrays.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

void saveCheckpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  std::string bytes = checkpointBytes(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint loadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpointFromBytes(buf.str());
}

}  // namespace melvae
