#ifndef MELVAE_TENSOR_H
#define MELVAE_TENSOR_H

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rng.h"

namespace melvae {

// Dense row-major tensor of doubles. Gradient buffers are allocated for every
// tensor touched by a Graph; requires_grad marks optimizer-owned leaves.
struct TensorData {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;

  size_t numel() const { return values.size(); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

using Tensor = std::shared_ptr<TensorData>;

Tensor makeTensor(std::vector<int> shape, bool requiresGrad = false);
Tensor makeTensor(std::vector<int> shape, std::vector<double> values, bool requiresGrad = false);
Tensor scalarTensor(double value);
void zeroGrad(const Tensor& t);
std::string shapeString(const TensorData& t);

// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void initUniform(const Tensor& t, Rng& rng, int fanIn);

// Records forward operations and replays their adjoints in exact reverse
// order. Gradients accumulate additively across fan-out and across repeated
// backward calls. A finite-value hook (on by default) rejects NaN/Inf
// activations and gradients with NumericError.
class Graph {
 public:
  explicit Graph(bool finiteChecks = true) : finite_checks_(finiteChecks) {}

  // [m,k] x [k,n] -> [m,n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);        // elementwise, same shape
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor exp(const Tensor& a);
  // [m,n] + [n] broadcast over rows.
  Tensor addRowBias(const Tensor& a, const Tensor& bias);
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  Tensor slice(const Tensor& a, int axis, int start, int length);
  Tensor sum(const Tensor& a);   // scalar
  Tensor mean(const Tensor& a);  // scalar
  // Binary cross-entropy of probabilities against 0/1 targets, summed over
  // every cell and divided by the row count ("sum over cells, mean over
  // batch"). Probabilities are clamped to [1e-12, 1-1e-12] inside the logs.
  Tensor bceMean(const Tensor& probs, const Tensor& targets);

  // Seeds d(loss)/d(loss)=1 and replays all adjoints. loss must be scalar.
  void backward(const Tensor& loss);

  size_t opCount() const { return ops_.size(); }

 private:
  Tensor node(std::vector<int> shape);
  void record(std::function<void()> adjoint);
  void checkFinite(const Tensor& t, const char* op) const;

  std::vector<std::function<void()>> ops_;
  std::vector<Tensor> outputs_;
  bool finite_checks_ = true;
};

// Gated recurrent unit parameters; the concatenated input [x, h] has
// inputDim + hiddenDim columns.
struct GruParams {
  Tensor w_r, b_r;  // reset gate
  Tensor w_u, b_u;  // update gate
  Tensor w_h, b_h;  // candidate state
};

GruParams makeGruParams(int inputDim, int hiddenDim, Rng& rng);
std::vector<Tensor> gruParamList(const GruParams& p);

// r = sig(W_r[x,h]+b_r); u = sig(W_u[x,h]+b_u);
// cand = tanh(W_h[x, r*h]+b_h); h' = (1-u)*h + u*cand.
Tensor gruCell(Graph& g, const Tensor& x, const Tensor& hPrev, const GruParams& params);

// Bidirectional pass with independent parameter sets; per-step output is
// concat(h_fwd_t, h_bwd_t), zero initial states.
std::vector<Tensor> bgru(Graph& g, const std::vector<Tensor>& sequence, const GruParams& fwd,
                         const GruParams& bwd);

// Bias-corrected ADAM (beta1 0.9, beta2 0.999, eps 1e-8). The learning rate
// is supplied per step; the schedule belongs to the caller.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params);

  void zeroGrad();
  // Global-norm gradient clip; returns the pre-clip norm.
  double clipGradients(double maxNorm = 5.0);
  void step(double lr);
  void resetMoments();

  long stepCount() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }
  // Moment buffers exposed for checkpointing (m then v, parameter order).
  std::vector<std::vector<double>>& firstMoments() { return m_; }
  std::vector<std::vector<double>>& secondMoments() { return v_; }
  void setStepCount(long t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Versioned binary container of named shaped arrays plus a config echo;
// byte-stable for identical contents.
struct Checkpoint {
  std::string config;
  std::vector<std::pair<std::string, Tensor>> arrays;
};

std::string checkpointBytes(const Checkpoint& ckpt);
Checkpoint checkpointFromBytes(const std::string& bytes);
void saveCheckpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint loadCheckpoint(const std::string& path);

}  // namespace melvae

#endif  // MELVAE_TENSOR_H
