#include "gradcheck.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <utility>

#include "errors.h"
#include "model.h"
#include "rng.h"
#include "tensor.h"

namespace melvae {
namespace {

constexpr double OP_TOL = 1e-4;
constexpr double OBJECTIVE_TOL = 1e-3;
constexpr double FD_STEP = 1e-5;

struct Leaf {
  std::string label;
  Tensor tensor;
};

// Central differences around the current leaf values; the relative error is
// normalized by max(1, |fd|, |analytic|) so tiny gradients compare absolutely.
GradCheckCase runCase(const std::string& name, double tolerance, const std::vector<Leaf>& leaves,
                      const std::function<Tensor(Graph&)>& buildLoss) {
  GradCheckCase result;
  result.name = name;
  result.tolerance = tolerance;

  for (const Leaf& leaf : leaves) zeroGrad(leaf.tensor);
  {
    Graph g;
    Tensor loss = buildLoss(g);
    if (loss->numel() != 1) throw NumericError("gradcheck: loss must be scalar in " + name);
    g.backward(loss);
  }
  auto eval = [&] {
    Graph g;
    return buildLoss(g)->values[0];
  };
  for (const Leaf& leaf : leaves) {
    for (size_t i = 0; i < leaf.tensor->numel(); ++i) {
      double saved = leaf.tensor->values[i];
      leaf.tensor->values[i] = saved + FD_STEP;
      double up = eval();
      leaf.tensor->values[i] = saved - FD_STEP;
      double down = eval();
      leaf.tensor->values[i] = saved;
      double fd = (up - down) / (2.0 * FD_STEP);
      double analytic = leaf.tensor->grad[i];
      double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic)});
      double rel = std::fabs(fd - analytic) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_coordinate = leaf.label + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

Tensor randomLeaf(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = makeTensor(std::move(shape), true);
  for (double& v : t->values) v = rng.uniform(lo, hi);
  return t;
}

std::vector<Leaf> gruLeaves(const std::string& prefix, const GruParams& p) {
  return {{prefix + ".w_r", p.w_r}, {prefix + ".b_r", p.b_r}, {prefix + ".w_u", p.w_u},
          {prefix + ".b_u", p.b_u}, {prefix + ".w_h", p.w_h}, {prefix + ".b_h", p.b_h}};
}

void appendParamLeaves(std::vector<Leaf>& leaves,
                       const std::vector<std::pair<std::string, Tensor>>& named) {
  for (const auto& [name, tensor] : named) leaves.push_back({name, tensor});
}

// --- per-op suites ----------------------------------------------------------

GradCheckCase caseMatmul(Rng& rng) {
  Tensor a = randomLeaf({3, 4}, rng), b = randomLeaf({4, 2}, rng);
  return runCase("matmul", OP_TOL, {{"a", a}, {"b", b}},
                 [&](Graph& g) { return g.sum(g.tanh(g.matmul(a, b))); });
}

GradCheckCase caseAddSub(Rng& rng) {
  Tensor a = randomLeaf({2, 5}, rng), b = randomLeaf({2, 5}, rng);
  return runCase("add/sub", OP_TOL, {{"a", a}, {"b", b}}, [&](Graph& g) {
    return g.sum(g.mul(g.add(a, b), g.sub(a, b)));
  });
}

GradCheckCase caseMulScale(Rng& rng) {
  Tensor a = randomLeaf({4, 3}, rng), b = randomLeaf({4, 3}, rng);
  return runCase("mul/scale", OP_TOL, {{"a", a}, {"b", b}},
                 [&](Graph& g) { return g.sum(g.scale(g.mul(a, b), -1.7)); });
}

GradCheckCase caseSigmoid(Rng& rng) {
  Tensor a = randomLeaf({3, 3}, rng, -2.0, 2.0);
  return runCase("sigmoid", OP_TOL, {{"a", a}},
                 [&](Graph& g) { return g.sum(g.sigmoid(a)); });
}

GradCheckCase caseTanh(Rng& rng) {
  Tensor a = randomLeaf({3, 3}, rng, -2.0, 2.0);
  return runCase("tanh", OP_TOL, {{"a", a}}, [&](Graph& g) { return g.sum(g.tanh(a)); });
}

GradCheckCase caseExp(Rng& rng) {
  Tensor a = randomLeaf({2, 4}, rng, -1.5, 1.5);
  return runCase("exp", OP_TOL, {{"a", a}}, [&](Graph& g) { return g.sum(g.exp(a)); });
}

GradCheckCase caseRowBias(Rng& rng) {
  Tensor a = randomLeaf({3, 4}, rng);
  Tensor b = randomLeaf({1, 4}, rng);
  return runCase("addRowBias", OP_TOL, {{"a", a}, {"b", b}},
                 [&](Graph& g) { return g.sum(g.tanh(g.addRowBias(a, b))); });
}

GradCheckCase caseConcatSlice(Rng& rng) {
  Tensor a = randomLeaf({2, 3}, rng), b = randomLeaf({2, 2}, rng);
  return runCase("concat/slice", OP_TOL, {{"a", a}, {"b", b}}, [&](Graph& g) {
    Tensor joined = g.concat({a, b}, 1);
    return g.sum(g.mul(g.slice(joined, 1, 1, 3), g.slice(joined, 1, 2, 3)));
  });
}

GradCheckCase caseMean(Rng& rng) {
  Tensor a = randomLeaf({3, 5}, rng);
  return runCase("mean", OP_TOL, {{"a", a}}, [&](Graph& g) { return g.mean(g.mul(a, a)); });
}

GradCheckCase caseBce(Rng& rng) {
  Tensor logits = randomLeaf({2, 6}, rng, -1.5, 1.5);
  Tensor targets = makeTensor({2, 6});
  for (size_t i = 0; i < targets->numel(); ++i) targets->values[i] = (i % 3 == 0) ? 1.0 : 0.0;
  return runCase("bceMean", OP_TOL, {{"logits", logits}},
                 [&](Graph& g) { return g.bceMean(g.sigmoid(logits), targets); });
}

GradCheckCase caseGruCell(Rng& rng) {
  const int dIn = 4, dHidden = 4;
  GruParams p = makeGruParams(dIn, dHidden, rng);
  Tensor x = randomLeaf({2, dIn}, rng);
  Tensor h = randomLeaf({2, dHidden}, rng);
  std::vector<Leaf> leaves = gruLeaves("gru", p);
  leaves.push_back({"x", x});
  leaves.push_back({"h", h});
  return runCase("gruCell", OP_TOL, leaves,
                 [&](Graph& g) { return g.sum(gruCell(g, x, h, p)); });
}

// The bidirectional wrapper at T=3, widths 4.
GradCheckCase caseBgru(Rng& rng) {
  const int dIn = 4, dHidden = 4;
  GruParams fwd = makeGruParams(dIn, dHidden, rng);
  GruParams bwd = makeGruParams(dIn, dHidden, rng);
  std::vector<Tensor> sequence = {randomLeaf({2, dIn}, rng), randomLeaf({2, dIn}, rng),
                                  randomLeaf({2, dIn}, rng)};
  std::vector<Leaf> leaves = gruLeaves("fwd", fwd);
  for (const Leaf& leaf : gruLeaves("bwd", bwd)) leaves.push_back(leaf);
  for (size_t t = 0; t < sequence.size(); ++t) {
    leaves.push_back({"x" + std::to_string(t), sequence[t]});
  }
  return runCase("bgru", OP_TOL, leaves, [&](Graph& g) {
    std::vector<Tensor> outputs = bgru(g, sequence, fwd, bwd);
    Tensor acc = outputs[0];
    for (size_t t = 1; t < outputs.size(); ++t) acc = g.add(acc, outputs[t]);
    return g.sum(g.tanh(acc));
  });
}

// --- full objectives at reduced dims ---------------------------------------

ModelConfig reducedConfig(bool multitask) {
  ModelConfig config;
  config.hidden = 8;
  config.dense = 8;
  config.dense_layers = 1;
  config.latent = 4;
  config.frames = 8;
  config.multitask = multitask;
  config.beta = 0.7;
  config.lambda_genre = 0.9;
  return config;
}

Tensor randomBatch(const ModelConfig& config, Rng& rng) {
  Tensor x = makeTensor({2, config.rollDim()});
  // A plausible roll: exactly one active pitch on most frames.
  for (int row = 0; row < 2; ++row) {
    for (int t = 0; t < config.frames; ++t) {
      if (rng.uniform() < 0.8) {
        int pitch = static_cast<int>(rng.below(static_cast<uint64_t>(config.frameDim())));
        x->values[static_cast<size_t>(row * config.rollDim() + t * config.frameDim() + pitch)] =
            1.0;
      }
    }
  }
  return x;
}

GradCheckCase caseElbo(Rng& rng) {
  ModelConfig config = reducedConfig(false);
  ModelParams params = buildModel(config, rng.next());
  Tensor x = randomBatch(config, rng);
  Tensor eps = randomLeaf({2, config.latent}, rng);
  eps->requires_grad = false;

  std::vector<Leaf> leaves;
  appendParamLeaves(leaves, namedParams(params));
  return runCase("objective", OBJECTIVE_TOL, leaves, [&](Graph& g) {
    LatentBatch dist = encodeBatch(g, params, x);
    Tensor z = reparameterizeBatch(g, dist, eps);
    Tensor probs = decodeBatch(g, params, z);
    return elboLoss(g, x, probs, dist, config.beta).total;
  });
}

GradCheckCase caseMultitaskObjective(Rng& rng) {
  ModelConfig config = reducedConfig(true);
  ModelParams params = buildModel(config, rng.next());
  ClassifierParams classifier = buildClassifier(config, rng.next());
  Tensor x = randomBatch(config, rng);
  Tensor y = genreBlock({Genre::Jazz, Genre::Other});
  Tensor eps = randomLeaf({2, config.latent}, rng);
  eps->requires_grad = false;

  std::vector<Leaf> leaves;
  appendParamLeaves(leaves, namedParams(params));
  appendParamLeaves(leaves, namedClassifierParams(classifier));
  return runCase("multitask objective", OBJECTIVE_TOL, leaves, [&](Graph& g) {
    LatentBatch dist = encodeBatch(g, params, x);
    Tensor z = reparameterizeBatch(g, dist, eps);
    Tensor probs = decodeBatch(g, params, z, &y);
    Tensor yhat = classifierBatch(g, classifier, probs);
    return multitaskLoss(g, x, probs, dist, yhat, y, config.beta, config.lambda_genre).total;
  });
}

}  // namespace

bool GradCheckReport::passed() const {
  for (const GradCheckCase& c : cases) {
    if (!c.passed()) return false;
  }
  return !cases.empty();
}

const GradCheckCase& GradCheckReport::worst() const {
  if (cases.empty()) throw NumericError("gradcheck: no cases were run");
  const GradCheckCase* worst = &cases.front();
  for (const GradCheckCase& c : cases) {
    if (c.max_rel_err / c.tolerance > worst->max_rel_err / worst->tolerance) worst = &c;
  }
  return *worst;
}

GradCheckReport runGradCheck(uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report;
  report.cases.push_back(caseMatmul(rng));
  report.cases.push_back(caseAddSub(rng));
  report.cases.push_back(caseMulScale(rng));
  report.cases.push_back(caseSigmoid(rng));
  report.cases.push_back(caseTanh(rng));
  report.cases.push_back(caseExp(rng));
  report.cases.push_back(caseRowBias(rng));
  report.cases.push_back(caseConcatSlice(rng));
  report.cases.push_back(caseMean(rng));
  report.cases.push_back(caseBce(rng));
  report.cases.push_back(caseGruCell(rng));
  report.cases.push_back(caseBgru(rng));
  report.cases.push_back(caseElbo(rng));
  report.cases.push_back(caseMultitaskObjective(rng));
  return report;
}

std::string gradCheckText(const GradCheckReport& report) {
  std::string out = "gradient check\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-22s %12s %10s %8s %6s  %s\n", "op", "max rel err",
                "tolerance", "coords", "result", "worst coordinate");
  out += buf;
  for (const GradCheckCase& c : report.cases) {
    std::snprintf(buf, sizeof(buf), "%-22s %12.3e %10.0e %8zu %6s  %s\n", c.name.c_str(),
                  c.max_rel_err, c.tolerance, c.coordinates, c.passed() ? "ok" : "FAIL",
                  c.worst_coordinate.c_str());
    out += buf;
  }
  if (report.passed()) {
    out += "all " + std::to_string(report.cases.size()) + " suites within tolerance\n";
  } else {
    const GradCheckCase& w = report.worst();
    std::snprintf(buf, sizeof(buf), "FAILED: worst offender %s at %s (rel err %.3e > %.0e)\n",
                  w.name.c_str(), w.worst_coordinate.c_str(), w.max_rel_err, w.tolerance);
    out += buf;
  }
  return out;
}

}  // namespace melvae
