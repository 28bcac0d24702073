#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "doctest.h"
#include "errors.h"
#include "rng.h"
#include "tensor.h"
#include "test_util.h"

using namespace melvae;
using testutil::checkGradients;
using testutil::randomTensor;

TEST_CASE("tensor construction and shape reporting") {
  Tensor t = makeTensor({2, 3});
  CHECK(t->numel() == 6);
  CHECK(t->rows() == 2);
  CHECK(t->cols() == 3);
  CHECK(t->grad.size() == 6);
  CHECK(shapeString(*t) == "[2,3]");

  Tensor s = scalarTensor(4.5);
  CHECK(s->numel() == 1);
  CHECK(s->values[0] == 4.5);
  CHECK(shapeString(*s) == "[1]");

  CHECK_THROWS_AS(makeTensor({2, 2}, {1.0, 2.0, 3.0}), DataError);
  CHECK_THROWS_AS(makeTensor({0, 3}), DataError);
}

TEST_CASE("uniform init stays within the fan-in bound and is seeded") {
  Rng a(77), b(77);
  Tensor x = makeTensor({16, 16});
  Tensor y = makeTensor({16, 16});
  initUniform(x, a, 64);
  initUniform(y, b, 64);
  CHECK(x->values == y->values);
  double bound = 1.0 / 8.0;
  for (double v : x->values) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
}

TEST_CASE("matmul against identity and a hand product") {
  Graph g;
  Tensor eye = makeTensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = makeTensor({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor out = g.matmul(eye, a);
  CHECK(out->values == a->values);

  Tensor b = makeTensor({2, 2}, {1, 2, 3, 4});
  Tensor c = makeTensor({2, 2}, {5, 6, 7, 8});
  Tensor prod = g.matmul(b, c);
  CHECK(prod->values == std::vector<double>{19, 22, 43, 50});

  CHECK_THROWS_WITH_AS(g.matmul(a, a), "matmul: incompatible shapes [3,2] x [3,2]", DataError);
}

TEST_CASE("elementwise forward values") {
  Graph g;
  Tensor a = makeTensor({1, 3}, {1.0, -2.0, 0.5});
  Tensor b = makeTensor({1, 3}, {4.0, 3.0, -1.0});
  CHECK(g.add(a, b)->values == std::vector<double>{5.0, 1.0, -0.5});
  CHECK(g.sub(a, b)->values == std::vector<double>{-3.0, -5.0, 1.5});
  CHECK(g.mul(a, b)->values == std::vector<double>{4.0, -6.0, -0.5});
  CHECK(g.scale(a, -2.0)->values == std::vector<double>{-2.0, 4.0, -1.0});

  Tensor z = makeTensor({1, 1}, std::vector<double>{0.0});
  CHECK(g.sigmoid(z)->values[0] == 0.5);
  CHECK(g.tanh(z)->values[0] == 0.0);
  CHECK(g.exp(z)->values[0] == 1.0);

  Tensor mism = makeTensor({3, 1});
  CHECK_THROWS_WITH_AS(g.add(a, mism), "add: shape mismatch [1,3] vs [3,1]", DataError);
}

TEST_CASE("sigmoid saturates without overflow") {
  Graph g;
  Tensor big = makeTensor({1, 2}, {800.0, -800.0});
  Tensor s = g.sigmoid(big);
  CHECK(s->values[0] == 1.0);
  CHECK(s->values[1] == 0.0);
}

TEST_CASE("addRowBias broadcasts over rows") {
  Graph g;
  Tensor a = makeTensor({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor bias = makeTensor({3}, {10, 20, 30});
  Tensor out = g.addRowBias(a, bias);
  CHECK(out->values == std::vector<double>{11, 22, 33, 14, 25, 36});
  Tensor bad = makeTensor({2}, {1, 2});
  CHECK_THROWS_AS(g.addRowBias(a, bad), DataError);
}

TEST_CASE("concat and slice move blocks and bounds-check") {
  Graph g;
  Tensor a = makeTensor({2, 2}, {1, 2, 3, 4});
  Tensor b = makeTensor({2, 1}, {5, 6});
  Tensor cols = g.concat({a, b}, 1);
  CHECK(cols->shape == std::vector<int>{2, 3});
  CHECK(cols->values == std::vector<double>{1, 2, 5, 3, 4, 6});

  Tensor c = makeTensor({1, 2}, {7, 8});
  Tensor rows = g.concat({a, c}, 0);
  CHECK(rows->shape == std::vector<int>{3, 2});
  CHECK(rows->values == std::vector<double>{1, 2, 3, 4, 7, 8});

  Tensor mid = g.slice(cols, 1, 1, 2);
  CHECK(mid->shape == std::vector<int>{2, 2});
  CHECK(mid->values == std::vector<double>{2, 5, 4, 6});
  Tensor row1 = g.slice(rows, 0, 2, 1);
  CHECK(row1->values == std::vector<double>{7, 8});

  CHECK_THROWS_AS(g.concat({a, c}, 1), DataError);
  CHECK_THROWS_AS(g.concat({}, 0), DataError);
  CHECK_THROWS_AS(g.slice(a, 1, 1, 2), DataError);
  CHECK_THROWS_AS(g.slice(a, 2, 0, 1), DataError);
}

TEST_CASE("reductions use the exact cell count") {
  Graph g;
  Tensor a = makeTensor({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(g.sum(a)->values[0] == 36.0);
  CHECK(g.mean(a)->values[0] == 4.5);
}

TEST_CASE("bce of a uniform guess equals cells * ln 2 per row") {
  Graph g;
  Tensor probs = makeTensor({2, 3072});
  std::fill(probs->values.begin(), probs->values.end(), 0.5);
  Tensor targets = makeTensor({2, 3072});
  Rng rng(5);
  for (double& t : targets->values) t = rng.uniform() < 0.1 ? 1.0 : 0.0;
  Tensor loss = g.bceMean(probs, targets);
  CHECK(std::fabs(loss->values[0] - 3072.0 * std::log(2.0)) <= 1e-9);
}

TEST_CASE("bce rejects out-of-range probabilities but tolerates saturation") {
  Graph g;
  Tensor targets = makeTensor({1, 2}, {1.0, 0.0});
  Tensor bad = makeTensor({1, 2}, {1.1, 0.5});
  CHECK_THROWS_AS(g.bceMean(bad, targets), DataError);
  Tensor neg = makeTensor({1, 2}, {-0.1, 0.5});
  CHECK_THROWS_AS(g.bceMean(neg, targets), DataError);
  // Exactly 0/1 can come out of a saturated sigmoid; the clamp keeps it finite.
  Tensor sat = makeTensor({1, 2}, {1.0, 0.0});
  Tensor loss = g.bceMean(sat, targets);
  CHECK(std::isfinite(loss->values[0]));
  CHECK(loss->values[0] < 1e-9);
}

TEST_CASE("finite-value hook rejects non-finite activations unless disabled") {
  Tensor huge = makeTensor({1, 1}, std::vector<double>{1e308});
  {
    Graph g;
    CHECK_THROWS_AS(g.exp(huge), NumericError);
  }
  {
    Graph off(false);
    Tensor out = off.exp(huge);
    CHECK(std::isinf(out->values[0]));
  }
}

TEST_CASE("backward accumulates across calls and across fan-out") {
  Rng rng(11);
  Tensor x = randomTensor({2, 2}, rng);
  Graph g;
  Tensor loss = g.sum(g.mul(x, x));  // d/dx sum(x^2) = 2x
  g.backward(loss);
  for (size_t i = 0; i < x->numel(); ++i) {
    CHECK(x->grad[i] == doctest::Approx(2.0 * x->values[i]).epsilon(1e-12));
  }
  g.backward(loss);
  for (size_t i = 0; i < x->numel(); ++i) {
    CHECK(x->grad[i] == doctest::Approx(4.0 * x->values[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(g.backward(x), DataError);  // non-scalar loss
}

TEST_CASE("gradient check: matmul chain") {
  Rng rng(21);
  Tensor a = randomTensor({3, 4}, rng);
  Tensor b = randomTensor({4, 2}, rng);
  checkGradients({a, b}, [&](Graph& g) { return g.sum(g.matmul(a, b)); });
}

TEST_CASE("gradient check: elementwise ops") {
  Rng rng(22);
  Tensor a = randomTensor({2, 3}, rng);
  Tensor b = randomTensor({2, 3}, rng, 0.1, 1.0);
  checkGradients({a, b}, [&](Graph& g) { return g.sum(g.mul(g.add(a, b), g.sub(a, b))); });
  checkGradients({a}, [&](Graph& g) { return g.mean(g.scale(g.tanh(a), 3.0)); });
  checkGradients({a}, [&](Graph& g) { return g.sum(g.sigmoid(a)); });
  checkGradients({a}, [&](Graph& g) { return g.sum(g.exp(a)); });
}

TEST_CASE("gradient check: bias, concat, slice") {
  Rng rng(23);
  Tensor a = randomTensor({3, 4}, rng);
  Tensor bias = randomTensor({4}, rng);
  checkGradients({a, bias}, [&](Graph& g) { return g.sum(g.addRowBias(a, bias)); });

  Tensor left = randomTensor({2, 2}, rng);
  Tensor right = randomTensor({2, 3}, rng);
  checkGradients({left, right}, [&](Graph& g) {
    Tensor cat = g.concat({left, right}, 1);
    return g.sum(g.mul(cat, cat));
  });
  checkGradients({right}, [&](Graph& g) {
    Tensor mid = g.slice(right, 1, 1, 2);
    return g.sum(g.exp(mid));
  });
}

TEST_CASE("gradient check: bce against fixed targets") {
  Rng rng(24);
  Tensor probs = randomTensor({2, 5}, rng, 0.05, 0.95);
  Tensor targets = makeTensor({2, 5});
  for (size_t i = 0; i < targets->numel(); ++i) targets->values[i] = i % 2 ? 1.0 : 0.0;
  checkGradients({probs}, [&](Graph& g) { return g.bceMean(probs, targets); });
}

TEST_CASE("gradient check: composed VAE-style pipeline") {
  Rng rng(25);
  Tensor x = randomTensor({2, 6}, rng);
  Tensor w1 = randomTensor({6, 8}, rng, -0.5, 0.5);
  Tensor b1 = randomTensor({8}, rng, -0.1, 0.1);
  Tensor w2 = randomTensor({4, 3}, rng, -0.5, 0.5);
  Tensor targets = makeTensor({2, 3});
  targets->values = {1, 0, 1, 0, 0, 1};
  checkGradients({x, w1, b1, w2}, [&](Graph& g) {
    Tensor h = g.tanh(g.addRowBias(g.matmul(x, w1), b1));
    Tensor mu = g.slice(h, 1, 0, 4);
    Tensor logVar = g.slice(h, 1, 4, 4);
    // 0.5 * sum(mu^2 + exp(logVar) - 1 - logVar), averaged over the batch
    Tensor klCells = g.sub(g.add(g.mul(mu, mu), g.exp(logVar)), logVar);
    Tensor kl = g.scale(g.sum(klCells), 0.5 / 2.0);
    Tensor probs = g.sigmoid(g.matmul(mu, w2));
    Tensor recon = g.bceMean(probs, targets);
    return g.add(recon, kl);
  });
}

TEST_CASE("gru cell with zero parameters halves the previous state") {
  Rng rng(31);
  GruParams p;
  p.w_r = makeTensor({5, 3}, true);
  p.b_r = makeTensor({3}, true);
  p.w_u = makeTensor({5, 3}, true);
  p.b_u = makeTensor({3}, true);
  p.w_h = makeTensor({5, 3}, true);
  p.b_h = makeTensor({3}, true);
  Tensor x = randomTensor({2, 2}, rng);
  Tensor h = randomTensor({2, 3}, rng);
  Graph g;
  Tensor next = gruCell(g, x, h, p);
  // r=u=0.5 and cand=0 everywhere, so h' = (1-0.5) h.
  for (size_t i = 0; i < next->numel(); ++i) {
    CHECK(next->values[i] == doctest::Approx(0.5 * h->values[i]).epsilon(1e-12));
  }
}

TEST_CASE("gru parameter factory shapes and listing") {
  Rng rng(32);
  GruParams p = makeGruParams(4, 6, rng);
  CHECK(p.w_r->shape == std::vector<int>{10, 6});
  CHECK(p.b_r->shape == std::vector<int>{6});
  CHECK(p.w_u->requires_grad);
  for (double v : p.b_h->values) CHECK(v == 0.0);
  std::vector<Tensor> list = gruParamList(p);
  REQUIRE(list.size() == 6);
  CHECK(list[0] == p.w_r);
  CHECK(list[5] == p.b_h);
}

TEST_CASE("gradient check: gru cell") {
  Rng rng(33);
  GruParams p = makeGruParams(3, 4, rng);
  for (Tensor& b : {std::ref(p.b_r), std::ref(p.b_u), std::ref(p.b_h)}) {
    for (double& v : b.get()->values) v = rng.uniform(-0.2, 0.2);
  }
  Tensor x = randomTensor({2, 3}, rng);
  Tensor h = randomTensor({2, 4}, rng);
  std::vector<Tensor> leaves = gruParamList(p);
  leaves.push_back(x);
  leaves.push_back(h);
  checkGradients(leaves, [&](Graph& g) { return g.sum(gruCell(g, x, h, p)); });
}

TEST_CASE("gradient check: unrolled bidirectional gru") {
  Rng rng(34);
  GruParams fwd = makeGruParams(2, 3, rng);
  GruParams bwd = makeGruParams(2, 3, rng);
  std::vector<Tensor> seq;
  for (int t = 0; t < 3; ++t) seq.push_back(randomTensor({2, 2}, rng));
  std::vector<Tensor> leaves = gruParamList(fwd);
  for (const Tensor& t : gruParamList(bwd)) leaves.push_back(t);
  for (const Tensor& t : seq) leaves.push_back(t);
  checkGradients(leaves, [&](Graph& g) {
    std::vector<Tensor> out = bgru(g, seq, fwd, bwd);
    return g.sum(g.concat(out, 1));
  });
}

TEST_CASE("bgru of the reversed sequence swaps and reverses the halves") {
  Rng rng(35);
  GruParams fwd = makeGruParams(3, 4, rng);
  GruParams bwd = makeGruParams(3, 4, rng);
  std::vector<Tensor> seq, rev;
  for (int t = 0; t < 5; ++t) seq.push_back(randomTensor({2, 3}, rng));
  for (int t = 4; t >= 0; --t) rev.push_back(seq[static_cast<size_t>(t)]);
  Graph g;
  std::vector<Tensor> out = bgru(g, seq, fwd, bwd);
  std::vector<Tensor> outRev = bgru(g, rev, bwd, fwd);
  REQUIRE(out.size() == 5);
  for (size_t t = 0; t < 5; ++t) {
    Tensor orig = out[4 - t];
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 4; ++j) {
        // forward half of the reversed run == backward half of the original
        CHECK(outRev[t]->values[static_cast<size_t>(i * 8 + j)] ==
              orig->values[static_cast<size_t>(i * 8 + 4 + j)]);
        CHECK(outRev[t]->values[static_cast<size_t>(i * 8 + 4 + j)] ==
              orig->values[static_cast<size_t>(i * 8 + j)]);
      }
    }
  }
}

TEST_CASE("adam matches the hand-unrolled recurrence for a constant gradient") {
  Tensor p = makeTensor({1}, {2.0}, true);
  AdamOptimizer opt({p});
  const double LR = 0.1;
  // With g=1 every step, mHat = vHat = 1 exactly, so each update is
  // lr * 1 / (1 + eps).
  double expectedDelta = LR / (1.0 + 1e-8);
  p->grad[0] = 1.0;
  opt.step(LR);
  CHECK(p->values[0] == doctest::Approx(2.0 - expectedDelta).epsilon(1e-14));
  CHECK(opt.stepCount() == 1);
  p->grad[0] = 1.0;
  opt.step(LR);
  CHECK(p->values[0] == doctest::Approx(2.0 - 2.0 * expectedDelta).epsilon(1e-14));
  CHECK(opt.stepCount() == 2);
}

TEST_CASE("adam leaves parameters alone on a zero gradient") {
  Tensor p = makeTensor({2}, {1.0, -3.0}, true);
  AdamOptimizer opt({p});
  opt.zeroGrad();
  opt.step(0.5);
  CHECK(p->values == std::vector<double>{1.0, -3.0});
}

TEST_CASE("adam moment reset restarts bias correction") {
  Tensor p = makeTensor({1}, {0.0}, true);
  AdamOptimizer opt({p});
  p->grad[0] = 1.0;
  opt.step(0.1);
  opt.resetMoments();
  CHECK(opt.stepCount() == 0);
  double after = p->values[0];
  p->grad[0] = 1.0;
  opt.step(0.1);
  // First-step geometry again: the update magnitude repeats exactly.
  CHECK(p->values[0] == doctest::Approx(after - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  opt.setStepCount(7);
  CHECK(opt.stepCount() == 7);
}

TEST_CASE("global-norm clip rescales only above the threshold") {
  Tensor a = makeTensor({2}, {0.0, 0.0}, true);
  Tensor b = makeTensor({1}, {0.0}, true);
  AdamOptimizer opt({a, b});
  a->grad = {6.0, 8.0};
  b->grad = {0.0};
  CHECK(opt.clipGradients(5.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(a->grad[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(a->grad[1] == doctest::Approx(4.0).epsilon(1e-12));

  a->grad = {3.0, 4.0};
  CHECK(opt.clipGradients(5.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(a->grad[0] == 3.0);  // at the threshold: untouched
  CHECK(a->grad[1] == 4.0);
}

TEST_CASE("optimizer step reduces a quadratic loss") {
  Rng rng(41);
  Tensor w = randomTensor({4, 4}, rng);
  w->requires_grad = true;
  AdamOptimizer opt({w});
  auto lossValue = [&] {
    Graph g;
    Tensor loss = g.sum(g.mul(w, w));
    return loss;
  };
  double before = lossValue()->values[0];
  for (int it = 0; it < 50; ++it) {
    opt.zeroGrad();
    Graph g;
    Tensor loss = g.sum(g.mul(w, w));
    g.backward(loss);
    opt.clipGradients();
    opt.step(0.05);
  }
  CHECK(lossValue()->values[0] < 0.2 * before);
}

TEST_CASE("checkpoint bytes round-trip and stay byte-identical") {
  Rng rng(51);
  Checkpoint ckpt;
  ckpt.config = "{\"hidden\":64}";
  ckpt.arrays.emplace_back("enc.w", randomTensor({3, 4}, rng));
  ckpt.arrays.emplace_back("enc.b", randomTensor({4}, rng));
  std::string bytes = checkpointBytes(ckpt);
  Checkpoint back = checkpointFromBytes(bytes);
  CHECK(back.config == ckpt.config);
  REQUIRE(back.arrays.size() == 2);
  CHECK(back.arrays[0].first == "enc.w");
  CHECK(back.arrays[0].second->shape == std::vector<int>{3, 4});
  CHECK(back.arrays[0].second->values == ckpt.arrays[0].second->values);
  CHECK(back.arrays[1].second->values == ckpt.arrays[1].second->values);
  CHECK(checkpointBytes(back) == bytes);
}

TEST_CASE("checkpoint file round-trip") {
  Rng rng(52);
  Checkpoint ckpt;
  ckpt.config = "cfg";
  ckpt.arrays.emplace_back("w", randomTensor({2, 2}, rng));
  auto path = std::filesystem::temp_directory_path() / "melvae_ckpt_test.bin";
  saveCheckpoint(ckpt, path.string());
  Checkpoint back = loadCheckpoint(path.string());
  CHECK(back.config == "cfg");
  CHECK(back.arrays[0].second->values == ckpt.arrays[0].second->values);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(loadCheckpoint(path.string()), DataError);
}

TEST_CASE("checkpoint parsing rejects malformed bytes") {
  CHECK_THROWS_WITH_AS(checkpointFromBytes("nope"), "checkpoint: bad magic", DataError);
  Checkpoint ckpt;
  ckpt.config = "c";
  ckpt.arrays.emplace_back("w", makeTensor({2}, {1.0, 2.0}));
  std::string bytes = checkpointBytes(ckpt);
  CHECK_THROWS_AS(checkpointFromBytes(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_WITH_AS(checkpointFromBytes(bytes + "x"), "checkpoint: trailing bytes", DataError);
  std::string wrongVersion = bytes;
  wrongVersion[4] = 9;
  CHECK_THROWS_AS(checkpointFromBytes(wrongVersion), DataError);
}
