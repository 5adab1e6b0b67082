// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "kinediff/checkpoint.hpp"
#include "kinediff/errors.hpp"
#include "kinediff/nn.hpp"
#include "kinediff/parallel.hpp"
#include "kinediff/ref_kernels.hpp"
#include "kinediff/rng.hpp"
#include "kinediff/tensor.hpp"
#include "testutil.hpp"

using namespace kinediff;

TEST_CASE("matmul basics") {
  Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  Tensor r = matmul(i2, b);
  CHECK(r.values() == std::vector<double>{3, 4, 5, 6});

  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor c = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(a, c).item() == doctest::Approx(11.0));

  Tensor z = Tensor::zeros({2, 3});
  Tensor d = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor zd = matmul(z, d);
  for (double v : zd.values()) CHECK(v == 0.0);

  Tensor bad = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(matmul(bad, b), DimensionError);
  try {
    matmul(bad, b);
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[1x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with serial reference") {
  Rng rng(11);
  Tensor a = testutil::random_tensor({17, 23}, rng, false);
  Tensor b = testutil::random_tensor({23, 9}, rng, false);
  Tensor c = matmul(a, b);
  std::vector<double> expect(17 * 9);
  ref::matmul(a.data(), b.data(), expect.data(), 17, 23, 9);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(c.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("blocked_sum matches serial reference bitwise") {
  Rng rng(5);
  std::vector<double> x(100001);
  for (auto& v : x) v = rng.uniform(-1, 1);
  CHECK(blocked_sum(x.data(), (std::int64_t)x.size()) ==
        ref::sum(x.data(), (std::int64_t)x.size()));
}

TEST_CASE("backward populates leaf gradients") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4, 6});

  Tensor y = Tensor::from({1, 4}, {5, -1, 2, 0.5}, true);
  Tensor l2 = sum(y);
  backward(l2);
  CHECK(y.grad() == std::vector<double>{1, 1, 1, 1});

  // accumulation without reset
  backward(l2);
  CHECK(y.grad() == std::vector<double>{2, 2, 2, 2});
}

TEST_CASE("backward contract errors") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3}, true);
  Tensor not_scalar = mul(x, x);
  CHECK_THROWS_AS(backward(not_scalar), ContractError);

  // loss detached from x: grad stays absent
  Tensor z = Tensor::from({1, 2}, {1, 2}, true);
  Tensor unrelated = Tensor::from({1, 1}, {3}, true);
  backward(sum(unrelated));
  CHECK(!z.has_grad());
  CHECK_THROWS_AS(z.grad(), ContractError);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(42);
  Tensor a = testutil::random_tensor({3, 4}, rng);
  Tensor b = testutil::random_tensor({3, 4}, rng);
  Tensor w = testutil::random_tensor({4, 2}, rng);

  std::vector<Tensor> leaves = {a, b, w};
  auto loss_fn = [&]() {
    Tensor t = add(mul(a, b), scale(a, 0.3));
    t = tanh_t(t);
    t = matmul(t, w);
    t = add_const(softplus(t), 0.1);
    return add(mean(t), sum_sq(slice_cols(t, 0, 1)));
  };
  CHECK(testutil::gradcheck(leaves, loss_fn) < 1e-4);
}

TEST_CASE("softmax, max pooling, concat gradients") {
  Rng rng(7);
  Tensor a = testutil::random_tensor({4, 5}, rng);
  Tensor b = testutil::random_tensor({4, 3}, rng);
  std::vector<Tensor> leaves = {a, b};
  auto loss_fn = [&]() {
    Tensor sm = softmax_rows(a);
    Tensor mx = max_over_rows(concat_cols(sm, b));
    Tensor rep = repeat_row(mx, 3);
    return add(mean_row_l2(rep), sum(abs_t(b)));
  };
  CHECK(testutil::gradcheck(leaves, loss_fn) < 1e-4);
}

TEST_CASE("cross entropy with logits gradient and value") {
  Rng rng(3);
  Tensor logits = testutil::random_tensor({6, 3}, rng);
  std::vector<int> labels = {0, 1, 2, 2, 1, 0};
  std::vector<Tensor> leaves = {logits};
  auto loss_fn = [&]() { return cross_entropy_with_logits(logits, labels); };
  CHECK(testutil::gradcheck(leaves, loss_fn) < 1e-4);

  // saturated correct logits drive CE to zero
  Tensor sure = Tensor::from({2, 2}, {50, -50, -50, 50});
  CHECK(cross_entropy_with_logits(sure, {0, 1}).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mlp_forward examples") {
  Rng rng(1);
  MlpParams ident;
  ident.spec = MlpSpec({2, 2}, Act::relu);
  ident.weights = {Tensor::from({2, 2}, {1, 0, 0, 1}, true)};
  ident.biases = {Tensor::zeros({1, 2}, true)};
  Tensor x = Tensor::from({1, 2}, {0.3, -0.7});
  Tensor y = mlp_forward(ident, x);
  CHECK(y.values() == x.values());

  MlpParams tiny;
  tiny.spec = MlpSpec({2, 1}, Act::relu);
  tiny.weights = {Tensor::from({2, 1}, {1, 1}, true)};
  tiny.biases = {Tensor::zeros({1, 1}, true)};
  CHECK(mlp_forward(tiny, Tensor::from({1, 2}, {-1, 2})).item() == doctest::Approx(1.0));

  MlpParams batch = MlpParams::init(MlpSpec({3, 8, 4}, Act::relu), rng);
  Tensor in5 = testutil::random_tensor({5, 3}, rng, false);
  CHECK(mlp_forward(batch, in5).rows() == 5);
  CHECK(mlp_forward(batch, in5).cols() == 4);

  CHECK_THROWS_AS(mlp_forward(batch, Tensor::zeros({5, 4})), DimensionError);
}

TEST_CASE("point_encode permutation invariance") {
  Rng rng(9);
  PointEncoderParams enc = PointEncoderParams::init({3, 16, 8}, rng);
  Tensor cloud = testutil::random_tensor({10, 3}, rng, false);

  // rotate rows by 3
  std::vector<double> shuf(cloud.values());
  std::rotate(shuf.begin(), shuf.begin() + 9, shuf.end());
  Tensor shuffled = Tensor::from({10, 3}, shuf);

  CHECK(point_encode(enc, cloud).values() == point_encode(enc, shuffled).values());

  // N = 1 equals the raw per-point MLP output
  Tensor one = testutil::random_tensor({1, 3}, rng, false);
  CHECK(point_encode(enc, one).values() == point_features(enc, one).values());

  // duplicated rows leave the max pool unchanged
  std::vector<double> dup(cloud.values());
  dup.insert(dup.end(), cloud.values().begin(), cloud.values().begin() + 15);
  Tensor duped = Tensor::from({15, 3}, dup);
  CHECK(point_encode(enc, duped).values() == point_encode(enc, cloud).values());

  CHECK_THROWS_AS(point_encode(enc, Tensor::zeros({0, 3})), ContractError);
}

TEST_CASE("cross_attention basics") {
  Rng rng(21);
  const std::int64_t d = 6;
  CrossAttentionParams p = CrossAttentionParams::init(d, rng);
  Tensor q = testutil::random_tensor({3, d}, rng, false);

  // single context row: softmax over one key is 1 -> value projection
  Tensor ctx1 = testutil::random_tensor({1, d}, rng, false);
  Tensor out1 = cross_attention(p, q, ctx1);
  Tensor vproj = matmul(ctx1, p.wv);
  for (std::int64_t r = 0; r < 3; ++r)
    for (std::int64_t c = 0; c < d; ++c)
      CHECK(out1.at(r, c) == doctest::Approx(vproj.at(0, c)).epsilon(1e-12));

  // duplicated identical context rows change nothing
  std::vector<double> two(ctx1.values());
  two.insert(two.end(), ctx1.values().begin(), ctx1.values().end());
  Tensor ctx2 = Tensor::from({2, d}, two);
  Tensor out2 = cross_attention(p, q, ctx2);
  for (std::size_t i = 0; i < out1.values().size(); ++i)
    CHECK(out2.values()[i] == doctest::Approx(out1.values()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(cross_attention(p, q, Tensor::zeros({2, d + 1})), DimensionError);
}

TEST_CASE("cross_attention gradient wrt query matches finite differences") {
  Rng rng(33);
  const std::int64_t d = 5;
  CrossAttentionParams p = CrossAttentionParams::init(d, rng);
  Tensor q = testutil::random_tensor({2, d}, rng, true);
  Tensor ctx = testutil::random_tensor({4, d}, rng, false);
  std::vector<Tensor> leaves = {q};
  auto loss_fn = [&]() { return sum(cross_attention(p, q, ctx)); };
  CHECK(testutil::gradcheck(leaves, loss_fn, 1e-5) < 1e-5);
}

TEST_CASE("rng determinism and distribution") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(123), d(124);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= (c.next_u64() != d.next_u64());
  CHECK(differs);

  Rng e(7);
  double mn = 1.0, mx = 0.0, acc = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = e.uniform();
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    acc += u;
  }
  CHECK(mn >= 0.0);
  CHECK(mx < 1.0);
  CHECK(acc / n == doctest::Approx(0.5).epsilon(0.02));

  // forked streams are decorrelated and deterministic
  Rng f1 = Rng(9).fork(1), f1b = Rng(9).fork(1), f2 = Rng(9).fork(2);
  CHECK(f1.next_u64() == f1b.next_u64());
  Rng g1 = Rng(9).fork(1);
  CHECK(g1.next_u64() != f2.next_u64());

  // normals: mean ~0, var ~1
  Rng h(31);
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = h.normal();
    m1 += z;
    m2 += z * z;
  }
  CHECK(m1 / n == doctest::Approx(0.0).epsilon(0.03));
  CHECK(m2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("glorot initialization determinism and bounds") {
  Rng r1(55), r2(55);
  Tensor w1 = glorot_init(r1, 10, 20);
  Tensor w2 = glorot_init(r2, 10, 20);
  CHECK(w1.values() == w2.values());
  const double bound = std::sqrt(6.0 / 30.0);
  for (double v : w1.values()) CHECK(std::fabs(v) <= bound);
}

TEST_CASE("KD3D checkpoint round trip is bitwise exact") {
  Rng rng(77);
  NamedTensors ts;
  ts.emplace_back("net.w0", testutil::random_tensor({7, 5}, rng, false));
  ts.emplace_back("net.b0", testutil::random_tensor({1, 5}, rng, false));
  ts.emplace_back("meta.dims", Tensor::from({3}, {64, 64, 64}));
  const std::string path = "test_ckpt.kd3d";
  save_kd3d(path, ts);
  NamedTensors loaded = load_kd3d(path);
  REQUIRE(loaded.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(loaded[i].first == ts[i].first);
    CHECK(loaded[i].second.shape() == ts[i].second.shape());
    CHECK(loaded[i].second.values() == ts[i].second.values());
  }
  std::filesystem::remove(path);
}

TEST_CASE("adam determinism") {
  auto run = [] {
    Rng rng(13);
    ParamSet ps;
    Tensor w = ps.add("w", testutil::random_tensor({4, 4}, rng));
    Adam opt;
    for (int step = 0; step < 25; ++step) {
      ps.zero_grad();
      Tensor target = Tensor::from({4, 4}, std::vector<double>(16, 0.5));
      Tensor loss = sum_sq(sub(w, target));
      backward(loss);
      opt.step(ps);
    }
    return w.values();
  };
  CHECK(run() == run());
}
