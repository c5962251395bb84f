#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "rlns/ops.hpp"
#include "support/grad_check.hpp"

using namespace rlns;
using rlns::testing::grad_check;
using rlns::testing::random_tensor;
using rlns::testing::weighted_sum;

namespace {
constexpr double kGradTol = 1e-6;
}

TEST_CASE("matmul identity and hand cases") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, a);
  CHECK(r.data()[0] == 1.0);
  CHECK(r.data()[1] == 2.0);
  CHECK(r.data()[2] == 3.0);
  CHECK(r.data()[3] == 4.0);

  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0);

  Tensor bad({3, 2}, std::vector<double>(6, 0.0));
  CHECK_THROWS_WITH_AS(matmul(a, bad), doctest::Contains("[2x2]"), std::invalid_argument);
}

TEST_CASE("matmul gradient vs finite differences") {
  std::mt19937_64 rng(7);
  Tensor a = random_tensor(rng, {5, 7});
  Tensor b = random_tensor(rng, {7, 3});
  Tensor w = random_tensor(rng, {5, 3});
  auto res = grad_check({a, b}, [&w](const std::vector<Tensor>& in) {
    return weighted_sum(matmul(in[0], in[1]), w);
  });
  CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("softmax basics") {
  Tensor x({3}, {0, 0, 0});
  Tensor y = softmax(x, 0);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor big({2}, {1000.0, 0.0});
  Tensor yb = softmax(big, 0);
  CHECK(yb.data()[0] == 1.0);
  CHECK(yb.data()[1] == 0.0);
  CHECK(yb.all_finite());

  std::mt19937_64 rng(11);
  Tensor r = random_tensor(rng, {6}, -3.0, 3.0);
  Tensor yr = softmax(r, 0);
  double sum = std::accumulate(yr.data().begin(), yr.data().end(), 0.0);
  CHECK(std::fabs(sum - 1.0) < 1e-12);

  Tensor w = random_tensor(rng, {6});
  auto res = grad_check({r}, [&w](const std::vector<Tensor>& in) { return weighted_sum(softmax(in[0], 0), w); });
  CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("softmax over axis 0 matches transposed rows") {
  std::mt19937_64 rng(12);
  Tensor a = random_tensor(rng, {4, 3});
  Tensor cols = softmax(a, 0);
  for (int64_t j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (int64_t i = 0; i < 4; ++i) sum += cols.at(i, j);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("top_k_indices tie-break and oracle") {
  std::vector<double> x{0.1, 0.9, 0.9, 0.2};
  auto sel = top_k_indices(x, 2);
  CHECK(sel == std::vector<int64_t>{1, 2});

  auto all = top_k_indices(x, 4);
  CHECK(all == std::vector<int64_t>{0, 1, 2, 3});

  CHECK_THROWS_AS(top_k_indices(x, 0), std::invalid_argument);
  CHECK_THROWS_AS(top_k_indices(x, 5), std::invalid_argument);

  // brute-force sort oracle over 200 random vectors
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(64);
    for (double& e : v) e = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    auto got = top_k_indices(v, 8);
    std::vector<int64_t> order(64);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&v](int64_t a, int64_t b) { return v[a] > v[b]; });
    std::vector<int64_t> expect(order.begin(), order.begin() + 8);
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
  }
}

TEST_CASE("top_k_indices permutation consistency") {
  std::mt19937_64 rng(9);
  std::vector<double> v(16);
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.37 + 0.01;  // distinct
  std::vector<int64_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  std::vector<double> pv(16);
  for (size_t i = 0; i < v.size(); ++i) pv[static_cast<size_t>(perm[i])] = v[i];

  auto sel = top_k_indices(v, 5);
  auto psel = top_k_indices(pv, 5);
  std::vector<int64_t> mapped;
  for (int64_t i : sel) mapped.push_back(perm[static_cast<size_t>(i)]);
  std::sort(mapped.begin(), mapped.end());
  CHECK(mapped == psel);
}

TEST_CASE("cross_entropy values and gradient") {
  // aligned one-hot with a huge margin
  Tensor aligned({1, 4}, {100.0, 0.0, 0.0, 0.0});
  std::vector<int> t0{0};
  std::vector<double> m1{1.0};
  CHECK(cross_entropy(aligned, t0, m1).item() == doctest::Approx(0.0).epsilon(1e-12));

  // uniform logits, V=4
  Tensor uniform({1, 4}, {0.5, 0.5, 0.5, 0.5});
  std::vector<int> t2{2};
  CHECK(cross_entropy(uniform, t2, m1).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  std::mt19937_64 rng(13);
  Tensor logits = random_tensor(rng, {3, 5}, -2.0, 2.0);
  std::vector<int> targets{1, 4, 0};
  std::vector<double> mask{1.0, 0.5, 1.0};
  auto res = grad_check({logits}, [&](const std::vector<Tensor>& in) {
    return cross_entropy(in[0], targets, mask);
  });
  CHECK(res.max_rel_err < kGradTol);

  std::vector<double> zero_mask{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(cross_entropy(logits, targets, zero_mask), std::invalid_argument);
  std::vector<int> bad_targets{1, 9, 0};
  CHECK_THROWS_AS(cross_entropy(logits, bad_targets, mask), std::invalid_argument);
}

TEST_CASE("elementwise and structural primitives match finite differences") {
  std::mt19937_64 rng(21);
  for (uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 r2(100 + seed);
    Tensor a = random_tensor(r2, {4, 6});
    Tensor b = random_tensor(r2, {4, 6});
    Tensor bias = random_tensor(r2, {6});
    Tensor gain = random_tensor(r2, {6}, 0.5, 1.5);
    Tensor wv = random_tensor(r2, {4, 6});

    auto check = [&](const char* name, const rlns::testing::LossFn& f, std::vector<Tensor> inputs) {
      auto res = grad_check(std::move(inputs), f);
      INFO(name);
      CHECK(res.max_rel_err < kGradTol);
    };

    check("add", [&](const std::vector<Tensor>& in) { return weighted_sum(add(in[0], in[1]), wv); }, {a, b});
    check("mul", [&](const std::vector<Tensor>& in) { return weighted_sum(mul(in[0], in[1]), wv); }, {a, b});
    check("scale", [&](const std::vector<Tensor>& in) { return weighted_sum(scale(in[0], 1.7), wv); }, {a});
    check("add_rows", [&](const std::vector<Tensor>& in) { return weighted_sum(add_rows(in[0], in[1]), wv); },
          {a, bias});
    check("silu", [&](const std::vector<Tensor>& in) { return weighted_sum(silu(in[0]), wv); }, {a});
    check("gelu", [&](const std::vector<Tensor>& in) { return weighted_sum(gelu(in[0]), wv); }, {a});
    check("rms_norm", [&](const std::vector<Tensor>& in) { return weighted_sum(rms_norm(in[0], in[1]), wv); },
          {a, gain});

    Tensor wt = random_tensor(r2, {6, 4});
    check("transpose", [&](const std::vector<Tensor>& in) { return weighted_sum(transpose(in[0]), wt); }, {a});
    Tensor wr = random_tensor(r2, {24});
    check("reshape", [&](const std::vector<Tensor>& in) { return weighted_sum(reshape(in[0], {24}), wr); }, {a});

    Tensor wcat = random_tensor(r2, {4, 12});
    check("concat_cols", [&](const std::vector<Tensor>& in) { return weighted_sum(concat({in[0], in[1]}, 1), wcat); },
          {a, b});
    Tensor wcat0 = random_tensor(r2, {8, 6});
    check("concat_rows", [&](const std::vector<Tensor>& in) { return weighted_sum(concat({in[0], in[1]}, 0), wcat0); },
          {a, b});

    std::vector<int64_t> idx{3, 0, 3};
    Tensor wtake = random_tensor(r2, {3, 6});
    check("take_rows", [&](const std::vector<Tensor>& in) { return weighted_sum(take_rows(in[0], idx), wtake); },
          {a});
    Tensor rows = random_tensor(r2, {3, 6});
    Tensor wsc = random_tensor(r2, {5, 6});
    check("scatter_rows",
          [&](const std::vector<Tensor>& in) { return weighted_sum(scatter_rows(in[0], idx, 5), wsc); }, {rows});
    std::vector<int64_t> flat{0, 7, 13, 13};
    Tensor wel = random_tensor(r2, {4});
    check("take_elems", [&](const std::vector<Tensor>& in) { return weighted_sum(take_elems(in[0], flat), wel); },
          {a});
    Tensor rw = random_tensor(r2, {4}, 0.1, 1.0);
    check("scale_rows", [&](const std::vector<Tensor>& in) { return weighted_sum(scale_rows(in[0], in[1]), wv); },
          {a, rw});
    Tensor wm = random_tensor(r2, {6});
    check("mean_over_rows",
          [&](const std::vector<Tensor>& in) { return weighted_sum(mean_over_rows(in[0]), wm); }, {a});

    std::vector<int> ids{2, 0, 2, 1};
    Tensor table = random_tensor(r2, {3, 6});
    check("embedding", [&](const std::vector<Tensor>& in) { return weighted_sum(embedding(in[0], ids), wv); },
          {table});

    Tensor sm = random_tensor(r2, {4, 6});
    check("softmax_rows", [&](const std::vector<Tensor>& in) { return weighted_sum(softmax(in[0], 1), wv); }, {sm});

    std::vector<uint8_t> mask(24, 0);
    for (size_t i = 0; i < mask.size(); i += 2) mask[i] = 1;
    check("masked_softmax",
          [&](const std::vector<Tensor>& in) { return weighted_sum(masked_softmax_rows(in[0], mask), wv); }, {sm});
  }
  (void)rng;
}

TEST_CASE("causal attention matches finite differences and row-stochastic output") {
  std::mt19937_64 rng(31);
  Tensor q = random_tensor(rng, {5, 3});
  Tensor k = random_tensor(rng, {5, 3});
  Tensor v = random_tensor(rng, {5, 3});
  Tensor w = random_tensor(rng, {5, 3});

  auto [out, probs] = causal_attention(q, k, v);
  for (int64_t i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (int64_t j = 0; j < 5; ++j) {
      if (j > i) CHECK(probs.at(i, j) == 0.0);
      sum += probs.at(i, j);
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }

  auto res = grad_check({q, k, v}, [&w](const std::vector<Tensor>& in) {
    auto [o, p] = causal_attention(in[0], in[1], in[2]);
    return weighted_sum(o, w);
  });
  CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("masked softmax zeroes masked entries exactly") {
  Tensor x({1, 4}, {5.0, 1.0, 8.0, 2.0});
  std::vector<uint8_t> mask{1, 0, 1, 0};
  Tensor y = masked_softmax_rows(x, mask);
  CHECK(y.data()[1] == 0.0);
  CHECK(y.data()[3] == 0.0);
  CHECK(y.data()[0] + y.data()[2] == doctest::Approx(1.0).epsilon(1e-15));
  // empty support row
  std::vector<uint8_t> none{0, 0, 0, 0};
  Tensor z = masked_softmax_rows(x, none);
  for (double vv : z.data()) CHECK(vv == 0.0);
}

TEST_CASE("backward twice accumulates exactly twice the gradient") {
  std::mt19937_64 rng(41);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor b = random_tensor(rng, {3, 3});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum_all(matmul(a, b));
  tape.backward(loss);
  std::vector<double> once(a.grad().begin(), a.grad().end());
  tape.backward(loss);
  for (size_t i = 0; i < once.size(); ++i) {
    CHECK(a.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));
  }
}

TEST_CASE("gradients land in a sink when one is installed") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum_all(matmul(a, b));
  GradSink sink;
  tape.backward(loss, &sink);
  CHECK(!a.has_grad());
  CHECK(!b.has_grad());
  CHECK(sink.buffers.size() == 2);
  // dL/da = ones * b^T
  const auto& da = sink.buffers.at(a.impl());
  CHECK(da[0] == doctest::Approx(11.0));
  CHECK(da[1] == doctest::Approx(15.0));
}

TEST_CASE("identical inputs produce bit-identical reductions") {
  std::mt19937_64 rng(55);
  Tensor a = random_tensor(rng, {7, 9});
  Tensor b = random_tensor(rng, {9, 4});
  Tensor r1 = matmul(a, b);
  Tensor r2 = matmul(a, b);
  for (int64_t i = 0; i < r1.numel(); ++i) CHECK(r1.data()[i] == r2.data()[i]);
  Tensor s1 = softmax(r1, 1);
  Tensor s2 = softmax(r2, 1);
  for (int64_t i = 0; i < s1.numel(); ++i) CHECK(s1.data()[i] == s2.data()[i]);
}

TEST_CASE("tensor finiteness check is explicit") {
  Tensor t({2}, {1.0, 2.0});
  CHECK(t.all_finite());
  t.data()[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK(!t.all_finite());
}
