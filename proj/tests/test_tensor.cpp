#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "commgate/optim.hpp"
#include "commgate/tensor.hpp"

using namespace commgate;

namespace {

TensorPtr matrix_of(std::vector<std::vector<double>> rows, bool track = false,
                    const std::string& name = "") {
  int m = static_cast<int>(rows.size());
  int n = static_cast<int>(rows[0].size());
  auto t = tensor({m, n}, track, name);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) t->at(r, c) = rows[r][c];
  return t;
}

TensorPtr sum_all(Tape* tape, const TensorPtr& v) {
  auto w = matrix_of({std::vector<double>(static_cast<size_t>(v->size()), 1.0)});
  auto b = tensor({1});
  return affine(tape, w, b, v);
}

}  // namespace

TEST_CASE("affine examples") {
  auto identity = matrix_of({{1, 0}, {0, 1}});
  auto zero_b = tensor({2});
  CHECK(affine(nullptr, identity, zero_b, tensor_of({1, 0}))->data ==
        std::vector<double>{1, 0});

  auto w = matrix_of({{7, -2}, {4, 9}});
  CHECK(affine(nullptr, w, tensor_of({3, -1}), tensor_of({0, 0}))->data ==
        std::vector<double>{3, -1});

  auto w2 = matrix_of({{1, 1}, {0, 1}});
  CHECK(affine(nullptr, w2, zero_b, tensor_of({1, 2}))->data ==
        std::vector<double>{3, 2});

  CHECK_THROWS_AS(affine(nullptr, w2, zero_b, tensor_of({1, 2, 3})), ConfigError);
}

TEST_CASE("affine backward matches finite differences") {
  Rng rng(3);
  auto w = tensor({3, 4}, true, "w");
  auto b = tensor({3}, true, "b");
  auto x = tensor({4}, true, "x");
  init_uniform_fan_in(*w, 4, rng);
  init_uniform_fan_in(*b, 1, rng);
  init_uniform_fan_in(*x, 1, rng);

  auto f = [&] { return sum_all(nullptr, affine(nullptr, w, b, x))->data[0]; };
  Tape tape;
  auto loss = sum_all(&tape, affine(&tape, w, b, x));
  tape.backward(loss);
  CHECK(finite_diff_check(f, {w, b, x}, 1e-5) < 1e-6);
}

TEST_CASE("lstm zero parameters zero state") {
  Rng rng(1);
  LstmParams p = LstmParams::init(3, 4, rng, "lstm");
  for (auto& t : {p.w_input, p.w_hidden, p.bias})
    std::fill(t->data.begin(), t->data.end(), 0.0);
  auto [h, c] = lstm_step(nullptr, p, tensor_of({5, -2, 1}), tensor({4}), tensor({4}));
  for (double v : h->data) CHECK(v == 0.0);
  for (double v : c->data) CHECK(v == 0.0);
}

TEST_CASE("lstm determinism") {
  Rng rng(7);
  LstmParams p = LstmParams::init(3, 4, rng, "lstm");
  auto x = tensor_of({0.3, -0.7, 0.2});
  auto h0 = tensor_of({0.1, 0.2, -0.1, 0.4});
  auto c0 = tensor_of({-0.5, 0.2, 0.0, 0.9});
  auto [h1, c1] = lstm_step(nullptr, p, x, h0, c0);
  auto [h2, c2] = lstm_step(nullptr, p, x, h0, c0);
  CHECK(h1->data == h2->data);
  CHECK(c1->data == c2->data);
}

TEST_CASE("lstm gradient vs central differences") {
  Rng rng(17);
  LstmParams p = LstmParams::init(3, 5, rng, "lstm");
  auto x = tensor({3}, true, "x");
  auto h0 = tensor({5}, true, "h0");
  auto c0 = tensor({5}, true, "c0");
  init_uniform_fan_in(*x, 1, rng);
  init_uniform_fan_in(*h0, 1, rng);
  init_uniform_fan_in(*c0, 1, rng);
  std::vector<TensorPtr> params = {p.w_input, p.w_hidden, p.bias, x, h0, c0};

  auto forward = [&](Tape* tape) {
    auto [h1, c1] = lstm_step(tape, p, x, h0, c0);
    auto [h2, c2] = lstm_step(tape, p, x, h1, c1);  // two steps: BPTT through cache
    return sum_all(tape, h2);
  };
  Tape tape;
  auto loss = forward(&tape);
  tape.backward(loss);
  auto f = [&] { return forward(nullptr)->data[0]; };
  CHECK(finite_diff_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("softmax-derived ops gradients") {
  Rng rng(23);
  auto logits = tensor({6}, true, "logits");
  init_uniform_fan_in(*logits, 1, rng);
  for (auto& v : logits->data) v *= 3.0;

  SUBCASE("log_prob_index") {
    Tape tape;
    auto lp = log_prob_index(&tape, logits, 2);
    tape.backward(lp);
    auto f = [&] { return log_prob_index(nullptr, logits, 2)->data[0]; };
    CHECK(finite_diff_check(f, {logits}, 1e-6) < 1e-6);
  }
  SUBCASE("entropy") {
    Tape tape;
    auto h = entropy(&tape, logits);
    tape.backward(h);
    auto f = [&] { return entropy(nullptr, logits)->data[0]; };
    CHECK(finite_diff_check(f, {logits}, 1e-6) < 1e-6);
  }
  SUBCASE("softmax probabilities sum to one") {
    auto p = softmax(nullptr, logits);
    double sum = 0.0;
    for (double v : p->data) sum += v;
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("gumbel straight-through sampling statistics") {
  Rng rng(31);
  SUBCASE("extreme logits pick index 0") {
    auto logits = tensor_of({10, -10});
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      double g0 = logits->data[0] + rng.gumbel();
      double g1 = logits->data[1] + rng.gumbel();
      hits += g0 > g1 ? 1 : 0;
    }
    CHECK(hits >= 9990);  // > 0.999 up to MC noise
  }
  SUBCASE("uniform logits are uniform") {
    const int n = 4, trials = 100000;
    auto logits = tensor({n});
    std::vector<int> counts(n, 0);
    for (int i = 0; i < trials; ++i) {
      int best = 0;
      double bestv = -1e300;
      for (int k = 0; k < n; ++k) {
        double v = rng.gumbel();
        if (v > bestv) { bestv = v; best = k; }
      }
      counts[best] += 1;
    }
    double p = 1.0 / n;
    double sigma = std::sqrt(p * (1 - p) * trials);
    for (int k = 0; k < n; ++k)
      CHECK(std::fabs(counts[k] - p * trials) <= 3 * sigma);
  }
}

TEST_CASE("straight-through backward equals the soft path") {
  Rng rng(37);
  auto logits = tensor({5}, true, "logits");
  init_uniform_fan_in(*logits, 1, rng);
  std::vector<double> noise(5);
  for (auto& g : noise) g = rng.gumbel();
  auto downstream = tensor({5});
  init_uniform_fan_in(*downstream, 1, rng);

  auto run = [&](bool soft_forward) {
    logits->zero_grad();
    Tape tape;
    auto w = st_onehot(&tape, logits, 0.7, noise, 2, soft_forward);
    std::vector<std::pair<TensorPtr, double>> terms;
    for (int i = 0; i < 5; ++i) {
      auto wi = affine(&tape, matrix_of({{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0,
                                          i == 2 ? 1.0 : 0.0, i == 3 ? 1.0 : 0.0,
                                          i == 4 ? 1.0 : 0.0}}),
                       tensor({1}), w);
      terms.emplace_back(wi, downstream->data[i]);
    }
    auto loss = weighted_sum(&tape, terms);
    tape.backward(loss);
    return logits->grad;
  };
  auto hard_grads = run(false);
  auto soft_grads = run(true);
  for (int i = 0; i < 5; ++i)
    CHECK(hard_grads[i] == doctest::Approx(soft_grads[i]).epsilon(1e-12));

  // And the soft path itself is correct against finite differences (weighted
  // so the scalar is not the constant sum of softmax weights).
  auto weights = matrix_of({{0.3, -1.2, 2.0, 0.7, -0.4}});
  auto project = [&](Tape* tape) {
    auto w = st_onehot(tape, logits, 0.7, noise, 2, true);
    return affine(tape, weights, tensor({1}), w);
  };
  logits->zero_grad();
  Tape tape;
  auto loss = project(&tape);
  tape.backward(loss);
  auto f = [&] { return project(nullptr)->data[0]; };
  CHECK(finite_diff_check(f, {logits}, 1e-6) < 1e-6);
}

TEST_CASE("distance logits and row combo gradients") {
  Rng rng(41);
  auto m = tensor({3}, true, "m");
  auto bank = tensor({4, 3}, true, "bank");
  init_uniform_fan_in(*m, 1, rng);
  init_uniform_fan_in(*bank, 3, rng);
  std::vector<double> noise(4);
  for (auto& g : noise) g = rng.gumbel();

  auto forward = [&](Tape* tape) {
    auto logits = distance_logits(tape, m, bank, 0.9);
    auto w = st_onehot(tape, logits, 0.9, noise, 1, true);  // soft forward
    auto msg = rows_combo(tape, bank, w);
    return sum_all(tape, msg);
  };
  Tape tape;
  auto loss = forward(&tape);
  tape.backward(loss);
  auto f = [&] { return forward(nullptr)->data[0]; };
  CHECK(finite_diff_check(f, {m, bank}, 1e-6) < 1e-5);
}

TEST_CASE("rows_combo one-hot is a bitwise row copy") {
  Rng rng(43);
  auto bank = tensor({3, 4}, false, "bank");
  init_uniform_fan_in(*bank, 4, rng);
  auto w = tensor_of({0.0, 0.0, 1.0});
  auto msg = rows_combo(nullptr, bank, w);
  for (int j = 0; j < 4; ++j) {
    CHECK(std::memcmp(&msg->data[j], &bank->at(2, j), sizeof(double)) == 0);
  }
}

TEST_CASE("rmsprop update") {
  SUBCASE("hand-computed step") {
    auto p = tensor_of({1.0}, true, "p");
    p->grad[0] = 1.0;
    OptimizerState opt;
    opt.attach({p});
    rmsprop_update({p}, opt);
    CHECK(opt.v[0][0] == doctest::Approx(0.01));
    CHECK(p->data[0] == doctest::Approx(1.0 - 0.001 * 1.0 / (0.1 + 1e-8)));
    CHECK(p->grad[0] == 0.0);  // zeroed afterward
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto p = tensor_of({2.0, -3.0}, true, "p");
    OptimizerState opt;
    opt.attach({p});
    rmsprop_update({p}, opt);
    CHECK(p->data == std::vector<double>{2.0, -3.0});
  }
  SUBCASE("repeated identical gradients shrink the step") {
    auto p = tensor_of({0.0}, true, "p");
    OptimizerState opt;
    opt.attach({p});
    p->grad[0] = 1.0;
    rmsprop_update({p}, opt);
    double step1 = std::fabs(p->data[0]);
    double before = p->data[0];
    p->grad[0] = 1.0;
    rmsprop_update({p}, opt);
    double step2 = std::fabs(p->data[0] - before);
    CHECK(step2 < step1);
  }
}

TEST_CASE("finite_diff_check basics") {
  auto theta = tensor_of({3.0}, true, "theta");
  auto f = [&] { return theta->data[0] * theta->data[0]; };
  theta->grad[0] = 6.0;  // analytic d/dtheta of theta^2 at 3
  CHECK(finite_diff_check(f, {theta}, 1e-5) < 1e-6);

  auto c = tensor_of({1.0}, true, "c");
  auto g = [&] { return 42.0; };
  c->grad[0] = 0.0;
  CHECK(finite_diff_check(g, {c}, 1e-5) == doctest::Approx(0.0));
}

TEST_CASE("randomized small-shape gradient property") {
  Rng rng(59);
  for (int trial = 0; trial < 5; ++trial) {
    int din = 2 + rng.uniform_int(6);
    int hidden = 2 + rng.uniform_int(6);
    LstmParams p = LstmParams::init(din, hidden, rng, "lstm");
    auto w_out = tensor({3, hidden}, true, "w_out");
    auto b_out = tensor({3}, true, "b_out");
    auto w_val = tensor({1, hidden}, true, "w_val");
    auto b_val = tensor({1}, true, "b_val");
    init_uniform_fan_in(*w_out, hidden, rng);
    init_uniform_fan_in(*w_val, hidden, rng);
    auto x = tensor({din});
    init_uniform_fan_in(*x, 1, rng);

    auto forward = [&](Tape* tape) {
      auto [h, c] = lstm_step(tape, p, x, tensor({hidden}), tensor({hidden}));
      (void)c;
      auto logits = affine(tape, w_out, b_out, h);
      std::vector<std::pair<TensorPtr, double>> terms = {
          {log_prob_index(tape, logits, 1), 0.7},
          {entropy(tape, logits), -0.01},
          {square_error(tape, affine(tape, w_val, b_val, h), 0.5), 0.5}};
      return weighted_sum(tape, terms);
    };
    Tape tape;
    auto loss = forward(&tape);
    tape.backward(loss);
    std::vector<TensorPtr> params = {p.w_input, p.w_hidden, p.bias, w_out, b_out,
                                     w_val, b_val};
    auto f = [&] { return forward(nullptr)->data[0]; };
    CHECK(finite_diff_check(f, params, 1e-5) < 1e-4);
  }
}
