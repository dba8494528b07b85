#include <gtest/gtest.h>

#include <fundiff/core/gradcheck.hpp>
#include <fundiff/core/io.hpp>
#include <fundiff/core/optim.hpp>

using namespace fundiff;
using ad::Var;

TEST(Autodiff, SquareDerivative) {
  Var x = ad::leaf(Tensor::scalar(3.0));
  EXPECT_DOUBLE_EQ(ad::grad(ad::mul(x, x), x).item(), 6.0);
}

TEST(Autodiff, SumGradientIsOnes) {
  Var x = ad::leaf(Tensor::vector({0.5, -2.0, 3.0, 7.0}));
  EXPECT_EQ(ad::grad(ad::sum(x), x).value(), Tensor::ones({4}));
}

TEST(Autodiff, ForwardValueUnaffectedByGradRequest) {
  Rng rng = make_rng(1);
  Tensor a = randn({3, 4}, rng);
  Var with = ad::gelu(ad::leaf(a));
  ad::NoGradGuard ng;
  Var without = ad::gelu(ad::constant(a));
  EXPECT_EQ(with.value(), without.value());
}

TEST(Autodiff, ShapeErrorNamesBothShapes) {
  Var a = ad::constant(Tensor({2, 3}));
  Var b = ad::constant(Tensor({4, 5}));
  try {
    ad::add(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(4, 5)"), std::string::npos);
  }
}

TEST(Autodiff, NonFiniteErrorNamesNode) {
  ad::NameScope scope("encoder");
  Var x = ad::leaf(Tensor::vector({-1.0}));
  try {
    ad::log(x);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.node, "encoder/log");
  }
}

TEST(Autodiff, SecondDerivative) {
  Var x = ad::leaf(Tensor::vector({0.3, -1.2}));
  Var y = ad::sum(ad::mul(ad::sin(x), ad::mul(x, x)));
  Var g = ad::grad(y, x, true);
  Var h = ad::grad(ad::sum(g), x);
  for (std::size_t i = 0; i < 2; ++i) {
    const double v = x.value()[i];
    const double expect = 2 * std::sin(v) + 4 * v * std::cos(v) - v * v * std::sin(v);
    EXPECT_NEAR(h.value()[i], expect, 1e-12);
  }
}

TEST(Autodiff, TapeIsTopological) {
  Var x = ad::leaf(Tensor::vector({1.0, 2.0}));
  Var y = ad::exp(x);
  Var z = ad::mul(y, x);
  Var w = ad::add(z, y);
  const ad::Tape t = ad::Tape::record({w});
  std::map<const ad::Node*, std::size_t> pos;
  for (std::size_t i = 0; i < t.nodes().size(); ++i) pos[t.nodes()[i].node_ptr()] = i;
  EXPECT_EQ(pos.size(), 4u);
  for (const Var& v : t.nodes())
    for (const Var& in : v.node().inputs) EXPECT_LT(pos.at(in.node_ptr()), pos.at(v.node_ptr()));
}

TEST(Autodiff, DiamondGraphAccumulates) {
  Var x = ad::leaf(Tensor::scalar(2.0));
  Var y = ad::add(ad::mul(x, x), ad::mul(x, x));
  EXPECT_DOUBLE_EQ(ad::grad(y, x).item(), 8.0);
}

TEST(Gradcheck, EveryPrimitive) {
  for (const auto& c : gradcheck::primitive_cases()) {
    const auto r = gradcheck::run_case(c, 100, 11);
    EXPECT_LT(r.max_rel_err, 1e-5) << c.name;
  }
}

TEST(Gradcheck, SecondOrderThroughBackwardRules) {
  Rng rng = make_rng(5);
  gradcheck::Program f = [](const std::vector<Var>& v) {
    Var y = ad::sum(ad::mul(ad::tanh(ad::matmul(v[0], v[1])), ad::gelu(ad::matmul(v[0], v[1]))));
    return ad::grad({y}, {v[0]}, {}, true).front();
  };
  EXPECT_LT(gradcheck::check(f, {randn({2, 3}, rng), randn({3, 2}, rng)}, rng), 1e-5);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(3);
  gradcheck::Program f = [](const std::vector<Var>& v) { return ad::layer_norm(v[0], &v[1], &v[2]); };
  EXPECT_LT(gradcheck::check(f, {randn({3, 8}, rng), randn({8}, rng), randn({8}, rng)}, rng), 1e-6);
}

TEST(LayerNorm, ConstantRowIsZero) {
  Var g = ad::constant(Tensor::ones({4}));
  Var b = ad::constant(Tensor({4}));
  Var y = ad::layer_norm(ad::constant(Tensor::full({2, 4}, 3.5)), &g, &b);
  EXPECT_EQ(y.value(), Tensor({2, 4}));
}

TEST(LayerNorm, NormalizedRowUnchanged) {
  Var y = ad::layer_norm(ad::constant(Tensor::matrix(1, 2, {-1.0, 1.0})), nullptr, nullptr, 1e-300);
  EXPECT_NEAR(y.value()[0], -1.0, 1e-15);
  EXPECT_NEAR(y.value()[1], 1.0, 1e-15);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  Rng rng = make_rng(4);
  Var y = ad::layer_norm(ad::constant(randn({5, 16}, rng, 1e3)), nullptr, nullptr);
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.value().at(r, c) / 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.value().at(r, c) - m) * (y.value().at(r, c) - m) / 16;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-10);
  }
}

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng = make_rng(6);
  Var q = ad::constant(randn({3, 4}, rng));
  Var k = ad::constant(randn({1, 4}, rng));
  Var v = ad::constant(randn({1, 4}, rng));
  Tensor out = nn::scaled_dot_attention(q, k, v, 2).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.at(i, j), v.value()[j], 1e-15);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Rng rng = make_rng(7);
  Tensor krow = randn({1, 4}, rng);
  Tensor kt({5, 4});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) kt.at(i, j) = krow[j];
  Tensor vt = randn({5, 3}, rng);
  Tensor out = nn::scaled_dot_attention(ad::constant(randn({2, 4}, rng)), ad::constant(kt), ad::constant(vt), 1).value();
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < 5; ++i) m += vt.at(i, j) / 5;
    EXPECT_NEAR(out.at(0, j), m, 1e-14);
    EXPECT_NEAR(out.at(1, j), m, 1e-14);
  }
}

TEST(Attention, MatchesBruteForce) {
  Rng rng = make_rng(8);
  Tensor q = randn({2, 4}, rng), k = randn({3, 4}, rng), v = randn({3, 4}, rng);
  Tensor out = nn::scaled_dot_attention(ad::constant(q), ad::constant(k), ad::constant(v), 1).value();
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> w(3);
    double z = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += q.at(i, c) * k.at(j, c);
      w[j] = std::exp(s / 2.0);
      z += w[j];
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < 3; ++j) o += w[j] / z * v.at(j, c);
      EXPECT_NEAR(out.at(i, c), o, 1e-12);
    }
  }
}

TEST(Attention, HeadsMustDivideWidth) {
  Var x = ad::constant(Tensor({2, 6}));
  EXPECT_THROW(nn::scaled_dot_attention(x, x, x, 4), ConfigError);
}

TEST(Attention, WeightsAreConvex) {
  Rng rng = make_rng(9);
  Var logits = ad::constant(randn({6, 5}, rng, 10.0));
  Tensor w = ad::softmax(logits).value();
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_GE(w.at(i, j), 0.0);
      s += w.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

namespace {
nn::ParamStore one_param(Tensor t) {
  nn::ParamStore ps;
  ps.add("w", std::move(t));
  return ps;
}
}  // namespace

TEST(AdamW, ZeroGradientIsPureDecay) {
  auto ps = one_param(Tensor::vector({1.0, -2.0}));
  optim::AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  optim::adamw_step(ps, {{"w", Tensor({2})}}, 0.01, cfg);
  EXPECT_DOUBLE_EQ(ps.value("w")[0], 1.0 * (1 - 0.01 * 0.1));
  EXPECT_DOUBLE_EQ(ps.value("w")[1], -2.0 * (1 - 0.01 * 0.1));
}

TEST(AdamW, FirstStepByHand) {
  auto ps = one_param(Tensor::vector({0.5}));
  optim::AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  const double g = 0.3, lr = 1e-2;
  optim::adamw_step(ps, {{"w", Tensor::vector({g})}}, lr, cfg);
  const double m = (1 - cfg.beta1) * g, v = (1 - cfg.beta2) * g * g;
  const double mhat = m / (1 - cfg.beta1), vhat = v / (1 - cfg.beta2);
  EXPECT_DOUBLE_EQ(ps.get("w").m[0], m);
  EXPECT_DOUBLE_EQ(ps.get("w").v[0], v);
  EXPECT_NEAR(ps.value("w")[0], 0.5 - lr * mhat / (std::sqrt(vhat) + cfg.eps), 1e-15);
  EXPECT_EQ(ps.step(), 1u);
}

TEST(AdamW, Deterministic) {
  Rng rng = make_rng(10);
  Tensor init = randn({3, 3}, rng), g = randn({3, 3}, rng);
  auto a = one_param(init), b = one_param(init);
  for (int i = 0; i < 3; ++i) {
    optim::adamw_step(a, {{"w", g}}, 1e-3);
    optim::adamw_step(b, {{"w", g}}, 1e-3);
  }
  EXPECT_EQ(a.value("w"), b.value("w"));
}

TEST(AdamW, NonFiniteGradientAbortsStep) {
  nn::ParamStore ps;
  ps.add("a", Tensor::vector({1.0}));
  ps.add("b", Tensor::vector({1.0}));
  EXPECT_THROW(optim::adamw_step(ps, {{"a", Tensor::vector({1.0})}, {"b", Tensor::vector({NAN})}}, 0.1), NonFiniteError);
  EXPECT_EQ(ps.value("a")[0], 1.0);
  EXPECT_EQ(ps.step(), 0u);
}

TEST(Schedule, WarmupAndDecay) {
  EXPECT_EQ(optim::lr_schedule(0, 1e-3, 2000, 2000, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(optim::lr_schedule(1000, 1e-3, 2000, 2000, 0.9), 5e-4);
  EXPECT_DOUBLE_EQ(optim::lr_schedule(2000, 1e-3, 2000, 2000, 0.9), 1e-3);
  EXPECT_DOUBLE_EQ(optim::lr_schedule(3999, 1e-3, 2000, 2000, 0.9), 1e-3);
  EXPECT_DOUBLE_EQ(optim::lr_schedule(4000, 1e-3, 2000, 2000, 0.9), 9e-4);
  EXPECT_THROW(optim::lr_schedule(1, 1e-3, 0, 2000, 0.9), ConfigError);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng = make_rng(12);
  nn::ParamStore ps;
  ps.add("enc.w", randn({3, 2}, rng));
  ps.add("buf", randn({4}, rng), false);
  optim::adamw_step(ps, {{"enc.w", randn({3, 2}, rng)}}, 1e-3);
  const std::string path = ::testing::TempDir() + "ck_roundtrip.bin";
  io::save_checkpoint(path, ps, {{"kind", "test"}});
  io::Checkpoint ck = io::load_checkpoint(path);
  EXPECT_EQ(ck.params.value("enc.w"), ps.value("enc.w"));
  EXPECT_EQ(ck.params.get("enc.w").m, ps.get("enc.w").m);
  EXPECT_EQ(ck.params.get("enc.w").v, ps.get("enc.w").v);
  EXPECT_FALSE(ck.params.get("buf").trainable);
  EXPECT_EQ(ck.params.step(), 1u);
  EXPECT_EQ(ck.meta["kind"], "test");
  const std::string bytes = io::read_file(path);
  io::save_checkpoint(path, ck.params, ck.meta);
  EXPECT_EQ(io::read_file(path), bytes);
}

TEST(Checkpoint, TruncatedBlobRejected) {
  nn::ParamStore ps;
  ps.add("w", Tensor::vector({1, 2, 3}));
  const std::string path = ::testing::TempDir() + "ck_trunc.bin";
  io::save_checkpoint(path, ps, {});
  std::string blob = io::read_file(path);
  io::write_file_atomic(path, blob.substr(0, blob.size() - 8));
  EXPECT_THROW(io::load_checkpoint(path), IoError);
}
