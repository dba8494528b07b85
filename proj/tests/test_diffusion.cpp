#include <gtest/gtest.h>

#include <fundiff/diffusion/flow.hpp>

using namespace fundiff;
using namespace fundiff::diffusion;

namespace {

DiTConfig small(std::size_t N = 4, std::size_t D = 8) {
  DiTConfig c;
  c.tokens = N;
  c.token_dim = D;
  c.hidden_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_width = 32;
  c.time_embed_dim = 16;
  return c;
}

}  // namespace

TEST(AdaLNZero, FreshBlockIsIdentity) {
  Rng rng = make_rng(1);
  DiT dit{small()};
  auto ps = dit.init(rng);
  Var x = ad::constant(randn({3, 4, 16}, rng));
  Var c = dit.time_embedding(ps, rand_uniform({3}, rng));
  EXPECT_EQ(dit.block_forward(ps, 0, x, c).value(), x.value());
}

TEST(AdaLNZero, UnitGatesWithZeroSubnetworksIsIdentity) {
  Rng rng = make_rng(2);
  DiT dit{small()};
  auto ps = dit.init(rng);
  Tensor& bias = ps.value("dit.blocks.0.adaln.bias");
  for (std::size_t k : {2u, 5u})
    for (std::size_t i = 0; i < 16; ++i) bias[k * 16 + i] = 1.0;
  for (const char* n : {"dit.blocks.0.attn.o.weight", "dit.blocks.0.attn.o.bias", "dit.blocks.0.mlp.fc2.weight",
                        "dit.blocks.0.mlp.fc2.bias"})
    ps.value(n) = Tensor(ps.value(n).shape());
  Var x = ad::constant(randn({2, 4, 16}, rng));
  Var c = dit.time_embedding(ps, rand_uniform({2}, rng));
  EXPECT_EQ(dit.block_forward(ps, 0, x, c).value(), x.value());
}

TEST(AdaLNZero, GateGradientNonzeroAtInit) {
  Rng rng = make_rng(3);
  DiT dit{small()};
  auto ps = dit.init(rng);
  Var x = ad::constant(randn({2, 4, 16}, rng));
  const Tensor tau = rand_uniform({2}, rng);
  auto [value, grads] = nn::evaluate_with_gradients(
      [&](const nn::ParamStore& p) { return ad::sum(ad::square(dit.block_forward(p, 0, x, dit.time_embedding(p, tau)))); }, ps);
  const Tensor& gb = grads.at("dit.blocks.0.adaln.bias");
  double gate = 0;
  for (std::size_t i = 0; i < 16; ++i) gate = std::max(gate, std::abs(gb[2 * 16 + i]));
  EXPECT_GT(gate, 1e-6);
}

TEST(DiTVelocity, ZeroAtInitAndShapes) {
  for (std::size_t N : {4u, 16u})
    for (std::size_t D : {8u, 32u}) {
      Rng rng = make_rng(4);
      DiT dit{small(N, D)};
      auto ps = dit.init(rng);
      Tensor z = randn({2, N, D}, rng);
      Tensor g = dit.velocity(ps, z, 0.37);
      EXPECT_EQ(g.shape(), z.shape());
      EXPECT_EQ(max_abs(g), 0.0);
    }
}

TEST(DiTVelocity, DeterministicAndConditionChecked) {
  Rng rng = make_rng(5);
  DiT dit{small()};
  auto ps = dit.init(rng);
  for (auto& [name, p] : ps.params()) p.var.mutable_value() = randn(p.var.shape(), rng, 0.1);
  Tensor z = randn({2, 4, 8}, rng), c = randn({2, 4, 8}, rng);
  EXPECT_EQ(dit.velocity(ps, z, 0.5, &c), dit.velocity(ps, z, 0.5, &c));
  EXPECT_GT(max_abs(dit.velocity(ps, z, 0.5)), 0.0);
  Tensor bad = randn({2, 3, 8}, rng);
  EXPECT_THROW(dit.velocity(ps, z, 0.5, &bad), ShapeError);
}

TEST(RectifiedFlow, OracleModelHasZeroLoss) {
  Rng rng = make_rng(6);
  Tensor z1 = randn({5, 4, 8}, rng);
  RfDraw d = draw_rf(z1.shape(), rng);
  VelocityModel oracle = [&](const Var&, const Tensor&, const Var*) {
    return ad::constant(kernels::binary(z1, d.z0, std::minus<>()));
  };
  EXPECT_EQ(rf_training_loss(oracle, z1, d).item(), 0.0);
}

TEST(RectifiedFlow, ZeroModelLossIsMeanSquaredGap) {
  Rng rng = make_rng(7);
  Tensor z1 = randn({5, 4, 8}, rng);
  RfDraw d = draw_rf(z1.shape(), rng);
  VelocityModel zero = [](const Var& z, const Tensor&, const Var*) { return ad::constant(Tensor(z.shape())); };
  double expect = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < 32; ++i) s += std::pow(z1[b * 32 + i] - d.z0[b * 32 + i], 2);
    expect += s / 5;
  }
  EXPECT_NEAR(rf_training_loss(zero, z1, d).item(), expect, 1e-12);
}

TEST(RectifiedFlow, InterpolationEndpointsAndDerivative) {
  Rng rng = make_rng(8);
  Tensor z1 = randn({2, 3, 2}, rng), z0 = randn({2, 3, 2}, rng);
  EXPECT_EQ(interpolate(ad::constant(z1), ad::constant(z0), ad::constant(Tensor({2}))).value(), z1);
  EXPECT_EQ(interpolate(ad::constant(z1), ad::constant(z0), ad::constant(Tensor::ones({2}))).value(), z0);
  // dz_tau/dtau = z0 - z1 for every sample: probe with a unit seed per element.
  Var tau = ad::leaf(Tensor::vector({0.3, 0.8}));
  Var zt = interpolate(ad::constant(z1), ad::constant(z0), tau);
  for (std::size_t i = 0; i < zt.size(); ++i) {
    Tensor seed(zt.shape());
    seed[i] = 1.0;
    Tensor g = ad::grad({zt}, {tau}, {ad::constant(seed)}).front().value();
    EXPECT_NEAR(g[i / 6], z0[i] - z1[i], 1e-15);
  }
}

TEST(Conditioning, AdditiveIdentities) {
  Rng rng = make_rng(9);
  Tensor z = randn({4, 8}, rng), ec = randn({4, 8}, rng), zero({4, 8});
  EXPECT_EQ(condition_latent(z, zero), z);
  EXPECT_EQ(condition_latent(condition_latent(z, ec), zero), condition_latent(z, ec));
  Tensor zc = condition_latent(z, ec);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(zc[i], z[i] + ec[i]);
  EXPECT_THROW(condition_latent(z, Tensor({3, 8})), ShapeError);
}

TEST(Sampler, ConstantAndZeroFields) {
  Rng rng = make_rng(10);
  Tensor z = randn({2, 3}, rng);
  Tensor v = randn({2, 3}, rng);
  for (auto integ : {Integrator::euler, Integrator::heun, Integrator::rk4})
    for (std::size_t steps : {1u, 7u}) {
      Tensor out = sample_ode([&](const Tensor&, double) { return v; }, {steps, integ}, z);
      for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(out[i], z[i] + v[i], 1e-14);
      EXPECT_EQ(sample_ode([](const Tensor& x, double) { return Tensor(x.shape()); }, {steps, integ}, z), z);
    }
}

TEST(Sampler, LinearStubMatchesClosedForm) {
  Tensor z = Tensor::vector({1.0, -2.0});
  VelocityFn lin = [](const Tensor& x, double) { return kernels::unary(x, [](double v) { return -v; }); };
  Tensor out = sample_ode(lin, {1000, Integrator::euler}, z);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out[i], z[i] * std::exp(-1.0), 1e-2);
}

TEST(Sampler, ConvergesAtNominalOrder) {
  // dz/ds = -z + s-dependence through tau: g = -z * (1 + tau), exact z(1) = z0 * exp(-1.5).
  VelocityFn g = [](const Tensor& x, double tau) { return kernels::unary(x, [tau](double v) { return -v * (1 + tau); }); };
  const Tensor z = Tensor::vector({1.0});
  const double exact = std::exp(-1.5);
  for (auto [integ, order] : {std::pair{Integrator::euler, 1.0}, {Integrator::heun, 2.0}, {Integrator::rk4, 4.0}}) {
    const double e1 = std::abs(sample_ode(g, {8, integ}, z)[0] - exact);
    const double e2 = std::abs(sample_ode(g, {16, integ}, z)[0] - exact);
    EXPECT_NEAR(std::log2(e1 / e2), order, 0.25);
  }
}

TEST(Sampler, NonFiniteStateReportsStep) {
  VelocityFn blow = [](const Tensor& x, double) { return kernels::unary(x, [](double v) { return v * 1e300; }); };
  try {
    sample_ode(blow, {5, Integrator::euler}, Tensor::vector({1.0}));
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
  }
}

TEST(Sampler, UntrainedOneStepReturnsNoise) {
  Rng rng = make_rng(11);
  DiT dit{small()};
  auto ps = dit.init(rng);
  Rng a = make_rng(5), b = make_rng(5);
  Tensor s = sample_latents(dit, ps, {1, Integrator::euler}, 3, a);
  EXPECT_EQ(s, randn({3, 4, 8}, b));
}

TEST(TrainDiT, DeterministicFirstLossAndSchedule) {
  Rng rng = make_rng(12);
  DiT dit{small()};
  const auto init = dit.init(rng);
  LatentSet data;
  for (int i = 0; i < 4; ++i) data.z.push_back(randn({4, 8}, rng));
  data.cond.resize(4);
  DiTTrainConfig tc;
  tc.iters = 10;
  tc.batch = 4;
  tc.seed = 3;
  tc.schedule = {1e-3, 4, 4, 0.9};
  auto a = init, b = init;
  auto ra = train_dit(dit, a, data, tc), rb = train_dit(dit, b, data, tc);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(format_row(ra[i]), format_row(rb[i]));
    EXPECT_EQ(ra[i].lr, optim::lr_schedule(i + 1, tc.schedule));
  }
  const DiTBatch first = make_dit_batch(data, tc, 1);
  double gap = 0;
  for (std::size_t i = 0; i < first.z1.size(); ++i) gap += std::pow(first.z1[i] - first.draw.z0[i], 2) / 4;
  EXPECT_NEAR(ra[0].loss, gap, 1e-12);
}
