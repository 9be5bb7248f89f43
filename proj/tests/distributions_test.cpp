#include <gtest/gtest.h>

#include <cmath>

#include "lcpvae/distributions.hpp"
#include "lcpvae/error.hpp"
#include "lcpvae/grad_check.hpp"
#include "test_support.hpp"

namespace lcpvae {
namespace {

using testing::random_tensor;

DiagGaussian gaussian(std::vector<double> mean, std::vector<double> log_std) {
  const std::size_t d = mean.size();
  return DiagGaussian::constant(Tensor::matrix(1, d, std::move(mean)), Tensor::matrix(1, d, std::move(log_std)));
}

DiagGaussian random_gaussian(std::size_t rows, std::size_t d, std::mt19937_64& rng) {
  return DiagGaussian::constant(random_tensor({rows, d}, rng, -2.0, 2.0), random_tensor({rows, d}, rng, -1.0, 1.0));
}

std::vector<double> stds(const DiagGaussian& q) {
  std::vector<double> s;
  for (double v : q.log_std.value().data()) s.push_back(std::exp(v));
  return s;
}

TEST(Reparam, StandardNormalPassesNoiseThrough) {
  const Tensor eps = Tensor::matrix(2, 3, {0.1, -0.4, 2.0, 1.0, 0.0, -3.0});
  EXPECT_TRUE(reparam_sample(DiagGaussian::standard(2, 3), eps).value().identical(eps));
}

TEST(Reparam, HandEvaluatedSample) {
  const Var z = reparam_sample(gaussian({1, 2}, {0.5, -0.5}), Tensor::row({1, -1}));
  EXPECT_DOUBLE_EQ(z.value()[0], 1.0 + std::exp(0.5));
  EXPECT_DOUBLE_EQ(z.value()[1], 2.0 - std::exp(-0.5));
}

TEST(Reparam, VanishingVarianceCollapsesToMean) {
  const Var mean = Var::constant(Tensor::row({1.5, -0.5}));
  const auto q = DiagGaussian::from_encoder(mean, Var::constant(Tensor::row({-50.0, -1e6})));
  EXPECT_EQ(q.log_std.value()[0], kMinLogStd);
  const Var z = reparam_sample(q, Tensor::row({2.0, -2.0}));
  EXPECT_NEAR(z.value()[0], 1.5, 2e-3);
  EXPECT_NEAR(z.value()[1], -0.5, 2e-3);
}

TEST(Reparam, RejectsNoiseOfWrongShape) {
  EXPECT_THROW(reparam_sample(DiagGaussian::standard(1, 3), Tensor::row({1, 2})), ShapeError);
}

TEST(ExtendedReparam, IdentityCases) {
  std::mt19937_64 rng(5);
  const auto c = random_gaussian(3, 4, rng);
  const Tensor eps = standard_normal(3, 4, rng);
  EXPECT_TRUE(extended_reparam_sample(DiagGaussian::standard(3, 4), c, eps).value().identical(
      reparam_sample(c, eps).value()));
  const auto p = random_gaussian(3, 4, rng);
  const Tensor a = extended_reparam_sample(p, DiagGaussian::standard(3, 4), eps).value();
  const Tensor b = reparam_sample(p, eps).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(ExtendedReparam, BothFactoringsAgree) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_gaussian(1, 8, rng), c = random_gaussian(1, 8, rng);
    const Tensor eps = standard_normal(1, 8, rng);
    const Tensor z = extended_reparam_sample(p, c, eps).value();
    const auto sp = stds(p), sc = stds(c);
    for (std::size_t j = 0; j < 8; ++j) {
      // z = mu + sigma * (mu_c + sigma_c * eps): sample the condition, then shift and scale.
      const double z_c = c.mean.value()[j] + sc[j] * eps[j];
      ASSERT_NEAR(z[j], p.mean.value()[j] + sp[j] * z_c, 1e-12);
    }
  }
}

TEST(KlStandardNormal, ClosedFormValues) {
  EXPECT_EQ(kl_to_standard_normal(DiagGaussian::standard(4, 3)).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(gaussian({1}, {0})).value().item(), 0.5);
}

TEST(KlStandardNormal, AveragesOverRowsAndSumsOverDimensions) {
  const auto q = DiagGaussian::constant(Tensor::matrix(2, 2, {1, 0, 0, 2}), Tensor::zeros({2, 2}));
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(q).value().item(), (0.5 + 2.0) / 2.0);
}

TEST(KlStandardNormal, MatchesMonteCarlo) {
  std::mt19937_64 rng(101);
  const auto q = random_gaussian(1, 8, rng);
  const auto est = testing::monte_carlo_kl(q.mean.value().vector(), stds(q), std::vector<double>(8, 0.0),
                                           std::vector<double>(8, 1.0), 1'000'000, rng);
  EXPECT_LE(std::abs(kl_to_standard_normal(q).value().item() - est.mean), 3.0 * est.standard_error);
}

TEST(KlDiagGaussians, SpecialisationsAndMonteCarlo) {
  std::mt19937_64 rng(202);
  const auto q = random_gaussian(1, 8, rng), p = random_gaussian(1, 8, rng);
  EXPECT_EQ(kl_diag_gaussians(q, q).value().item(), 0.0);
  EXPECT_NEAR(kl_diag_gaussians(q, DiagGaussian::standard(1, 8)).value().item(),
              kl_to_standard_normal(q).value().item(), 1e-12);
  const auto est =
      testing::monte_carlo_kl(q.mean.value().vector(), stds(q), p.mean.value().vector(), stds(p), 1'000'000, rng);
  EXPECT_LE(std::abs(kl_diag_gaussians(q, p).value().item() - est.mean), 3.0 * est.standard_error);
}

TEST(CpvaeKl, FixedPointAndSpecialisation) {
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_gaussian(2, 5, rng);
    EXPECT_NEAR(cpvae_kl(DiagGaussian::standard(2, 5), c).value().item(), 0.0, 1e-12);
    const auto p = random_gaussian(2, 5, rng);
    EXPECT_NEAR(cpvae_kl(p, DiagGaussian::standard(2, 5)).value().item(), kl_to_standard_normal(p).value().item(),
                1e-12);
  }
}

TEST(CpvaeKl, MatchesExpandedClosedForm) {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_gaussian(1, 8, rng), c = random_gaussian(1, 8, rng);
    const auto sp = stds(p), sc = stds(c);
    double expected = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double mu = p.mean.value()[i], mc = c.mean.value()[i];
      const double shift = mu + sp[i] * mc - mc;
      expected += -std::log(sp[i]) + (sp[i] * sp[i] * sc[i] * sc[i] + shift * shift) / (2.0 * sc[i] * sc[i]) - 0.5;
    }
    ASSERT_NEAR(cpvae_kl(p, c).value().item(), expected, 1e-10 * std::max(1.0, expected));
  }
}

TEST(KlProperties, NonNegativeAndZeroOnlyForEqualArguments) {
  std::mt19937_64 rng(505);
  for (int trial = 0; trial < 500; ++trial) {
    const auto q = random_gaussian(1, 4, rng), p = random_gaussian(1, 4, rng);
    ASSERT_GE(kl_diag_gaussians(q, p).value().item(), 0.0);
    ASSERT_GE(kl_to_standard_normal(q).value().item(), 0.0);
    ASSERT_GE(cpvae_kl(q, p).value().item(), 0.0);
    ASSERT_GT(kl_diag_gaussians(q, p).value().item(), 1e-12);
    ASSERT_LE(kl_diag_gaussians(q, q).value().item(), 1e-12);
  }
}

TEST(KlProperties, RejectsMismatchedShapes) {
  EXPECT_THROW(kl_diag_gaussians(DiagGaussian::standard(1, 3), DiagGaussian::standard(1, 4)), ShapeError);
  EXPECT_THROW(cpvae_kl(DiagGaussian::standard(2, 3), DiagGaussian::standard(1, 3)), ShapeError);
}

TEST(DistributionGradients, PassGradCheck) {
  std::mt19937_64 rng(606);
  std::vector<Var> params{Var::parameter(random_tensor({3, 4}, rng)), Var::parameter(random_tensor({3, 4}, rng)),
                          Var::parameter(random_tensor({3, 4}, rng)), Var::parameter(random_tensor({3, 4}, rng))};
  const Tensor eps = standard_normal(3, 4, rng);
  auto q = [&] { return DiagGaussian::from_encoder(params[0], params[1]); };
  auto c = [&] { return DiagGaussian::from_encoder(params[2], params[3]); };
  EXPECT_LT(grad_check([&] { return kl_to_standard_normal(q()); }, params).max_relative_error, 1e-5);
  EXPECT_LT(grad_check([&] { return kl_diag_gaussians(q(), c()); }, params).max_relative_error, 1e-5);
  EXPECT_LT(grad_check([&] { return cpvae_kl(q(), c()); }, params).max_relative_error, 1e-5);
  EXPECT_LT(grad_check([&] { return sum(square(extended_reparam_sample(q(), c(), eps))); }, params).max_relative_error,
            1e-5);
}

TEST(DistributionGradients, StoppedConditionalReceivesNothing) {
  std::mt19937_64 rng(707);
  const Var m = Var::parameter(random_tensor({2, 3}, rng)), s = Var::parameter(random_tensor({2, 3}, rng));
  const Var cm = Var::parameter(random_tensor({2, 3}, rng)), cs = Var::parameter(random_tensor({2, 3}, rng));
  const auto cond = DiagGaussian::from_encoder(cm, cs);
  backward(cpvae_kl(DiagGaussian::from_encoder(m, s), stop_gradient(cond)));
  for (double g : cm.grad().data()) EXPECT_EQ(g, 0.0);
  for (double g : cs.grad().data()) EXPECT_EQ(g, 0.0);
  double primary_norm = 0.0;
  for (double g : m.grad().data()) primary_norm += std::abs(g);
  EXPECT_GT(primary_norm, 0.0);
}

}  // namespace
}  // namespace lcpvae
