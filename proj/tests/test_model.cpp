#include <gtest/gtest.h>

#include "ebbeam/config.hpp"
#include "ebbeam/validation.hpp"
#include "reference_system.hpp"

using namespace ebbeam;

TEST(Validate, ReferenceExampleNeedsCertificate) {
  const auto report = validate(testdata::reference_system());
  EXPECT_TRUE(report.physically_valid()) << report.summary();
  EXPECT_FALSE(report.ok());
  ASSERT_NE(report.find("channel1.kyp"), nullptr);
  EXPECT_EQ(report.find("channel1.kyp")->status, CheckStatus::certificate_required);
  EXPECT_EQ(report.find("channel2.kyp")->status, CheckStatus::certificate_required);
  EXPECT_NEAR(report.find("channel1.spr_margin")->value, 0.02, 1e-12);
}

TEST(Validate, PassesOnceCertificatesAreAttached) {
  auto s = testdata::reference_system();
  const auto cert = make_certificate(s.channel1.spr, Eigen::MatrixXd::Identity(10, 10), Eigen::VectorXd::Zero(10),
                                     2.0, 0.02);
  s.channel1.certificate = cert;
  s.channel2.certificate = cert;
  const auto report = validate(s);
  EXPECT_TRUE(report.ok()) << report.summary();
}

TEST(Validate, UnstableControllerFailsHurwitz) {
  auto s = testdata::reference_system();
  s.channel1.spr.A = Eigen::MatrixXd::Identity(10, 10);
  const auto report = validate(s);
  EXPECT_EQ(report.find("channel1.hurwitz")->status, CheckStatus::fail);
  EXPECT_FALSE(report.physically_valid());
}

TEST(Validate, MassDensityVanishingAtClampFails) {
  auto s = testdata::reference_system();
  s.beam.mu = CoefficientField::polynomial(Polynomial({0.0, 1.0}), 0.0, 1.0);
  const auto report = validate(s);
  EXPECT_EQ(report.find("beam.mu.positive")->status, CheckStatus::fail);
  EXPECT_DOUBLE_EQ(report.find("beam.mu.positive")->value, 0.0);
}

TEST(Validate, NonPositiveSpringFails) {
  auto s = testdata::reference_system();
  s.channel2.spr.k = 0.0;
  EXPECT_EQ(validate(s).find("channel2.k")->status, CheckStatus::fail);
}

TEST(Validate, KinkAtBreakpointWarns) {
  auto s = testdata::reference_system();
  s.beam.lambda = CoefficientField({0.0, 0.5, 1.0}, {Polynomial({1.0}), Polynomial({1.0, 1.0})});
  const auto report = validate(s);
  const Check* c = report.find("beam.lambda.smoothness");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->status, CheckStatus::warning);
  EXPECT_TRUE(report.physically_valid());
}

TEST(Validate, IsPureAndReportsTolerances) {
  const auto s = testdata::reference_system();
  const auto a = validate(s);
  const auto b = validate(s);
  ASSERT_EQ(a.checks.size(), b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    EXPECT_EQ(a.checks[i].name, b.checks[i].name);
    EXPECT_EQ(a.checks[i].value, b.checks[i].value);
  }
  EXPECT_EQ(a.tolerances.tol_kyp, 1e-10);
  EXPECT_EQ(a.tolerances.hurwitz_margin, 1e-12);
}

TEST(Certificate, DeltaAboveDIsRejected) {
  const auto ch = testdata::reference_channel();
  EXPECT_THROW(make_certificate(ch, Eigen::MatrixXd::Identity(10, 10), Eigen::VectorXd::Zero(10), 1.0, 0.03),
               PreconditionViolation);
}

TEST(Config, MissingKeyNamesThePath) {
  nlohmann::json j = {{"beam", {{"length", 1.0}, {"tip_mass", 0.1}, {"tip_inertia", 0.1}, {"mu", 1.0}, {"lambda", 1.0}}},
                      {"channel1", {{"n", 1}, {"A", {-1.0}}, {"b", {1.0}}, {"c", {1.0}}, {"d", 0.1}, {"k", 1.0}}},
                      {"channel2", {{"n", 1}, {"A", {-1.0}}, {"b", {1.0}}, {"d", 0.1}, {"k", 1.0}}}};
  try {
    parse_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("channel2.c"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsUnclampedInitialData) {
  nlohmann::json j = {{"beam", {{"length", 1.0}, {"tip_mass", 0.1}, {"tip_inertia", 0.1}, {"mu", 1.0}, {"lambda", 1.0}}},
                      {"channel1", {{"n", 0}, {"d", 0.0}, {"k", 1.0}}},
                      {"channel2", {{"n", 0}, {"d", 0.0}, {"k", 1.0}}},
                      {"initial_condition", {{"u0", {0.0, 1.0}}}}};
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, PiecewiseFieldAndCertificateRoundTrip) {
  nlohmann::json j = {
      {"beam",
       {{"length", 2.0}, {"tip_mass", 0.1}, {"tip_inertia", 0.1},
        {"mu", {{"breakpoints", {0.0, 1.0, 2.0}}, {"coefficients", {{1.0, 1.0}, {1.0, 1.0}}}}},
        {"lambda", 2.0}}},
      {"channel1", {{"n", 1}, {"A", {-1.0}}, {"b", {10.0}}, {"c", {1.0}}, {"d", 0.02}, {"k", 0.01},
                    {"certificate", {{"P", {0.1}}, {"q", {0.0}}, {"eps", 2.0}, {"delta", 0.02}}}}},
      {"channel2", {{"n", 0}, {"d", 0.0}, {"k", 0.01}}}};
  const auto cfg = parse_config(j);
  EXPECT_NEAR(cfg.system.beam.mu(1.5), 2.5, 1e-15);
  EXPECT_NEAR(cfg.system.beam.mu(0.5), 1.5, 1e-15);
  ASSERT_TRUE(cfg.system.channel1.certificate.has_value());
  EXPECT_DOUBLE_EQ(cfg.system.channel1.certificate->P(0, 0), 0.1);
  nlohmann::json out = j;
  write_certificates(out, cfg.system);
  const auto again = parse_config(out);
  EXPECT_DOUBLE_EQ(again.system.channel1.certificate->eps, 2.0);
}
