#include <gtest/gtest.h>

#include "tmf/gradcheck.hpp"
#include "tmf/ops.hpp"

using namespace tmf;

class GradCheckSuite : public ::testing::TestWithParam<std::string> {};

TEST_P(GradCheckSuite, AnalyticMatchesCentralDifferences) {
  const GradCheckResult r = run_gradcheck(GetParam());
  EXPECT_TRUE(r.passed) << r.name << " max rel err " << r.max_rel_error << " at " << r.worst;
  EXPECT_LE(r.max_rel_error, 1e-3);
  EXPECT_GT(r.probes, 0);
}

INSTANTIATE_TEST_SUITE_P(Registry, GradCheckSuite, ::testing::ValuesIn(gradcheck_names()),
                         [](const auto& info) { return info.param; });

TEST(GradCheck, CoversRequiredOps) {
  for (const char* name : {"nbp", "tmp_forward", "pixel_shuffle", "glf_generate_kernels", "glf_spatial_fusion",
                           "glf_forward", "static_fusion", "ppm_forward", "alpha_loss", "composition_loss",
                           "laplacian_loss", "total_loss", "toy_network"}) {
    EXPECT_TRUE(has_gradcheck(name)) << name;
  }
}

TEST(GradCheck, UnknownNameThrows) { EXPECT_THROW(run_gradcheck("no_such_op"), std::out_of_range); }

TEST(GradCheck, DetectsWrongGradient) {
  // The detached factor hides half of d(x^2)/dx from the tape.
  const TensorD x(Shape{1, 1, 2, 2}, std::vector<double>{0.5, -1.0, 2.0, 1.5});
  const auto r = check_gradients("half_square", [x] { return mul(x, x.detach()); }, {{"x", x}});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 0.4);
}
