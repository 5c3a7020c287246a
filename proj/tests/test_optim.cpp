#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pdn/optim.hpp"

using namespace pdn;

namespace {

Param make_param(const std::string& name, std::vector<double> theta, std::vector<double> grad) {
    const auto n = static_cast<int64_t>(theta.size());
    Param p{name, Tensor::from({n}, std::move(theta))};
    p.value.grad() = std::move(grad);
    return p;
}

}  // namespace

// Hand-evaluated single step at the defaults, theta=1, g=0.5:
//   m=0.05, v=2.5e-4, m_hat=0.5, v_hat=0.25
//   theta' = 1 - lr*0.5/(0.5+eps) - lr*wd*1 ~= 0.99899
TEST(AdamW, HandOracleFirstStep) {
    std::vector<Param> params;
    params.push_back(make_param("theta", {1.0}, {0.5}));
    AdamW opt;
    opt.step(params);

    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 1e-2;
    double m = (1 - b1) * 0.5;
    double v = (1 - b2) * 0.25;
    double m_hat = m / (1 - b1);
    double v_hat = v / (1 - b2);
    double expected = 1.0 - lr * m_hat / (std::sqrt(v_hat) + eps) - lr * wd * 1.0;

    EXPECT_NEAR(params[0].value.values()[0], expected, 1e-15);
    EXPECT_NEAR(params[0].value.values()[0], 0.99899, 1e-5);
}

TEST(AdamW, ZeroGradZeroDecayIsIdentity) {
    std::vector<Param> params;
    params.push_back(make_param("w", {1.5, -0.25, 0.0}, {0.0, 0.0, 0.0}));
    AdamWOptions opt;
    opt.weight_decay = 0.0;
    AdamW adamw(opt);
    adamw.step(params);
    EXPECT_DOUBLE_EQ(params[0].value.values()[0], 1.5);
    EXPECT_DOUBLE_EQ(params[0].value.values()[1], -0.25);
    EXPECT_DOUBLE_EQ(params[0].value.values()[2], 0.0);
}

TEST(AdamW, IdenticalHistoriesStayBitwiseIdentical) {
    std::vector<Param> params;
    params.push_back(make_param("a", {0.7}, {0.0}));
    params.push_back(make_param("b", {0.7}, {0.0}));
    AdamW opt;
    for (int it = 0; it < 25; ++it) {
        double g = std::sin(0.3 * it) * 0.1;
        params[0].value.grad()[0] = g;
        params[1].value.grad()[0] = g;
        opt.step(params);
        EXPECT_EQ(params[0].value.values()[0], params[1].value.values()[0]);
    }
}

TEST(AdamW, StepCountIncrements) {
    std::vector<Param> params;
    params.push_back(make_param("w", {1.0}, {0.1}));
    AdamW opt;
    opt.step(params);
    opt.step(params);
    EXPECT_EQ(opt.step_count(), 2);
}

TEST(AdamW, SecondMomentStaysNonNegative) {
    std::vector<Param> params;
    params.push_back(make_param("w", {1.0}, {-2.0}));
    AdamW opt;
    for (int it = 0; it < 10; ++it) {
        params[0].value.grad()[0] = (it % 2 ? -1.0 : 1.0) * 0.5;
        opt.step(params);
        for (double v : opt.second_moments()[0]) EXPECT_GE(v, 0.0);
    }
}

TEST(AdamW, NonFiniteGradientAborts) {
    std::vector<Param> params;
    params.push_back(make_param("branch.w0", {1.0}, {std::numeric_limits<double>::quiet_NaN()}));
    AdamW opt;
    try {
        opt.step(params);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("branch.w0"), std::string::npos);
        EXPECT_NE(msg.find("step 1"), std::string::npos);
    }
}
