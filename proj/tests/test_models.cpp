#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pdn/grad_check.hpp"
#include "pdn/models.hpp"

using namespace pdn;

namespace {

// Random normalized inputs with valid unit directions.
ModelInputs make_inputs(int64_t b, int64_t n, uint64_t seed, bool with_sdf = true) {
    Rng rng(seed);
    std::vector<double> cond(static_cast<size_t>(b * 5));
    for (int64_t i = 0; i < b; ++i) {
        cond[static_cast<size_t>(i * 5 + 0)] = rng.uniform(-1, 1);  // normalized mass
        cond[static_cast<size_t>(i * 5 + 1)] = rng.uniform(-1, 1);  // normalized force
        Vec3 d = normalized({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        cond[static_cast<size_t>(i * 5 + 2)] = d.x;
        cond[static_cast<size_t>(i * 5 + 3)] = d.y;
        cond[static_cast<size_t>(i * 5 + 4)] = d.z;
    }
    std::vector<double> coords(static_cast<size_t>(b * n * 3));
    for (auto& v : coords) v = rng.uniform(-1, 1);
    std::vector<double> sdf(static_cast<size_t>(b * n));
    for (auto& v : sdf) v = rng.uniform(-1, 0);
    ModelInputs in;
    in.condition = Tensor::from({b, 5}, std::move(cond));
    in.coords = Tensor::from({b, n, 3}, std::move(coords));
    if (with_sdf) in.sdf = Tensor::from({b, n}, std::move(sdf));
    return in;
}

ModelSpec small_spec(Architecture arch, int64_t h = 8) {
    ModelSpec spec;
    spec.architecture = arch;
    spec.latent = h;
    spec.branch_widths = {h, h};
    spec.trunk_widths = {h, h};
    spec.fusion_widths = {h};
    spec.cloud_widths = {h, h};
    spec.pointnet_scale = 0.05;
    if (arch == Architecture::PointNet) spec.use_sdf = false;
    return spec;
}

std::vector<Tensor> leaf_tensors(Model& model, ModelInputs& in) {
    std::vector<Tensor> leaves;
    for (auto& p : model.parameters()) leaves.push_back(p.value);
    leaves.push_back(in.condition);
    leaves.push_back(in.coords);
    if (in.sdf.defined()) leaves.push_back(in.sdf);
    return leaves;
}

}  // namespace

// --- spec validation -----------------------------------------------------

TEST(ModelSpec, PointNetRejectsSdfFlag) {
    ModelSpec spec = small_spec(Architecture::PointNet);
    spec.use_sdf = true;
    EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(ModelSpec, BranchWidthMustEndAtLatent) {
    ModelSpec spec = small_spec(Architecture::DeepONet);
    spec.branch_widths = {8, 16};  // latent is 8
    EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(ModelSpec, LatentMustBePositive) {
    ModelSpec spec;
    spec.latent = 0;
    EXPECT_THROW(spec.validate(), ValidationError);
}

// --- parameter counting -----------------------------------------------------

TEST(CountParameters, SingleDenseLayers) {
    Rng rng(1);
    auto layer = detail::make_dense(5, 128, detail::Init::Xavier, 0, rng);
    EXPECT_EQ(layer.w.numel() + layer.b.numel(), 768);
    auto layer2 = detail::make_dense(4, 128, detail::Init::Xavier, 0, rng);
    EXPECT_EQ(layer2.w.numel() + layer2.b.numel(), 640);
}

// Desk-scale default counts logged next to the full-scale reference totals
// (250,927 / 264,931 / 251,936); equality is not asserted since hidden widths
// are configuration, not contract.
TEST(CountParameters, DefaultSpecsReported) {
    ModelSpec pn;
    pn.architecture = Architecture::PointNet;
    pn.use_sdf = false;
    ModelSpec don;
    don.architecture = Architecture::DeepONet;
    ModelSpec pdon;
    pdon.architecture = Architecture::PointDeepONet;
    int64_t c1 = count_parameters(pn), c2 = count_parameters(don), c3 = count_parameters(pdon);
    std::printf("pointnet        params: %lld (reference 250927)\n", static_cast<long long>(c1));
    std::printf("deeponet        params: %lld (reference 264931)\n", static_cast<long long>(c2));
    std::printf("point_deeponet  params: %lld (reference 251936)\n", static_cast<long long>(c3));
    EXPECT_GT(c1, 0);
    EXPECT_GT(c2, 0);
    EXPECT_GT(c3, 0);
}

// --- PointNet ------------------------------------------------------------------

TEST(PointNet, OutputsBoundedBySigmoid) {
    auto model = make_model(small_spec(Architecture::PointNet), 3);
    ModelInputs in = make_inputs(2, 16, 5, /*with_sdf=*/false);
    Tensor out = model->forward(in, true);
    EXPECT_EQ(out.shape(), (Shape{2, 16, 4}));
    for (double v : out.values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(PointNet, PermutingPointsPermutesOutputs) {
    auto model = make_model(small_spec(Architecture::PointNet), 3);
    ModelInputs in = make_inputs(1, 12, 7, false);
    model->forward(in, true);  // populate batchnorm running statistics
    Tensor ref = model->forward(in, false);

    std::vector<int64_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(9);
    rng.shuffle(perm);
    std::vector<double> coords(static_cast<size_t>(12 * 3));
    for (int64_t i = 0; i < 12; ++i)
        std::copy_n(in.coords.values().data() + perm[static_cast<size_t>(i)] * 3, 3,
                    coords.data() + i * 3);
    ModelInputs permuted;
    permuted.condition = in.condition;
    permuted.coords = Tensor::from({1, 12, 3}, std::move(coords));
    Tensor out = model->forward(permuted, false);
    for (int64_t i = 0; i < 12; ++i)
        for (int64_t f = 0; f < 4; ++f)
            EXPECT_NEAR(out.values()[static_cast<size_t>(i * 4 + f)],
                        ref.values()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 4 + f)],
                        1e-9);
}

// --- DeepONet --------------------------------------------------------------------

// Injected latents: H=2, B=[1,2], per-field trunk column [0.1,0.2]
// -> tanh(1*0.1 + 2*0.2) = tanh(0.5).
TEST(DeepONet, InjectedLatentHookMatchesHandValue) {
    Tensor bf = Tensor::from({1, 2}, {1, 2});
    std::vector<double> tv(2 * 4);
    for (int f = 0; f < 4; ++f) {
        tv[static_cast<size_t>(0 * 4 + f)] = 0.1;
        tv[static_cast<size_t>(1 * 4 + f)] = 0.2;
    }
    Tensor tf = Tensor::from({1, 1, 2, 4}, tv);
    Tensor out = latent_head(bf, tf);
    for (int f = 0; f < 4; ++f)
        EXPECT_NEAR(out.values()[static_cast<size_t>(f)], 0.46211715726000974, 1e-12);
}

TEST(DeepONet, ZeroBranchGivesZeroOutput) {
    Tensor bf = Tensor::zeros({1, 2});
    Rng rng(3);
    std::vector<double> tv(2 * 4);
    for (auto& v : tv) v = rng.uniform(-1, 1);
    Tensor out = latent_head(bf, Tensor::from({1, 1, 2, 4}, tv));
    for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

// Scaling the injected branch scales the pre-tanh logit by the same factor
// (bilinear form); exact for power-of-two scales.
TEST(DeepONet, BranchTrunkSeparability) {
    Rng rng(11);
    std::vector<double> bv(4), tv(1 * 3 * 4 * 2);
    for (auto& v : bv) v = rng.uniform(-1, 1);
    for (auto& v : tv) v = rng.uniform(-1, 1);
    Tensor bf = Tensor::from({1, 4}, bv);
    Tensor tf = Tensor::from({1, 3, 4, 2}, tv);
    Tensor base = latent_dot(bf, tf);
    std::vector<double> scaled(bv);
    for (auto& v : scaled) v *= 2.0;
    Tensor twice = latent_dot(Tensor::from({1, 4}, scaled), tf);
    for (size_t i = 0; i < base.values().size(); ++i)
        EXPECT_EQ(twice.values()[i], 2.0 * base.values()[i]);
}

TEST(DeepONet, MissingSdfIsSchemaError) {
    auto model = make_model(small_spec(Architecture::DeepONet), 5);
    ModelInputs in = make_inputs(2, 6, 13, /*with_sdf=*/false);
    EXPECT_THROW(model->forward(in, false), SchemaError);
}

TEST(DeepONet, NonUnitDirectionRejected) {
    auto model = make_model(small_spec(Architecture::DeepONet), 5);
    ModelInputs in = make_inputs(1, 4, 17);
    in.condition.values()[4] *= 3.0;  // stretch d_z
    EXPECT_THROW(model->forward(in, false), ValidationError);
}

// Pointwise trunk: growing N only adds rows; shared query points keep their
// values.
TEST(DeepONet, DoublingQueriesKeepsSharedPointValues) {
    auto model = make_model(small_spec(Architecture::DeepONet), 19);
    ModelInputs in = make_inputs(1, 8, 23);
    Tensor ref = model->forward(in, false);

    std::vector<double> coords2 = in.coords.values();
    coords2.insert(coords2.end(), in.coords.values().begin(), in.coords.values().end());
    std::vector<double> sdf2 = in.sdf.values();
    sdf2.insert(sdf2.end(), in.sdf.values().begin(), in.sdf.values().end());
    ModelInputs doubled;
    doubled.condition = in.condition;
    doubled.coords = Tensor::from({1, 16, 3}, std::move(coords2));
    doubled.sdf = Tensor::from({1, 16}, std::move(sdf2));
    Tensor out = model->forward(doubled, false);
    EXPECT_EQ(out.shape(), (Shape{1, 16, 4}));
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t f = 0; f < 4; ++f)
            EXPECT_NEAR(out.values()[static_cast<size_t>(i * 4 + f)],
                        ref.values()[static_cast<size_t>(i * 4 + f)], 1e-12);
}

// --- Point-DeepONet ------------------------------------------------------------------

TEST(PointDeepONet, BranchCloudPermutationLeavesOutputsUnchanged) {
    auto spec = small_spec(Architecture::PointDeepONet);
    PointDeepONetModel model(spec, 29);
    ModelInputs in = make_inputs(1, 10, 31);
    model.forward(in, true);  // commit batchnorm statistics
    Tensor balpha_ref = model.branch_alpha(in.condition, in.coords, false);

    std::vector<int64_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(37);
    rng.shuffle(perm);
    std::vector<double> coords(static_cast<size_t>(10 * 3));
    for (int64_t i = 0; i < 10; ++i)
        std::copy_n(in.coords.values().data() + perm[static_cast<size_t>(i)] * 3, 3,
                    coords.data() + i * 3);
    Tensor cloud = Tensor::from({1, 10, 3}, std::move(coords));
    Tensor balpha_perm = model.branch_alpha(in.condition, cloud, false);
    for (size_t i = 0; i < balpha_ref.values().size(); ++i)
        EXPECT_NEAR(balpha_perm.values()[i], balpha_ref.values()[i], 1e-9);

    // full output with permuted branch cloud but fixed queries
    Tensor out_ref = model.head_from_alpha(balpha_ref, model.trunk_alpha(in.coords, in.sdf));
    Tensor out_perm = model.head_from_alpha(balpha_perm, model.trunk_alpha(in.coords, in.sdf));
    for (size_t i = 0; i < out_ref.values().size(); ++i)
        EXPECT_NEAR(out_perm.values()[i], out_ref.values()[i], 1e-9);
}

// Fresh models have zero biases, so a zeroed B^alpha annihilates the fusion
// product and every head output is tanh(0) = 0.
TEST(PointDeepONet, ZeroBranchAlphaAnnihilatesOutput) {
    auto spec = small_spec(Architecture::PointDeepONet);
    PointDeepONetModel model(spec, 41);
    ModelInputs in = make_inputs(2, 6, 43);
    Tensor talpha = model.trunk_alpha(in.coords, in.sdf);
    Tensor out = model.head_from_alpha(Tensor::zeros({2, spec.latent}), talpha);
    for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

// Head identity: output equals tanh of the latent dot product of whatever
// B^beta/T^beta are injected.
TEST(PointDeepONet, HeadIdentityWithinTolerance) {
    Rng rng(47);
    const int64_t b = 2, n = 3, h = 5, m = 4;
    std::vector<double> bv(static_cast<size_t>(b * n * h)), tv(static_cast<size_t>(b * n * h * m));
    for (auto& v : bv) v = rng.uniform(-1, 1);
    for (auto& v : tv) v = rng.uniform(-1, 1);
    Tensor bf = Tensor::from({b, n, h}, bv);
    Tensor tf = Tensor::from({b, n, h, m}, tv);
    Tensor out = latent_head(bf, tf);
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t f = 0; f < m; ++f) {
                double acc = 0.0;
                for (int64_t c = 0; c < h; ++c)
                    acc += bv[static_cast<size_t>((bi * n + i) * h + c)] *
                           tv[static_cast<size_t>(((bi * n + i) * h + c) * m + f)];
                EXPECT_NEAR(out.values()[static_cast<size_t>((bi * n + i) * m + f)],
                            std::tanh(acc), 1e-12);
            }
}

TEST(PointDeepONet, ArbitraryQueryCountAtInference) {
    auto spec = small_spec(Architecture::PointDeepONet);
    PointDeepONetModel model(spec, 53);
    ModelInputs train_in = make_inputs(1, 16, 59);
    model.forward(train_in, true);

    // 1000 query points against a 16-point branch cloud
    ModelInputs big = make_inputs(1, 1000, 61);
    Tensor balpha = model.branch_alpha(train_in.condition, train_in.coords, false);
    Tensor out = model.head_from_alpha(balpha, model.trunk_alpha(big.coords, big.sdf));
    EXPECT_EQ(out.shape(), (Shape{1, 1000, 4}));
    for (double v : out.values()) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Models, EvalForwardIsPure) {
    for (Architecture arch :
         {Architecture::PointNet, Architecture::DeepONet, Architecture::PointDeepONet}) {
        auto model = make_model(small_spec(arch), 67);
        ModelInputs in = make_inputs(2, 8, 71, arch != Architecture::PointNet);
        model->forward(in, true);
        Tensor a = model->forward(in, false);
        Tensor b = model->forward(in, false);
        for (size_t i = 0; i < a.values().size(); ++i) EXPECT_EQ(a.values()[i], b.values()[i]);
    }
}

// Full-architecture gradient checks at small widths (the fast unit-level
// variant; the acceptance suite runs the contract-size version).
TEST(Models, GradCheckSmallWidths) {
    struct Case {
        Architecture arch;
        double tol;
    };
    for (auto [arch, tol] : {Case{Architecture::PointNet, 1e-5},
                             Case{Architecture::DeepONet, 1e-5},
                             Case{Architecture::PointDeepONet, 1e-4}}) {
        auto model = make_model(small_spec(arch, 4), 73);
        ModelInputs in = make_inputs(2, 4, 79, arch != Architecture::PointNet);
        auto leaves = leaf_tensors(*model, in);
        double err = grad_check(
            [&] {
                Tensor out = model->forward(in, true, /*update_running=*/false);
                return mse_loss(out, Tensor::zeros(out.shape()));
            },
            leaves);
        EXPECT_LT(err, tol) << architecture_name(arch);
    }
}
