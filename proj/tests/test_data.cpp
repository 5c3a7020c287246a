#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "pdn/data.hpp"

using namespace pdn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("pdn_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SampleRecord tiny_record() {
    Solid solid = Sphere{{0, 0, 0}, 1.0};
    LoadCondition cond{2.0, 4.0, {0, 0, 1}};
    PointSet points;
    points.coords = {{0, 0, 0}, {0.5, 0, 0}, {0, -0.25, 0.25}};
    for (const auto& p : points.coords) points.sdf.push_back(sdf(solid, p));
    return make_synthetic_record(solid, cond, LoadLabel::Vertical, points);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Independent closed-form evaluation, kept separate from the generator code.
std::array<double, 4> oracle_fields(const Vec3& x, double phi, double mass, double force,
                                    const Vec3& d, double diag, const Vec3& center) {
    double scale = force / mass;
    double psi = 1.0 - std::exp(phi / diag);
    Vec3 rel = x - center;
    double axial = 1.0 + rel.x / diag;
    double proj = std::abs(d.x * rel.x + d.y * rel.y + d.z * rel.z);
    return {scale * d.x * psi * axial, scale * d.y * psi * axial, scale * d.z * psi * axial,
            scale * (std::abs(phi) / diag) * (1.0 + proj / diag)};
}

}  // namespace

// --- binary sample format -------------------------------------------------

TEST(SampleIo, RoundTripIsBitwise) {
    auto dir = temp_dir("roundtrip");
    SampleRecord rec = tiny_record();
    const auto path = (dir / "a.pdn").string();
    write_sample(rec, path);
    SampleRecord rec2 = read_sample(path);

    // quantized generator output reads back exactly
    EXPECT_EQ(rec.coords, rec2.coords);
    EXPECT_EQ(rec.sdf, rec2.sdf);
    EXPECT_EQ(rec.targets, rec2.targets);
    EXPECT_EQ(rec.condition, rec2.condition);
    EXPECT_EQ(rec.label, rec2.label);

    // and a rewrite reproduces the file byte for byte
    const auto path2 = (dir / "b.pdn").string();
    write_sample(rec2, path2);
    EXPECT_EQ(read_bytes(path), read_bytes(path2));
}

TEST(SampleIo, BadMagicRejected) {
    auto dir = temp_dir("badmagic");
    const auto path = (dir / "x.pdn").string();
    write_sample(tiny_record(), path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    EXPECT_THROW(read_sample(path), FormatError);
}

TEST(SampleIo, TruncationNamesOffsetAndLengths) {
    auto dir = temp_dir("trunc");
    const auto path = (dir / "x.pdn").string();
    write_sample(tiny_record(), path);
    auto bytes = read_bytes(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    try {
        read_sample(path);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("byte offset"), std::string::npos);
        EXPECT_NE(msg.find("expected"), std::string::npos);
    }
}

TEST(SampleIo, NonFinitePayloadRejected) {
    SampleRecord rec = tiny_record();
    rec.targets[2] = std::numeric_limits<double>::infinity();
    auto dir = temp_dir("nonfinite");
    EXPECT_THROW(write_sample(rec, (dir / "x.pdn").string()), NonFiniteError);
}

// --- synthetic fields -------------------------------------------------------

TEST(SyntheticFields, ZeroForceZeroesAllTargets) {
    Solid solid = Sphere{{0, 0, 0}, 1.0};
    LoadCondition cond{1.5, 0.0, {0, 0, 1}};
    PointSet points = sample_volume(solid, 50, 3);
    SampleRecord rec = make_synthetic_record(solid, cond, LoadLabel::Vertical, points);
    for (double v : rec.targets) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SyntheticFields, BoundaryPointHasZeroDisplacement) {
    Solid solid = Sphere{{0, 0, 0}, 1.0};
    LoadCondition cond{2.0, 4.0, {0, 0, 1}};
    PointSet points;
    points.coords = {{1, 0, 0}};  // phi = 0
    points.sdf = {0.0};
    SampleRecord rec = make_synthetic_record(solid, cond, LoadLabel::Vertical, points);
    EXPECT_DOUBLE_EQ(rec.targets[0], 0.0);
    EXPECT_DOUBLE_EQ(rec.targets[1], 0.0);
    EXPECT_DOUBLE_EQ(rec.targets[2], 0.0);
    EXPECT_DOUBLE_EQ(rec.targets[3], 0.0);  // |phi|/L factor vanishes too
}

// Frozen case from an independent evaluation: unit sphere, m=2, f=4,
// d=(0,0,1), x = center. phi=-1, L = 2*sqrt(3).
TEST(SyntheticFields, CenterProbeMatchesClosedForm) {
    Solid solid = Sphere{{0, 0, 0}, 1.0};
    LoadCondition cond{2.0, 4.0, {0, 0, 1}};
    PointSet points;
    points.coords = {{0, 0, 0}};
    points.sdf = {-1.0};
    SampleRecord rec = make_synthetic_record(solid, cond, LoadLabel::Vertical, points);
    const double diag = 2.0 * std::sqrt(3.0);
    const double psi = 1.0 - std::exp(-1.0 / diag);
    EXPECT_NEAR(rec.targets[0], 0.0, 1e-7);
    EXPECT_NEAR(rec.targets[1], 0.0, 1e-7);
    EXPECT_NEAR(rec.targets[2], 2.0 * psi, 1e-6);
    EXPECT_NEAR(rec.targets[3], 2.0 / diag, 1e-6);
}

// Stored targets reproduce from stored coordinates through an independent
// implementation of the closed form (32-bit storage tolerance).
TEST(SyntheticFields, StoredTargetsMatchIndependentOracle) {
    Solid solid = Capsule{{-0.4, 0.1, -0.3}, {0.5, -0.2, 0.6}, 0.55};
    LoadCondition cond{1.7, 2.3, normalized({1, 0, 1})};
    PointSet points = sample_volume(solid, 200, 11);
    SampleRecord rec = make_synthetic_record(solid, cond, LoadLabel::Diagonal, points);

    auto dir = temp_dir("oracle");
    write_sample(rec, (dir / "s.pdn").string());
    SampleRecord loaded = read_sample((dir / "s.pdn").string());

    const double diag = bounding_box(solid).diagonal();
    const Vec3 center = solid_center(solid);
    const Vec3 d{loaded.condition[2], loaded.condition[3], loaded.condition[4]};
    for (int64_t i = 0; i < loaded.nodes(); ++i) {
        Vec3 x{loaded.coords[static_cast<size_t>(i * 3)], loaded.coords[static_cast<size_t>(i * 3 + 1)],
               loaded.coords[static_cast<size_t>(i * 3 + 2)]};
        double phi = sdf(solid, x);
        auto expected =
            oracle_fields(x, phi, loaded.condition[0], loaded.condition[1], d, diag, center);
        for (size_t f = 0; f < 4; ++f)
            EXPECT_NEAR(loaded.targets[static_cast<size_t>(i * 4) + f], expected[f], 1e-6);
    }
}

TEST(SyntheticFields, VonMisesIsNonNegative) {
    GenConfig cfg;
    cfg.n_samples = 6;
    cfg.nodes_per_sample = 64;
    cfg.seed = 5;
    auto dir = temp_dir("svm");
    generate_synthetic(cfg, dir.string());
    Dataset data(dir.string());
    for (size_t s = 0; s < data.size(); ++s) {
        const auto& rec = data.record(s);
        for (int64_t i = 0; i < rec.nodes(); ++i)
            EXPECT_GE(rec.targets[static_cast<size_t>(i * 4 + 3)], 0.0);
    }
}

// --- generator / manifest ------------------------------------------------------

TEST(Generate, ManifestAccountsForEverySample) {
    GenConfig cfg;
    cfg.n_samples = 10;
    cfg.nodes_per_sample = 32;
    cfg.seed = 9;
    auto dir = temp_dir("gen10");
    Manifest m = generate_synthetic(cfg, dir.string());
    EXPECT_EQ(m.entries.size(), 10u);
    int train = 0, val = 0;
    for (const auto& e : m.entries) (e.split == Split::Train ? train : val)++;
    EXPECT_EQ(train, 8);
    EXPECT_EQ(val, 2);
    Dataset data(dir.string());  // every sample parses
    EXPECT_EQ(data.size(), 10u);
}

TEST(Generate, DeterministicPerSeed) {
    GenConfig cfg;
    cfg.n_samples = 4;
    cfg.nodes_per_sample = 16;
    cfg.seed = 21;
    auto dir1 = temp_dir("gen_a");
    auto dir2 = temp_dir("gen_b");
    generate_synthetic(cfg, dir1.string());
    generate_synthetic(cfg, dir2.string());
    EXPECT_EQ(read_bytes(dir1 / "manifest.json"), read_bytes(dir2 / "manifest.json"));
    EXPECT_EQ(read_bytes(dir1 / "samples/000000.pdn"), read_bytes(dir2 / "samples/000000.pdn"));
    EXPECT_EQ(read_bytes(dir1 / "samples/000003.pdn"), read_bytes(dir2 / "samples/000003.pdn"));
}

TEST(Generate, StatsFittedOnTrainOnly) {
    GenConfig cfg;
    cfg.n_samples = 10;
    cfg.nodes_per_sample = 32;
    cfg.seed = 33;
    auto dir = temp_dir("gen_stats");
    Manifest m = generate_synthetic(cfg, dir.string());
    Dataset data(dir.string());
    std::vector<SampleRecord> records;
    for (size_t i = 0; i < data.size(); ++i) records.push_back(data.record(i));
    std::vector<size_t> train_ids;
    for (size_t i = 0; i < m.entries.size(); ++i)
        if (m.entries[i].split == Split::Train) train_ids.push_back(i);
    FieldStats refit = fit_stats(records, train_ids);
    for (size_t f = 0; f < 4; ++f) {
        EXPECT_DOUBLE_EQ(refit.targets[f].min, m.stats.targets[f].min);
        EXPECT_DOUBLE_EQ(refit.targets[f].max, m.stats.targets[f].max);
    }
    EXPECT_DOUBLE_EQ(refit.mass.min, m.stats.mass.min);
}

TEST(SplitDataset, RatioViolationsRejected) {
    GenConfig cfg;
    cfg.split_ratio = 1.2;
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(SplitDataset, SameSeedSameAssignment) {
    // synthetic manifest with hand-made records, no disk involved
    std::vector<SampleRecord> records;
    Manifest manifest;
    for (int i = 0; i < 20; ++i) {
        SampleRecord r = tiny_record();
        r.label = static_cast<LoadLabel>(i % 3);
        records.push_back(r);
        manifest.entries.push_back({"s", r.nodes(), r.label, Split::Train});
    }
    Manifest m2 = manifest;
    split_dataset(manifest, records, 0.8, 17);
    split_dataset(m2, records, 0.8, 17);
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        EXPECT_EQ(manifest.entries[i].split, m2.entries[i].split);
}

// Label proportions in train stay close to the global proportions.
TEST(SplitDataset, LabelProportionsPreserved) {
    std::vector<SampleRecord> records;
    Manifest manifest;
    const int n = 120;
    for (int i = 0; i < n; ++i) {
        SampleRecord r = tiny_record();
        r.label = static_cast<LoadLabel>(i % 3);
        records.push_back(r);
        manifest.entries.push_back({"s", r.nodes(), r.label, Split::Train});
    }
    split_dataset(manifest, records, 0.8, 29);
    std::array<int, 3> global{}, train{};
    int n_train = 0;
    for (const auto& e : manifest.entries) {
        global[static_cast<size_t>(e.label)]++;
        if (e.split == Split::Train) {
            train[static_cast<size_t>(e.label)]++;
            ++n_train;
        }
    }
    for (size_t l = 0; l < 3; ++l) {
        double global_frac = static_cast<double>(global[l]) / n;
        double train_frac = static_cast<double>(train[l]) / n_train;
        EXPECT_NEAR(train_frac, global_frac, 0.10);
    }
}

// --- batching ----------------------------------------------------------------------

class BatchTest : public ::testing::Test {
protected:
    void SetUp() override {
        GenConfig cfg;
        cfg.n_samples = 6;
        cfg.nodes_per_sample = 24;
        cfg.seed = 77;
        dir_ = temp_dir("batch");
        generate_synthetic(cfg, dir_.string());
        data_ = std::make_unique<Dataset>(dir_.string());
    }
    fs::path dir_;
    std::unique_ptr<Dataset> data_;
};

TEST_F(BatchTest, FullResampleIsPermutationOfStoredTargets) {
    const int64_t m = data_->record(0).nodes();
    Batch batch = make_batch(*data_, {0}, m, 5, HeadKind::Tanh);
    // denormalize and compare as multisets
    const auto& st = data_->stats();
    std::multiset<double> expected, got;
    for (int64_t i = 0; i < m; ++i)
        expected.insert(data_->record(0).targets[static_cast<size_t>(i * 4)]);
    Affine aff = st.target_affine(0, HeadKind::Tanh);
    for (int64_t i = 0; i < m; ++i)
        got.insert(aff.invert(batch.targets.values()[static_cast<size_t>(i * 4)]));
    auto it1 = expected.begin();
    auto it2 = got.begin();
    for (; it1 != expected.end(); ++it1, ++it2) EXPECT_NEAR(*it1, *it2, 1e-9);
}

TEST_F(BatchTest, TrainTargetsInsideHeadRange) {
    auto train_ids = data_->split_ids(Split::Train);
    Batch batch = make_batch(*data_, train_ids, 16, 3, HeadKind::Tanh);
    for (double v : batch.targets.values()) {
        EXPECT_GE(v, -0.95 - 1e-12);
        EXPECT_LE(v, 0.95 + 1e-12);
    }
}

TEST_F(BatchTest, DeterministicPerSeed) {
    Batch a = make_batch(*data_, {0, 2, 4}, 8, 11, HeadKind::Tanh);
    Batch b = make_batch(*data_, {0, 2, 4}, 8, 11, HeadKind::Tanh);
    EXPECT_EQ(a.coords.values(), b.coords.values());
    EXPECT_EQ(a.sdf.values(), b.sdf.values());
    EXPECT_EQ(a.condition.values(), b.condition.values());
    EXPECT_EQ(a.targets.values(), b.targets.values());
}

TEST_F(BatchTest, UnknownIdRejected) {
    EXPECT_THROW(make_batch(*data_, {99}, 8, 1, HeadKind::Tanh), SchemaError);
}

TEST_F(BatchTest, DirectionsAreUnitAfterAssembly) {
    Batch batch = make_batch(*data_, {0, 1}, 8, 1, HeadKind::Tanh);
    for (int64_t r = 0; r < 2; ++r) {
        const auto* c = batch.condition.values().data() + r * 5;
        EXPECT_NEAR(std::sqrt(c[2] * c[2] + c[3] * c[3] + c[4] * c[4]), 1.0, 1e-12);
    }
}
