#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "pdn/errors.hpp"
#include "pdn/geometry.hpp"
#include "pdn/models.hpp"
#include "pdn/rng.hpp"
#include "pdn/stats.hpp"
#include "pdn/tensor.hpp"

namespace pdn {

enum class LoadLabel : uint8_t { Vertical = 0, Horizontal = 1, Diagonal = 2 };

inline const char* label_name(LoadLabel l) {
    switch (l) {
        case LoadLabel::Vertical: return "vertical";
        case LoadLabel::Horizontal: return "horizontal";
        case LoadLabel::Diagonal: return "diagonal";
    }
    return "?";
}

inline LoadLabel label_from_name(const std::string& s) {
    if (s == "vertical") return LoadLabel::Vertical;
    if (s == "horizontal") return LoadLabel::Horizontal;
    if (s == "diagonal") return LoadLabel::Diagonal;
    throw ValidationError("unknown load label '" + s + "'");
}

inline Vec3 label_direction(LoadLabel l) {
    switch (l) {
        case LoadLabel::Vertical: return {0, 0, 1};
        case LoadLabel::Horizontal: return {1, 0, 0};
        case LoadLabel::Diagonal: return normalized({1, 0, 1});
    }
    return {0, 0, 1};
}

// One geometry instance: nodes, per-node SDF, the load condition, and the
// per-node target fields (u_x, u_y, u_z, von Mises), node-major.
struct SampleRecord {
    std::vector<double> coords;           // M x 3
    std::vector<double> sdf;              // M
    std::array<double, 5> condition{};    // (m, f, dx, dy, dz)
    std::vector<double> targets;          // M x 4
    LoadLabel label = LoadLabel::Vertical;

    int64_t nodes() const { return static_cast<int64_t>(sdf.size()); }

    void validate() const {
        const auto m = static_cast<size_t>(nodes());
        if (m < 1) throw ValidationError("sample: node count must be >= 1");
        if (coords.size() != 3 * m || targets.size() != 4 * m)
            throw ValidationError("sample: array lengths disagree with node count " +
                                  std::to_string(m));
        for (double v : coords)
            if (!std::isfinite(v)) throw NonFiniteError("sample: non-finite coordinate");
        for (double v : sdf)
            if (!std::isfinite(v)) throw NonFiniteError("sample: non-finite sdf");
        for (double v : targets)
            if (!std::isfinite(v)) throw NonFiniteError("sample: non-finite target");
        for (double v : condition)
            if (!std::isfinite(v)) throw NonFiniteError("sample: non-finite condition");
        double dn = std::sqrt(condition[2] * condition[2] + condition[3] * condition[3] +
                              condition[4] * condition[4]);
        if (std::abs(dn - 1.0) > 1e-6)
            throw ValidationError("sample: load direction is not unit, |d| = " +
                                  std::to_string(dn));
    }
};

// --- binary sample format -----------------------------------------------------
//
// Little-endian layout: magic "PDN1", u32 node count M, then float32 arrays
// coords(3M), sdf(M), condition(5), targets(4M), then a u8 label code.

namespace detail {

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& out) : out_(out) {}
    void u32(uint32_t v) {
        std::array<unsigned char, 4> b{static_cast<unsigned char>(v & 0xff),
                                       static_cast<unsigned char>((v >> 8) & 0xff),
                                       static_cast<unsigned char>((v >> 16) & 0xff),
                                       static_cast<unsigned char>((v >> 24) & 0xff)};
        out_.write(reinterpret_cast<const char*>(b.data()), 4);
    }
    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v & 0xffffffffull));
        u32(static_cast<uint32_t>(v >> 32));
    }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
    void u8(uint8_t v) { out_.put(static_cast<char>(v)); }
    void bytes(const char* data, size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

private:
    std::ostream& out_;
};

class ByteReader {
public:
    ByteReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    uint32_t u32() {
        std::array<unsigned char, 4> b{};
        read(b.data(), 4, "u32");
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }
    uint64_t u64() {
        uint64_t lo = u32();
        uint64_t hi = u32();
        return lo | hi << 32;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    uint8_t u8() {
        unsigned char b;
        read(&b, 1, "u8");
        return b;
    }
    void bytes(char* data, size_t n, const char* what) {
        read(reinterpret_cast<unsigned char*>(data), n, what);
    }
    size_t offset() const { return offset_; }

private:
    void read(unsigned char* dst, size_t n, const char* what) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        const auto got = static_cast<size_t>(in_.gcount());
        if (got != n)
            throw FormatError(name_ + ": truncated at byte offset " + std::to_string(offset_) +
                              ": expected " + std::to_string(n) + " bytes of " + what + ", got " +
                              std::to_string(got));
        offset_ += n;
    }

    std::istream& in_;
    std::string name_;
    size_t offset_ = 0;
};

}  // namespace detail

inline void write_sample(const SampleRecord& record, const std::string& path) {
    record.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    detail::ByteWriter w(out);
    w.bytes("PDN1", 4);
    w.u32(static_cast<uint32_t>(record.nodes()));
    for (double v : record.coords) w.f32(static_cast<float>(v));
    for (double v : record.sdf) w.f32(static_cast<float>(v));
    for (double v : record.condition) w.f32(static_cast<float>(v));
    for (double v : record.targets) w.f32(static_cast<float>(v));
    w.u8(static_cast<uint8_t>(record.label));
    if (!out) throw FormatError("write failed for '" + path + "'");
}

inline SampleRecord read_sample(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open sample file '" + path + "'");
    detail::ByteReader r(in, path);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), 4, "magic");
    if (std::string_view(magic.data(), 4) != "PDN1")
        throw FormatError(path + ": bad magic at byte offset 0: expected 'PDN1'");
    const uint32_t m = r.u32();
    if (m < 1) throw FormatError(path + ": node count is zero at byte offset 4");
    SampleRecord record;
    record.coords.resize(3 * static_cast<size_t>(m));
    record.sdf.resize(m);
    record.targets.resize(4 * static_cast<size_t>(m));
    for (auto& v : record.coords) v = r.f32();
    for (auto& v : record.sdf) v = r.f32();
    for (auto& v : record.condition) v = r.f32();
    for (auto& v : record.targets) v = r.f32();
    const uint8_t code = r.u8();
    if (code > 2)
        throw FormatError(path + ": unknown label code " + std::to_string(code) +
                          " at byte offset " + std::to_string(r.offset() - 1));
    record.label = static_cast<LoadLabel>(code);
    try {
        record.validate();
    } catch (const Error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return record;
}

// --- synthetic analytic fields -------------------------------------------------
//
// Stand-in for an external FE solve: a smooth displacement/stress operator
// that couples geometry (through the SDF), force magnitude, direction, and
// mass, so a surrogate that ignores any input cannot fit it.
//
//   psi(x)   = 1 - exp(phi(x) / L)
//   u_k(x)   = (f/m) * d_k * psi(x) * (1 + (x - c) . a / L),  a = (1,0,0)
//   svm(x)   = (f/m) * (|phi(x)| / L) * (1 + |d . (x - c)| / L)
//
// with L the bounding-box diagonal and c the solid's center.

struct SyntheticFieldParams {
    double diagonal = 1.0;  // L
    Vec3 center;            // c
};

inline std::array<double, 4> synthetic_fields(const Vec3& x, double phi,
                                              const LoadCondition& cond,
                                              const SyntheticFieldParams& params) {
    const double scale = cond.force / cond.mass;
    const double psi = 1.0 - std::exp(phi / params.diagonal);
    const Vec3 rel = x - params.center;
    const double axial = 1.0 + rel.x / params.diagonal;
    const double svm = scale * (std::abs(phi) / params.diagonal) *
                       (1.0 + std::abs(dot(cond.direction, rel)) / params.diagonal);
    return {scale * cond.direction.x * psi * axial, scale * cond.direction.y * psi * axial,
            scale * cond.direction.z * psi * axial, svm};
}

namespace detail {
// Quantize through the 32-bit storage grid so the in-memory record equals
// what a reader will see, and statistics fitted here stay valid on reload.
// The volatile keeps the round trip opaque: GCC's vectorizer otherwise folds
// double->float->double into a no-op.
inline double q32(double v) {
    volatile float f = static_cast<float>(v);
    return static_cast<double>(f);
}
}  // namespace detail

// Assembles one record from explicit geometry and condition. Coordinates are
// rounded to the 32-bit storage grid before the fields are evaluated, so a
// reader can reproduce the stored targets from the stored inputs; every other
// value is quantized the same way.
inline SampleRecord make_synthetic_record(const Solid& solid, const LoadCondition& cond,
                                          LoadLabel label, const PointSet& points) {
    cond.validate();
    SyntheticFieldParams params{bounding_box(solid).diagonal(), solid_center(solid)};
    SampleRecord record;
    record.label = label;
    record.condition = {detail::q32(cond.mass), detail::q32(cond.force),
                        detail::q32(cond.direction.x), detail::q32(cond.direction.y),
                        detail::q32(cond.direction.z)};
    const auto m = points.coords.size();
    record.coords.reserve(3 * m);
    record.sdf.reserve(m);
    record.targets.reserve(4 * m);
    for (const auto& raw : points.coords) {
        Vec3 p{detail::q32(raw.x), detail::q32(raw.y), detail::q32(raw.z)};
        record.coords.push_back(p.x);
        record.coords.push_back(p.y);
        record.coords.push_back(p.z);
        const double phi = sdf(solid, p);
        record.sdf.push_back(detail::q32(phi));
        auto fields = synthetic_fields(p, phi, cond, params);
        for (double v : fields) record.targets.push_back(detail::q32(v));
    }
    return record;
}

// --- manifest --------------------------------------------------------------------

enum class Split : uint8_t { Train = 0, Val = 1 };

inline const char* split_name(Split s) { return s == Split::Train ? "train" : "val"; }

struct ManifestEntry {
    std::string file;
    int64_t nodes = 0;
    LoadLabel label = LoadLabel::Vertical;
    Split split = Split::Train;
};

struct Manifest {
    int format_version = 1;
    uint64_t global_seed = 0;
    std::string config_hash;
    FieldStats stats;
    std::vector<ManifestEntry> entries;
};

namespace detail {

inline nlohmann::json range_to_json(const Range& r) { return nlohmann::json::array({r.min, r.max}); }

inline Range range_from_json(const nlohmann::json& j) {
    Range r;
    r.min = j.at(0).get<double>();
    r.max = j.at(1).get<double>();
    return r;
}

}  // namespace detail

inline nlohmann::json stats_to_json(const FieldStats& st) {
    nlohmann::json j;
    for (size_t f = 0; f < 4; ++f)
        j["targets"][FieldStats::target_names[f]] = detail::range_to_json(st.targets[f]);
    j["coords"] = {detail::range_to_json(st.coords[0]), detail::range_to_json(st.coords[1]),
                   detail::range_to_json(st.coords[2])};
    j["sdf"] = detail::range_to_json(st.sdf);
    j["mass"] = detail::range_to_json(st.mass);
    j["force"] = detail::range_to_json(st.force);
    return j;
}

inline FieldStats stats_from_json(const nlohmann::json& j) {
    FieldStats st;
    for (size_t f = 0; f < 4; ++f)
        st.targets[f] = detail::range_from_json(j.at("targets").at(FieldStats::target_names[f]));
    for (size_t a = 0; a < 3; ++a) st.coords[a] = detail::range_from_json(j.at("coords").at(a));
    st.sdf = detail::range_from_json(j.at("sdf"));
    st.mass = detail::range_from_json(j.at("mass"));
    st.force = detail::range_from_json(j.at("force"));
    return st;
}

inline void save_manifest(const Manifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = manifest.format_version;
    j["global_seed"] = manifest.global_seed;
    j["generator_config_hash"] = manifest.config_hash;
    j["stats"] = stats_to_json(manifest.stats);
    j["samples"] = nlohmann::json::array();
    for (const auto& e : manifest.entries)
        j["samples"].push_back({{"file", e.file},
                                {"nodes", e.nodes},
                                {"label", label_name(e.label)},
                                {"split", split_name(e.split)}});
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest '" + path + "': " + e.what());
    }
    Manifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1)
            throw FormatError("manifest '" + path + "': unsupported format version " +
                              std::to_string(m.format_version));
        m.global_seed = j.at("global_seed").get<uint64_t>();
        m.config_hash = j.at("generator_config_hash").get<std::string>();
        m.stats = stats_from_json(j.at("stats"));
        for (const auto& e : j.at("samples")) {
            ManifestEntry entry;
            entry.file = e.at("file").get<std::string>();
            entry.nodes = e.at("nodes").get<int64_t>();
            entry.label = label_from_name(e.at("label").get<std::string>());
            std::string sp = e.at("split").get<std::string>();
            if (sp != "train" && sp != "val")
                throw FormatError("manifest '" + path + "': unknown split '" + sp + "'");
            entry.split = sp == "train" ? Split::Train : Split::Val;
            m.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest '" + path + "': " + e.what());
    }
    return m;
}

// --- generation -------------------------------------------------------------------

struct GenConfig {
    int64_t n_samples = 64;
    int64_t nodes_per_sample = 2048;
    std::vector<std::string> shapes{"sphere", "box", "capsule"};
    std::array<double, 2> mass_range{0.5, 2.5};
    std::array<double, 2> force_range{0.5, 4.0};
    double direction_jitter = 0.1;  // cone half-width around the label direction
    double split_ratio = 0.8;
    uint64_t seed = 1;

    void validate() const {
        if (n_samples < 2) throw ValidationError("generator: need at least 2 samples");
        if (nodes_per_sample < 1) throw ValidationError("generator: nodes per sample must be >= 1");
        if (shapes.empty()) throw ValidationError("generator: shape list is empty");
        if (!(mass_range[0] > 0.0) || mass_range[1] < mass_range[0])
            throw ValidationError("generator: mass range must satisfy 0 < lo <= hi");
        if (force_range[0] < 0.0 || force_range[1] < force_range[0])
            throw ValidationError("generator: force range must satisfy 0 <= lo <= hi");
        if (direction_jitter < 0.0) throw ValidationError("generator: jitter must be >= 0");
        if (!(split_ratio > 0.0) || !(split_ratio < 1.0))
            throw ValidationError("generator: split ratio must lie in (0,1)");
    }

    nlohmann::json to_json() const {
        return {{"n_samples", n_samples},
                {"nodes_per_sample", nodes_per_sample},
                {"shapes", shapes},
                {"mass_range", mass_range},
                {"force_range", force_range},
                {"direction_jitter", direction_jitter},
                {"split_ratio", split_ratio},
                {"seed", seed}};
    }

    static GenConfig from_json(const nlohmann::json& j) {
        GenConfig c;
        if (j.contains("n_samples")) c.n_samples = j.at("n_samples").get<int64_t>();
        if (j.contains("nodes_per_sample"))
            c.nodes_per_sample = j.at("nodes_per_sample").get<int64_t>();
        if (j.contains("shapes")) c.shapes = j.at("shapes").get<std::vector<std::string>>();
        if (j.contains("mass_range")) c.mass_range = j.at("mass_range").get<std::array<double, 2>>();
        if (j.contains("force_range"))
            c.force_range = j.at("force_range").get<std::array<double, 2>>();
        if (j.contains("direction_jitter"))
            c.direction_jitter = j.at("direction_jitter").get<double>();
        if (j.contains("split_ratio")) c.split_ratio = j.at("split_ratio").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
        return c;
    }
};

inline uint64_t fnv1a_hash(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace detail {

inline Solid random_solid(const std::string& kind, Rng& rng) {
    Vec3 center{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
    if (kind == "sphere") return Sphere{center, rng.uniform(0.6, 1.4)};
    if (kind == "box")
        return BoxShape{center, {rng.uniform(0.5, 1.2), rng.uniform(0.5, 1.2),
                                 rng.uniform(0.5, 1.2)}};
    if (kind == "capsule") {
        Vec3 axis = normalized({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        double half = rng.uniform(0.4, 1.0);
        return Capsule{center - axis * half, center + axis * half, rng.uniform(0.3, 0.8)};
    }
    throw ValidationError("generator: unknown shape kind '" + kind + "'");
}

// Canonical label direction with a small per-sample cone jitter. The jitter
// keeps every displacement component non-constant across the dataset (d_y
// would otherwise be identically zero for all three canonical directions,
// which admits no normalization and no R^2).
inline Vec3 jittered_direction(LoadLabel label, double jitter, Rng& rng) {
    Vec3 d = label_direction(label);
    if (jitter > 0.0)
        d = d + Vec3{rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter),
                     rng.uniform(-jitter, jitter)};
    return normalized(d);
}

}  // namespace detail

// Fits normalization statistics over the given (training) records.
inline FieldStats fit_stats(const std::vector<SampleRecord>& records,
                            const std::vector<size_t>& indices) {
    FieldStats st;
    for (size_t idx : indices) {
        const auto& r = records[idx];
        const auto m = static_cast<size_t>(r.nodes());
        for (size_t i = 0; i < m; ++i) {
            for (size_t a = 0; a < 3; ++a) st.coords[a].expand(r.coords[i * 3 + a]);
            st.sdf.expand(r.sdf[i]);
            for (size_t f = 0; f < 4; ++f) st.targets[f].expand(r.targets[i * 4 + f]);
        }
        st.mass.expand(r.condition[0]);
        st.force.expand(r.condition[1]);
    }
    return st;
}

// Deterministic shuffled split; refits stats on the training side.
inline void split_dataset(Manifest& manifest, const std::vector<SampleRecord>& records,
                          double ratio, uint64_t seed) {
    if (!(ratio > 0.0) || !(ratio < 1.0))
        throw ValidationError("split: ratio must lie in (0,1), got " + std::to_string(ratio));
    if (manifest.entries.size() < 2) throw ValidationError("split: need at least 2 samples");
    const auto n = manifest.entries.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5117));
    rng.shuffle(order);
    const auto n_train = static_cast<size_t>(
        std::llround(ratio * static_cast<double>(n)));
    std::vector<size_t> train_ids;
    for (size_t i = 0; i < n; ++i) {
        manifest.entries[order[i]].split = i < n_train ? Split::Train : Split::Val;
        if (i < n_train) train_ids.push_back(order[i]);
    }
    manifest.stats = fit_stats(records, train_ids);
}

// Generates a dataset directory: samples/<id>.pdn plus manifest.json with the
// 80/20 (configurable) split and training-split statistics.
inline Manifest generate_synthetic(const GenConfig& config, const std::string& out_dir) {
    config.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "samples");

    Manifest manifest;
    manifest.global_seed = config.seed;
    char hash_hex[17];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(config.to_json().dump())));
    manifest.config_hash = hash_hex;

    std::vector<SampleRecord> records;
    records.reserve(static_cast<size_t>(config.n_samples));
    for (int64_t i = 0; i < config.n_samples; ++i) {
        Rng rng(derive_seed(config.seed, 0xa11, static_cast<uint64_t>(i)));
        const auto& kind = config.shapes[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(config.shapes.size()) - 1))];
        Solid solid = detail::random_solid(kind, rng);
        auto label = static_cast<LoadLabel>(rng.uniform_int(0, 2));
        LoadCondition cond;
        cond.mass = rng.uniform(config.mass_range[0], config.mass_range[1]);
        cond.force = rng.uniform(config.force_range[0], config.force_range[1]);
        cond.direction = detail::jittered_direction(label, config.direction_jitter, rng);
        PointSet points = sample_volume(solid, config.nodes_per_sample,
                                        derive_seed(config.seed, 0x901, static_cast<uint64_t>(i)));
        SampleRecord record = make_synthetic_record(solid, cond, label, points);

        char name[32];
        std::snprintf(name, sizeof name, "samples/%06lld.pdn", static_cast<long long>(i));
        write_sample(record, (fs::path(out_dir) / name).string());
        manifest.entries.push_back({name, record.nodes(), record.label, Split::Train});
        records.push_back(std::move(record));
    }
    split_dataset(manifest, records, config.split_ratio, config.seed);
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

// --- dataset + batching --------------------------------------------------------------

// In-memory view of a dataset directory. Desk-scale datasets fit comfortably,
// so records are loaded eagerly.
class Dataset {
public:
    explicit Dataset(const std::string& dir)
        : dir_(dir), manifest_(load_manifest((std::filesystem::path(dir) / "manifest.json").string())) {
        records_.reserve(manifest_.entries.size());
        for (const auto& e : manifest_.entries)
            records_.push_back(read_sample((std::filesystem::path(dir) / e.file).string()));
    }

    const Manifest& manifest() const { return manifest_; }
    const FieldStats& stats() const { return manifest_.stats; }
    size_t size() const { return records_.size(); }
    const SampleRecord& record(size_t i) const { return records_.at(i); }
    const ManifestEntry& entry(size_t i) const { return manifest_.entries.at(i); }

    std::vector<size_t> split_ids(Split split) const {
        std::vector<size_t> out;
        for (size_t i = 0; i < manifest_.entries.size(); ++i)
            if (manifest_.entries[i].split == split) out.push_back(i);
        return out;
    }

private:
    std::string dir_;
    Manifest manifest_;
    std::vector<SampleRecord> records_;
};

// Normalized, resampled training batch.
struct Batch {
    Tensor coords;     // [B,N,3]
    Tensor sdf;        // [B,N]
    Tensor condition;  // [B,5]
    Tensor targets;    // [B,N,4]
    std::vector<LoadLabel> labels;
};

// Applies per-sample fixed-size resampling and the manifest's normalization.
// Deterministic for a given (ids, N, seed).
inline Batch make_batch(const Dataset& data, const std::vector<size_t>& ids, int64_t n,
                        uint64_t seed, HeadKind head) {
    if (n < 1) throw ValidationError("make_batch: resample size must be >= 1");
    const auto b = static_cast<int64_t>(ids.size());
    const FieldStats& st = data.stats();
    const std::array<Affine, 3> coord_aff{st.coord_affine(0), st.coord_affine(1),
                                          st.coord_affine(2)};
    const Affine sdf_aff = st.sdf_affine();
    const Affine mass_aff = st.mass_affine();
    const Affine force_aff = st.force_affine();
    std::array<Affine, 4> target_aff{st.target_affine(0, head), st.target_affine(1, head),
                                     st.target_affine(2, head), st.target_affine(3, head)};

    std::vector<double> coords(static_cast<size_t>(b * n * 3));
    std::vector<double> sdf(static_cast<size_t>(b * n));
    std::vector<double> condition(static_cast<size_t>(b * 5));
    std::vector<double> targets(static_cast<size_t>(b * n * 4));
    Batch batch;
    for (int64_t row = 0; row < b; ++row) {
        if (ids[static_cast<size_t>(row)] >= data.size())
            throw SchemaError("make_batch: sample id " +
                              std::to_string(ids[static_cast<size_t>(row)]) +
                              " not in manifest (have " + std::to_string(data.size()) + ")");
        const SampleRecord& rec = data.record(ids[static_cast<size_t>(row)]);
        batch.labels.push_back(rec.label);
        auto idx = resample_fixed(rec.nodes(), n, derive_seed(seed, 0xba7c4, static_cast<uint64_t>(row)));
        for (int64_t i = 0; i < n; ++i) {
            const auto src = static_cast<size_t>(idx[static_cast<size_t>(i)]);
            for (size_t a = 0; a < 3; ++a)
                coords[static_cast<size_t>((row * n + i) * 3) + a] =
                    coord_aff[a].apply(rec.coords[src * 3 + a]);
            sdf[static_cast<size_t>(row * n + i)] = sdf_aff.apply(rec.sdf[src]);
            for (size_t f = 0; f < 4; ++f)
                targets[static_cast<size_t>((row * n + i) * 4) + f] =
                    target_aff[f].apply(rec.targets[src * 4 + f]);
        }
        condition[static_cast<size_t>(row * 5 + 0)] = mass_aff.apply(rec.condition[0]);
        condition[static_cast<size_t>(row * 5 + 1)] = force_aff.apply(rec.condition[1]);
        // re-unitize the float32-rounded direction
        Vec3 d = normalized({rec.condition[2], rec.condition[3], rec.condition[4]});
        condition[static_cast<size_t>(row * 5 + 2)] = d.x;
        condition[static_cast<size_t>(row * 5 + 3)] = d.y;
        condition[static_cast<size_t>(row * 5 + 4)] = d.z;
    }
    batch.coords = Tensor::from({b, n, 3}, std::move(coords));
    batch.sdf = Tensor::from({b, n}, std::move(sdf));
    batch.condition = Tensor::from({b, 5}, std::move(condition));
    batch.targets = Tensor::from({b, n, 4}, std::move(targets));
    return batch;
}

}  // namespace pdn
