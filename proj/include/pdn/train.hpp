#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "pdn/data.hpp"
#include "pdn/errors.hpp"
#include "pdn/metrics.hpp"
#include "pdn/models.hpp"
#include "pdn/optim.hpp"

namespace pdn {

// --- model spec <-> JSON ----------------------------------------------------

inline nlohmann::json spec_to_json(const ModelSpec& spec) {
    return {{"architecture", architecture_name(spec.architecture)},
            {"latent", spec.latent},
            {"omega", spec.omega},
            {"use_mass", spec.use_mass},
            {"use_sdf", spec.use_sdf},
            {"head_fields", spec.head_fields},
            {"branch_widths", spec.branch_widths},
            {"trunk_widths", spec.trunk_widths},
            {"fusion_widths", spec.fusion_widths},
            {"cloud_widths", spec.cloud_widths},
            {"pointnet_scale", spec.pointnet_scale}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    if (j.contains("architecture"))
        spec.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    if (j.contains("latent")) spec.latent = j.at("latent").get<int64_t>();
    if (j.contains("omega")) spec.omega = j.at("omega").get<double>();
    if (j.contains("use_mass")) spec.use_mass = j.at("use_mass").get<bool>();
    if (j.contains("use_sdf")) spec.use_sdf = j.at("use_sdf").get<bool>();
    if (j.contains("head_fields")) spec.head_fields = j.at("head_fields").get<int64_t>();
    if (j.contains("branch_widths"))
        spec.branch_widths = j.at("branch_widths").get<std::vector<int64_t>>();
    if (j.contains("trunk_widths"))
        spec.trunk_widths = j.at("trunk_widths").get<std::vector<int64_t>>();
    if (j.contains("fusion_widths"))
        spec.fusion_widths = j.at("fusion_widths").get<std::vector<int64_t>>();
    if (j.contains("cloud_widths"))
        spec.cloud_widths = j.at("cloud_widths").get<std::vector<int64_t>>();
    if (j.contains("pointnet_scale")) spec.pointnet_scale = j.at("pointnet_scale").get<double>();
    return spec;
}

// --- training configuration ----------------------------------------------------

struct TrainConfig {
    ModelSpec model;
    std::string dataset_dir;
    int64_t iterations = 5000;
    int64_t batch_size = 16;
    double lr = 1e-3;
    int64_t resample_n = 256;
    uint64_t seed = 1;
    int64_t eval_interval = 100;
    std::string checkpoint_path;  // empty: keep in memory only
    std::string history_path;     // empty: no CSV

    void validate() const {
        model.validate();
        if (iterations < 1) throw ValidationError("train config: iterations must be >= 1");
        if (batch_size < 1) throw ValidationError("train config: batch size must be >= 1");
        if (!(lr >= 0.0)) throw ValidationError("train config: lr must be >= 0");
        if (resample_n < 1) throw ValidationError("train config: resample size must be >= 1");
        if (eval_interval < 1) throw ValidationError("train config: eval interval must be >= 1");
        if (dataset_dir.empty()) throw ValidationError("train config: dataset path is empty");
    }
};

struct HistoryRow {
    int64_t iteration = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool has_val = false;
};

inline void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << "iteration,train_loss,val_loss\n";
    out.precision(17);
    for (const auto& row : history) {
        out << row.iteration << "," << row.train_loss << ",";
        if (row.has_val) out << row.val_loss;
        out << "\n";
    }
}

// --- checkpoint -------------------------------------------------------------------

// Everything needed to reproduce eval-mode outputs bitwise and resume
// training: spec, parameters, batchnorm running statistics, optimizer
// moments, normalization stats, and the loss history.
struct Checkpoint {
    ModelSpec spec;
    FieldStats stats;
    int64_t resample_n = 256;
    uint64_t seed = 0;
    int64_t iteration = 0;

    std::vector<std::vector<double>> params;  // construction order
    struct BnSnapshot {
        std::vector<double> mean, var;
        int64_t steps = 0;
    };
    std::vector<BnSnapshot> bn;

    int64_t opt_step = 0;
    std::vector<std::vector<double>> opt_m, opt_v;

    std::vector<HistoryRow> history;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    detail::ByteWriter w(out);
    w.bytes("PDNC", 4);
    w.u32(1);  // version

    nlohmann::json meta = {{"spec", spec_to_json(ckpt.spec)},
                           {"stats", stats_to_json(ckpt.stats)},
                           {"resample_n", ckpt.resample_n},
                           {"seed", ckpt.seed},
                           {"iteration", ckpt.iteration},
                           {"opt_step", ckpt.opt_step}};
    const std::string blob = meta.dump();
    w.u64(blob.size());
    w.bytes(blob.data(), blob.size());

    auto write_arrays = [&](const std::vector<std::vector<double>>& arrays) {
        w.u64(arrays.size());
        for (const auto& a : arrays) {
            w.u64(a.size());
            for (double v : a) w.f64(v);
        }
    };
    write_arrays(ckpt.params);
    w.u64(ckpt.bn.size());
    for (const auto& s : ckpt.bn) {
        w.u64(s.mean.size());
        for (double v : s.mean) w.f64(v);
        for (double v : s.var) w.f64(v);
        w.u64(static_cast<uint64_t>(s.steps));
    }
    write_arrays(ckpt.opt_m);
    write_arrays(ckpt.opt_v);
    w.u64(ckpt.history.size());
    for (const auto& row : ckpt.history) {
        w.u64(static_cast<uint64_t>(row.iteration));
        w.f64(row.train_loss);
        w.u8(row.has_val ? 1 : 0);
        w.f64(row.val_loss);
    }
    if (!out) throw FormatError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
    detail::ByteReader r(in, path);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), 4, "magic");
    if (std::string_view(magic.data(), 4) != "PDNC")
        throw FormatError(path + ": bad magic at byte offset 0: expected 'PDNC'");
    const uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));

    const uint64_t blob_len = r.u64();
    std::string blob(blob_len, '\0');
    r.bytes(blob.data(), blob_len, "metadata");
    Checkpoint ckpt;
    try {
        nlohmann::json meta = nlohmann::json::parse(blob);
        ckpt.spec = spec_from_json(meta.at("spec"));
        ckpt.stats = stats_from_json(meta.at("stats"));
        ckpt.resample_n = meta.at("resample_n").get<int64_t>();
        ckpt.seed = meta.at("seed").get<uint64_t>();
        ckpt.iteration = meta.at("iteration").get<int64_t>();
        ckpt.opt_step = meta.at("opt_step").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad metadata blob: " + e.what());
    }

    auto read_arrays = [&](std::vector<std::vector<double>>& arrays) {
        arrays.resize(r.u64());
        for (auto& a : arrays) {
            a.resize(r.u64());
            for (auto& v : a) v = r.f64();
        }
    };
    read_arrays(ckpt.params);
    ckpt.bn.resize(r.u64());
    for (auto& s : ckpt.bn) {
        const uint64_t ch = r.u64();
        s.mean.resize(ch);
        s.var.resize(ch);
        for (auto& v : s.mean) v = r.f64();
        for (auto& v : s.var) v = r.f64();
        s.steps = static_cast<int64_t>(r.u64());
    }
    read_arrays(ckpt.opt_m);
    read_arrays(ckpt.opt_v);
    ckpt.history.resize(r.u64());
    for (auto& row : ckpt.history) {
        row.iteration = static_cast<int64_t>(r.u64());
        row.train_loss = r.f64();
        row.has_val = r.u8() != 0;
        row.val_loss = r.f64();
    }
    return ckpt;
}

// Captures the live model + optimizer into a checkpoint.
inline Checkpoint snapshot(Model& model, const FieldStats& stats, int64_t resample_n,
                           uint64_t seed, int64_t iteration, AdamW& opt,
                           std::vector<HistoryRow> history) {
    Checkpoint ckpt;
    ckpt.spec = model.spec();
    ckpt.stats = stats;
    ckpt.resample_n = resample_n;
    ckpt.seed = seed;
    ckpt.iteration = iteration;
    for (const auto& p : model.parameters()) ckpt.params.push_back(p.value.values());
    for (const auto* state : model.bn_states())
        ckpt.bn.push_back({state->running_mean, state->running_var, state->steps});
    ckpt.opt_step = opt.step_count();
    ckpt.opt_m = opt.first_moments();
    ckpt.opt_v = opt.second_moments();
    ckpt.history = std::move(history);
    return ckpt;
}

// Rebuilds the model and overwrites parameters and batchnorm state from the
// checkpoint. Reload reproduces eval-mode outputs bitwise (64-bit storage).
inline std::unique_ptr<Model> restore_model(const Checkpoint& ckpt) {
    auto model = make_model(ckpt.spec, 0);
    auto& params = model->parameters();
    if (params.size() != ckpt.params.size())
        throw FormatError("checkpoint: parameter count " + std::to_string(ckpt.params.size()) +
                          " does not match spec (" + std::to_string(params.size()) + ")");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].value.values().size() != ckpt.params[i].size())
            throw FormatError("checkpoint: parameter '" + params[i].name + "' has " +
                              std::to_string(ckpt.params[i].size()) + " values, expected " +
                              std::to_string(params[i].value.values().size()));
        params[i].value.values() = ckpt.params[i];
    }
    auto& states = model->bn_states();
    if (states.size() != ckpt.bn.size())
        throw FormatError("checkpoint: batchnorm state count mismatch");
    for (size_t i = 0; i < states.size(); ++i) {
        states[i]->running_mean = ckpt.bn[i].mean;
        states[i]->running_var = ckpt.bn[i].var;
        states[i]->steps = ckpt.bn[i].steps;
    }
    return model;
}

// --- training loop -----------------------------------------------------------------

namespace detail {

inline ModelInputs batch_inputs(const Batch& batch) {
    ModelInputs in;
    in.condition = batch.condition;
    in.coords = batch.coords;
    in.sdf = batch.sdf;
    return in;
}

// Fixed validation batches: deterministic resample seeds, recomputed at every
// eval interval on the same point sets.
inline double validation_loss(Model& model, const Dataset& data,
                              const std::vector<size_t>& val_ids, int64_t batch_size, int64_t n,
                              uint64_t seed) {
    double acc = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < val_ids.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<size_t> ids(val_ids.begin() + static_cast<int64_t>(start),
                                val_ids.begin() +
                                    std::min(val_ids.size(), start + static_cast<size_t>(batch_size)));
        Batch batch = make_batch(data, ids, n, derive_seed(seed, 0x7a1, batches), model.head());
        Tensor out = model.forward(batch_inputs(batch), /*train=*/false);
        acc += mse_loss(out, batch.targets).item();
        ++batches;
    }
    return batches ? acc / static_cast<double>(batches) : 0.0;
}

}  // namespace detail

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<HistoryRow> history;
};

// MSE on normalized targets minimized by AdamW; deterministic per seed in
// single-threaded mode. A non-finite loss aborts with the last periodic
// checkpoint retained on disk.
inline TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    Dataset data(cfg.dataset_dir);
    const auto train_ids = data.split_ids(Split::Train);
    const auto val_ids = data.split_ids(Split::Val);
    if (train_ids.empty()) throw ValidationError("train: dataset has no training samples");

    auto model = make_model(cfg.model, derive_seed(cfg.seed, 0x30de1));
    AdamWOptions opt_options;
    opt_options.lr = cfg.lr;
    AdamW opt(opt_options);

    Rng pick_rng(derive_seed(cfg.seed, 0x9100));
    std::vector<HistoryRow> history;
    history.reserve(static_cast<size_t>(cfg.iterations));

    const HeadKind head = cfg.model.head();
    for (int64_t it = 1; it <= cfg.iterations; ++it) {
        // distinct ids when the pool allows; bootstrap otherwise
        std::vector<size_t> ids;
        if (static_cast<size_t>(cfg.batch_size) <= train_ids.size()) {
            std::vector<size_t> pool = train_ids;
            for (int64_t k = 0; k < cfg.batch_size; ++k) {
                auto j = static_cast<size_t>(
                    pick_rng.uniform_int(k, static_cast<int64_t>(pool.size()) - 1));
                std::swap(pool[static_cast<size_t>(k)], pool[j]);
                ids.push_back(pool[static_cast<size_t>(k)]);
            }
        } else {
            for (int64_t k = 0; k < cfg.batch_size; ++k)
                ids.push_back(train_ids[static_cast<size_t>(
                    pick_rng.uniform_int(0, static_cast<int64_t>(train_ids.size()) - 1))]);
        }

        Batch batch = make_batch(data, ids, cfg.resample_n,
                                 derive_seed(cfg.seed, 0x17e4, static_cast<uint64_t>(it)), head);
        model->zero_grad();
        Tensor out = model->forward(detail::batch_inputs(batch), /*train=*/true);
        Tensor loss = mse_loss(out, batch.targets);
        const double loss_value = loss.item();
        if (!std::isfinite(loss_value))
            throw NonFiniteError("train: non-finite loss at iteration " + std::to_string(it) +
                                 "; last checkpoint retained");
        loss.backward();
        opt.step(model->parameters());

        HistoryRow row{it, loss_value, 0.0, false};
        if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
            if (!val_ids.empty()) {
                row.val_loss = detail::validation_loss(*model, data, val_ids, cfg.batch_size,
                                                       cfg.resample_n, cfg.seed);
                row.has_val = true;
            }
            history.push_back(row);
            if (!cfg.checkpoint_path.empty())
                save_checkpoint(snapshot(*model, data.stats(), cfg.resample_n, cfg.seed, it, opt,
                                         history),
                                cfg.checkpoint_path);
        } else {
            history.push_back(row);
        }
    }

    TrainResult result;
    result.history = history;
    result.checkpoint = snapshot(*model, data.stats(), cfg.resample_n, cfg.seed, cfg.iterations,
                                 opt, std::move(history));
    if (!cfg.checkpoint_path.empty()) save_checkpoint(result.checkpoint, cfg.checkpoint_path);
    if (!cfg.history_path.empty()) write_history_csv(result.history, cfg.history_path);
    return result;
}

// --- inference -----------------------------------------------------------------------

struct PredictInput {
    std::vector<double> coords;  // M x 3, physical units
    std::vector<double> sdf;     // M, physical units; empty if unavailable
    LoadCondition condition;
};

// Eval-mode forward in chunks, denormalized to physical units. The branch
// embedding of the operator models is computed once from a fixed cloud and
// reused for every chunk; the pointwise trunk makes the chunked result match
// the unchunked one.
inline std::vector<double> predict(Model& model, const FieldStats& stats, int64_t trained_n,
                                   const PredictInput& input, int64_t chunk_size = 8192) {
    input.condition.validate();
    const auto m = static_cast<int64_t>(input.coords.size() / 3);
    if (m < 1 || input.coords.size() != static_cast<size_t>(3 * m))
        throw ValidationError("predict: coords must be M x 3");
    const ModelSpec& spec = model.spec();
    if (spec.use_sdf && input.sdf.empty())
        throw SchemaError("predict: model expects per-point SDF (use_sdf=true); missing input: sdf");
    if (!input.sdf.empty() && input.sdf.size() != static_cast<size_t>(m))
        throw ValidationError("predict: sdf length " + std::to_string(input.sdf.size()) +
                              " does not match node count " + std::to_string(m));
    if (spec.architecture == Architecture::PointNet && m != trained_n)
        throw UnsupportedResolutionError(
            "pointnet inference requires the trained resample size N=" + std::to_string(trained_n) +
            ", got M=" + std::to_string(m));

    // normalize inputs
    const std::array<Affine, 3> coord_aff{stats.coord_affine(0), stats.coord_affine(1),
                                          stats.coord_affine(2)};
    std::vector<double> coords_n(input.coords.size());
    for (int64_t i = 0; i < m; ++i)
        for (size_t a = 0; a < 3; ++a)
            coords_n[static_cast<size_t>(i * 3) + a] =
                coord_aff[a].apply(input.coords[static_cast<size_t>(i * 3) + a]);
    std::vector<double> sdf_n;
    if (!input.sdf.empty()) {
        const Affine sdf_aff = stats.sdf_affine();
        sdf_n.resize(input.sdf.size());
        for (size_t i = 0; i < sdf_n.size(); ++i) sdf_n[i] = sdf_aff.apply(input.sdf[i]);
    }
    Tensor condition = Tensor::from(
        {1, 5}, {stats.mass_affine().apply(input.condition.mass),
                 stats.force_affine().apply(input.condition.force), input.condition.direction.x,
                 input.condition.direction.y, input.condition.direction.z});

    // frozen branch embedding for the operator models
    Tensor branch;
    auto* deeponet = dynamic_cast<DeepONetModel*>(&model);
    auto* pdon = dynamic_cast<PointDeepONetModel*>(&model);
    if (deeponet) {
        branch = deeponet->branch_latent(condition);
    } else if (pdon) {
        // branch cloud: the model's trained resolution, resampled from the
        // provided points with a fixed seed
        auto idx = resample_fixed(m, trained_n, 0xc10d);
        std::vector<double> cloud(static_cast<size_t>(trained_n * 3));
        for (int64_t i = 0; i < trained_n; ++i)
            std::copy_n(coords_n.data() + idx[static_cast<size_t>(i)] * 3, 3,
                        cloud.data() + i * 3);
        branch = pdon->branch_alpha(condition, Tensor::from({1, trained_n, 3}, std::move(cloud)),
                                    /*train=*/false);
    }

    std::array<Affine, 4> target_aff{
        stats.target_affine(0, model.head()), stats.target_affine(1, model.head()),
        stats.target_affine(2, model.head()), stats.target_affine(3, model.head())};

    // PointNet's global pooling spans all points, so it must not be chunked
    const int64_t chunk =
        spec.architecture == Architecture::PointNet ? m : std::max<int64_t>(1, chunk_size);
    std::vector<double> out(static_cast<size_t>(m * 4));
    for (int64_t start = 0; start < m; start += chunk) {
        const int64_t len = std::min(chunk, m - start);
        std::vector<double> chunk_coords(coords_n.begin() + start * 3,
                                         coords_n.begin() + (start + len) * 3);
        Tensor coords = Tensor::from({1, len, 3}, std::move(chunk_coords));
        Tensor sdf;
        if (!sdf_n.empty())
            sdf = Tensor::from({1, len}, std::vector<double>(sdf_n.begin() + start,
                                                             sdf_n.begin() + start + len));
        Tensor pred;
        if (deeponet) {
            pred = latent_head(branch, deeponet->trunk_features(coords, sdf));
        } else if (pdon) {
            pred = pdon->head_from_alpha(branch, pdon->trunk_alpha(coords, sdf));
        } else {
            ModelInputs in;
            in.condition = condition;
            in.coords = coords;
            in.sdf = sdf;
            pred = model.forward(in, /*train=*/false);
        }
        for (int64_t i = 0; i < len; ++i)
            for (size_t f = 0; f < 4; ++f)
                out[static_cast<size_t>((start + i) * 4) + f] =
                    target_aff[f].invert(pred.values()[static_cast<size_t>(i * 4) + f]);
    }
    return out;
}

// --- evaluation ------------------------------------------------------------------------

enum class EvalMode { Sampled, Full, Both };

// node-index list in, physical-unit predictions (len x 4) out
using PredictFn =
    std::function<std::vector<double>(const SampleRecord&, const std::vector<int64_t>&)>;

namespace detail {

inline void append_rows(MetricsReport& report, const char* mode,
                        std::array<std::array<std::vector<double>, 2>, 12>& pools) {
    for (size_t label = 0; label < 3; ++label)
        for (size_t field = 0; field < 4; ++field) {
            auto& [y, yhat] = pools[label * 4 + field];
            if (y.empty()) continue;
            MetricsRow row;
            row.field = FieldStats::target_names[field];
            row.label = static_cast<LoadLabel>(label);
            row.mode = mode;
            row.n = static_cast<int64_t>(y.size());
            row.metrics = compute_metrics(y, yhat);
            if (row.metrics.rmse < row.metrics.mae - 1e-12)
                throw Error("metrics report: RMSE < MAE, which is impossible");
            report.rows.push_back(std::move(row));
        }
}

}  // namespace detail

// Evaluation harness over an arbitrary predictor (tests inject oracles here).
inline MetricsReport evaluate_fn(const Dataset& data, Split split, EvalMode mode,
                                 int64_t resample_n, uint64_t seed, const PredictFn& fn) {
    MetricsReport report;
    const auto ids = data.split_ids(split);
    if (ids.empty()) throw ValidationError("evaluate: split has no samples");

    auto run_mode = [&](bool full, const char* name) {
        std::array<std::array<std::vector<double>, 2>, 12> pools;
        for (size_t id : ids) {
            const SampleRecord& rec = data.record(id);
            std::vector<int64_t> idx;
            if (full) {
                idx.resize(static_cast<size_t>(rec.nodes()));
                std::iota(idx.begin(), idx.end(), 0);
            } else {
                idx = resample_fixed(rec.nodes(), resample_n,
                                     derive_seed(seed, 0xe7a1, static_cast<uint64_t>(id)));
            }
            std::vector<double> pred = fn(rec, idx);
            const auto label = static_cast<size_t>(rec.label);
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t f = 0; f < 4; ++f) {
                    pools[label * 4 + f][0].push_back(
                        rec.targets[static_cast<size_t>(idx[i] * 4) + f]);
                    pools[label * 4 + f][1].push_back(pred[i * 4 + f]);
                }
        }
        detail::append_rows(report, name, pools);
    };

    if (mode == EvalMode::Sampled || mode == EvalMode::Both) run_mode(false, "sampled");
    if (mode == EvalMode::Full || mode == EvalMode::Both) run_mode(true, "full");
    return report;
}

// Metrics in denormalized units grouped by load-direction label: "sampled"
// evaluates at the trained resample size, "full" at every stored node
// (operator models only).
inline MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& data, Split split,
                              EvalMode mode = EvalMode::Sampled) {
    if (ckpt.spec.architecture == Architecture::PointNet &&
        (mode == EvalMode::Full || mode == EvalMode::Both))
        throw UnsupportedResolutionError(
            "pointnet cannot run full-resolution evaluation; it is bound to the trained N");
    auto model = restore_model(ckpt);
    PredictFn fn = [&](const SampleRecord& rec, const std::vector<int64_t>& idx) {
        PredictInput input;
        input.coords.reserve(idx.size() * 3);
        input.sdf.reserve(idx.size());
        for (int64_t i : idx) {
            input.coords.push_back(rec.coords[static_cast<size_t>(i * 3)]);
            input.coords.push_back(rec.coords[static_cast<size_t>(i * 3 + 1)]);
            input.coords.push_back(rec.coords[static_cast<size_t>(i * 3 + 2)]);
            input.sdf.push_back(rec.sdf[static_cast<size_t>(i)]);
        }
        input.condition.mass = rec.condition[0];
        input.condition.force = rec.condition[1];
        input.condition.direction =
            normalized({rec.condition[2], rec.condition[3], rec.condition[4]});
        return predict(*model, ckpt.stats, ckpt.resample_n, input);
    };
    return evaluate_fn(data, split, mode, ckpt.resample_n, ckpt.seed, fn);
}

}  // namespace pdn
