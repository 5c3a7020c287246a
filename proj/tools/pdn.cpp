// Command-line front end: dataset generation, SDF queries, training,
// evaluation, prediction, and artifact inspection.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdn/config.hpp"
#include "pdn/data.hpp"
#include "pdn/geometry.hpp"
#include "pdn/metrics.hpp"
#include "pdn/models.hpp"
#include "pdn/train.hpp"

namespace fs = std::filesystem;
using namespace pdn;

namespace {

Vec3 parse_vec3(const std::string& s) {
    std::istringstream is(s);
    Vec3 v;
    char c1 = 0, c2 = 0;
    if (!(is >> v.x >> c1 >> v.y >> c2 >> v.z) || c1 != ',' || c2 != ',')
        throw ValidationError("expected 'x,y,z', got '" + s + "'");
    return v;
}

std::vector<Vec3> read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open points file '" + path + "'");
    std::vector<Vec3> points;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Vec3 v;
        char c1 = 0, c2 = 0;
        if (!(ls >> v.x >> c1 >> v.y >> c2 >> v.z)) {
            if (lineno == 1) continue;  // header
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected x,y,z");
        }
        if (c1 != ',' || c2 != ',')
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected x,y,z");
        points.push_back(v);
    }
    return points;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw FormatError("cannot open '" + path + "' for writing");
    return file;
}

nlohmann::json load_effective_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
    nlohmann::json config = load_config_file(path);
    for (const auto& o : overrides) apply_override(config, o);
    return config;
}

int cmd_generate(const std::string& config_path, const std::vector<std::string>& overrides,
                 std::optional<uint64_t> seed, std::string out_dir) {
    nlohmann::json config = load_effective_config(config_path, overrides);
    if (seed && config.contains("data") && config.at("data").contains("seed"))
        config["data"]["seed"] = *seed;
    GenConfig gen = gen_from_config(config);
    if (seed) gen.seed = *seed;
    if (out_dir.empty()) {
        out_dir = config.contains("data") && config.at("data").contains("out_dir")
                      ? config.at("data").at("out_dir").get<std::string>()
                      : "dataset";
    }
    Manifest manifest = generate_synthetic(gen, out_dir);
    write_config_echo(config, out_dir);
    std::cout << "generated " << manifest.entries.size() << " samples into " << out_dir << "\n";
    return 0;
}

int cmd_sdf(const std::string& obj_path, const std::vector<std::string>& probes,
            const std::string& points_path, const std::string& out_path) {
    TriMesh mesh = load_obj_file(obj_path);
    std::vector<Vec3> points;
    for (const auto& p : probes) points.push_back(parse_vec3(p));
    if (!points_path.empty())
        for (const auto& p : read_points_csv(points_path)) points.push_back(p);
    if (points.empty()) throw ValidationError("sdf: no probes given (use --probe or --points)");

    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    out << "x,y,z,sdf\n";
    out.precision(12);
    for (const auto& p : points)
        out << p.x << "," << p.y << "," << p.z << "," << sdf_mesh(mesh, p) << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              std::optional<uint64_t> seed) {
    nlohmann::json config = load_effective_config(config_path, overrides);
    if (seed && config.contains("train") && config.at("train").contains("seed"))
        config["train"]["seed"] = *seed;
    TrainConfig cfg = train_from_config(config);
    if (seed) cfg.seed = *seed;

    const std::string out_dir = train_out_dir(config);
    fs::create_directories(out_dir);
    cfg.checkpoint_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
    cfg.history_path = (fs::path(out_dir) / "history.csv").string();
    write_config_echo(config, out_dir);

    TrainResult result = train(cfg);
    std::cout << "trained " << architecture_name(cfg.model.architecture) << " for "
              << cfg.iterations << " iterations; final train loss "
              << result.history.back().train_loss << "\n"
              << "checkpoint: " << cfg.checkpoint_path << "\n"
              << "history:    " << cfg.history_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::string& mode, const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset data(data_dir);
    Split sp = split == "train" ? Split::Train : Split::Val;
    EvalMode em = mode == "full" ? EvalMode::Full
                                 : (mode == "both" ? EvalMode::Both : EvalMode::Sampled);
    MetricsReport report = evaluate(ckpt, data, sp, em);
    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    out << report.to_csv();
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& sample_path,
                const std::string& obj_path, double mass, double force,
                const std::string& direction, int64_t nodes, uint64_t node_seed,
                const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto model = restore_model(ckpt);

    PredictInput input;
    if (!sample_path.empty()) {
        SampleRecord rec = read_sample(sample_path);
        input.coords = rec.coords;
        input.sdf = rec.sdf;
        input.condition.mass = rec.condition[0];
        input.condition.force = rec.condition[1];
        input.condition.direction = normalized({rec.condition[2], rec.condition[3], rec.condition[4]});
    } else {
        TriMesh mesh = load_obj_file(obj_path);
        PointSet points = sample_volume(Solid{mesh}, nodes, node_seed);
        input.coords.reserve(points.coords.size() * 3);
        for (const auto& p : points.coords) {
            input.coords.push_back(p.x);
            input.coords.push_back(p.y);
            input.coords.push_back(p.z);
        }
        input.sdf = points.sdf;
        input.condition.mass = mass;
        input.condition.force = force;
        input.condition.direction = normalized(parse_vec3(direction));
    }

    std::vector<double> pred = predict(*model, ckpt.stats, ckpt.resample_n, input);
    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    out << "x,y,z,u_x,u_y,u_z,von_mises\n";
    out.precision(12);
    const auto m = static_cast<size_t>(input.coords.size() / 3);
    for (size_t i = 0; i < m; ++i) {
        out << input.coords[i * 3] << "," << input.coords[i * 3 + 1] << ","
            << input.coords[i * 3 + 2];
        for (size_t f = 0; f < 4; ++f) out << "," << pred[i * 4 + f];
        out << "\n";
    }
    return 0;
}

int cmd_inspect(const std::string& data_dir, const std::string& ckpt_path) {
    if (!data_dir.empty()) {
        Manifest m = load_manifest((fs::path(data_dir) / "manifest.json").string());
        int train = 0, val = 0;
        std::array<int, 3> labels{};
        int64_t min_nodes = std::numeric_limits<int64_t>::max(), max_nodes = 0;
        for (const auto& e : m.entries) {
            (e.split == Split::Train ? train : val)++;
            labels[static_cast<size_t>(e.label)]++;
            min_nodes = std::min(min_nodes, e.nodes);
            max_nodes = std::max(max_nodes, e.nodes);
        }
        std::cout << "dataset:        " << data_dir << "\n"
                  << "format version: " << m.format_version << "\n"
                  << "samples:        " << m.entries.size() << " (" << train << " train, " << val
                  << " val)\n"
                  << "labels:         vertical " << labels[0] << ", horizontal " << labels[1]
                  << ", diagonal " << labels[2] << "\n"
                  << "nodes/sample:   " << min_nodes << ".." << max_nodes << "\n"
                  << "global seed:    " << m.global_seed << "\n"
                  << "config hash:    " << m.config_hash << "\n";
        std::cout << "target ranges:\n";
        for (size_t f = 0; f < 4; ++f)
            std::cout << "  " << FieldStats::target_names[f] << ": [" << m.stats.targets[f].min
                      << ", " << m.stats.targets[f].max << "]\n";
    }
    if (!ckpt_path.empty()) {
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        int64_t params = 0;
        for (const auto& p : ckpt.params) params += static_cast<int64_t>(p.size());
        std::cout << "checkpoint:     " << ckpt_path << "\n"
                  << "architecture:   " << architecture_name(ckpt.spec.architecture) << "\n"
                  << "latent size:    " << ckpt.spec.latent << "\n"
                  << "parameters:     " << params << "\n"
                  << "trained N:      " << ckpt.resample_n << "\n"
                  << "iteration:      " << ckpt.iteration << "\n"
                  << "seed:           " << ckpt.seed << "\n"
                  << "history rows:   " << ckpt.history.size() << "\n";
    }
    if (data_dir.empty() && ckpt_path.empty())
        throw ValidationError("inspect: pass --data and/or --checkpoint");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud operator-learning surrogates for displacement and stress fields"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    std::string gen_config;
    std::vector<std::string> gen_sets;
    std::string gen_out;
    std::optional<uint64_t> gen_seed;
    gen->add_option("--config", gen_config, "config file (JSON)")->required();
    gen->add_option("--set", gen_sets, "override config keys, e.g. data.n_samples=64");
    gen->add_option("--out", gen_out, "output directory (default: data.out_dir or 'dataset')");
    gen->add_option("--seed", gen_seed, "override the generator seed");

    // sdf
    auto* sdf_cmd = app.add_subcommand("sdf", "signed distances for an OBJ mesh");
    std::string sdf_obj, sdf_points, sdf_out;
    std::vector<std::string> sdf_probes;
    sdf_cmd->add_option("--obj", sdf_obj, "closed triangular OBJ mesh")->required();
    sdf_cmd->add_option("--probe", sdf_probes, "probe point 'x,y,z' (repeatable)");
    sdf_cmd->add_option("--points", sdf_points, "CSV of probe points (x,y,z per line)");
    sdf_cmd->add_option("--out", sdf_out, "output CSV (default: stdout)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string train_config;
    std::vector<std::string> train_sets;
    std::optional<uint64_t> train_seed;
    train_cmd->add_option("--config", train_config, "config file (JSON)")->required();
    train_cmd->add_option("--set", train_sets, "override config keys, e.g. train.lr=5e-4");
    train_cmd->add_option("--seed", train_seed, "override the training seed");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_split = "val", eval_mode = "sampled", eval_out;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--split", eval_split, "train|val (default val)")
        ->check(CLI::IsMember({"train", "val"}));
    eval_cmd->add_option("--mode", eval_mode, "sampled|full|both (default sampled)")
        ->check(CLI::IsMember({"sampled", "full", "both"}));
    eval_cmd->add_option("--out", eval_out, "output CSV (default: stdout)");

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "predict fields for a sample or an OBJ mesh");
    std::string pred_ckpt, pred_sample, pred_obj, pred_dir = "0,0,1", pred_out;
    double pred_mass = 1.0, pred_force = 1.0;
    int64_t pred_nodes = 2048;
    uint64_t pred_node_seed = 1;
    pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
    pred_cmd->add_option("--sample", pred_sample, "sample file (.pdn)");
    pred_cmd->add_option("--obj", pred_obj, "closed OBJ mesh (volume-sampled for nodes)");
    pred_cmd->add_option("--mass", pred_mass, "mass for --obj runs");
    pred_cmd->add_option("--force", pred_force, "force magnitude for --obj runs");
    pred_cmd->add_option("--direction", pred_dir, "load direction 'x,y,z' for --obj runs");
    pred_cmd->add_option("--nodes", pred_nodes, "node count for --obj runs (default 2048)");
    pred_cmd->add_option("--node-seed", pred_node_seed, "sampling seed for --obj runs");
    pred_cmd->add_option("--out", pred_out, "output CSV (default: stdout)");

    // inspect
    auto* ins_cmd = app.add_subcommand("inspect", "summarize a dataset or checkpoint");
    std::string ins_data, ins_ckpt;
    ins_cmd->add_option("--data", ins_data, "dataset directory");
    ins_cmd->add_option("--checkpoint", ins_ckpt, "checkpoint file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_config, gen_sets, gen_seed, gen_out);
        if (sdf_cmd->parsed()) return cmd_sdf(sdf_obj, sdf_probes, sdf_points, sdf_out);
        if (train_cmd->parsed()) return cmd_train(train_config, train_sets, train_seed);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_mode, eval_out);
        if (pred_cmd->parsed()) {
            if (pred_sample.empty() == pred_obj.empty()) {
                std::cerr << "predict: pass exactly one of --sample or --obj\n";
                return 2;
            }
            return cmd_predict(pred_ckpt, pred_sample, pred_obj, pred_mass, pred_force, pred_dir,
                               pred_nodes, pred_node_seed, pred_out);
        }
        if (ins_cmd->parsed()) return cmd_inspect(ins_data, ins_ckpt);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
