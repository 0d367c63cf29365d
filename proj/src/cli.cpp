#include "dspsd/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "dspsd/dataio.hpp"
#include "dspsd/errors.hpp"
#include "dspsd/evalviz.hpp"
#include "dspsd/log.hpp"
#include "dspsd/model_io.hpp"
#include "dspsd/pipeline.hpp"

namespace dspsd {

namespace {

// Training flags shared by train and evaluate. Unset flags leave the config
// file (or built-in default) value alone.
struct ConfigFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs_stage1, epochs_stage2, batch_size, neg_k, replay_edges;
    std::optional<double> lr, lambda, dropout;
    std::optional<std::string> ablation;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON file with training settings");
        app->add_option("--seed", seed, "random seed (overrides the config file)");
        app->add_option("--epochs-stage1", epochs_stage1, "embedding epochs");
        app->add_option("--epochs-stage2", epochs_stage2, "classifier epochs");
        app->add_option("--batch-size", batch_size, "minibatch size");
        app->add_option("--neg-k", neg_k, "negative samples per edge");
        app->add_option("--replay-edges", replay_edges, "prior events replayed per event in stage 1");
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--lambda", lambda, "L2 weight");
        app->add_option("--dropout", dropout, "dropout rate on the sequence embedding");
        app->add_option("--ablation", ablation, "full | structure_only | opcode_only");
    }

    TrainConfig resolve() const {
        TrainConfig c = config_path.empty() ? TrainConfig{} : load_config(config_path);
        if (seed) c.seed = *seed;
        if (epochs_stage1) c.epochs_stage1 = *epochs_stage1;
        if (epochs_stage2) c.epochs_stage2 = *epochs_stage2;
        if (batch_size) c.batch_size = *batch_size;
        if (neg_k) c.neg_k = *neg_k;
        if (replay_edges) c.replay_edges = *replay_edges;
        if (lr) c.lr = *lr;
        if (lambda) c.lambda = *lambda;
        if (dropout) c.dropout = *dropout;
        if (ablation) c.ablation = ablation_from_string(*ablation);
        c.validate();
        return c;
    }
};

std::vector<AccountId> read_ids(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open id list " + path);
    std::vector<AccountId> ids;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.emplace_back(line);
    }
    return ids;
}

Dataset load_data(const std::string& dir, bool lenient) {
    return load_dataset(dir, lenient ? ParseMode::Lenient : ParseMode::Strict);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"DSPSD smart Ponzi scheme detector"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    std::string out_path, data_dir, model_path, ids_path, svg_path;
    std::string recipe = "default";
    std::uint64_t seed = 7;
    std::size_t folds = 10, jobs = 1, top = 80;
    bool lenient = false, smooth = false;
    ConfigFlags flags;

    auto* gen = app.add_subcommand("generate", "write a seeded synthetic dataset");
    gen->add_option("--out", out_path, "output directory")->required();
    gen->add_option("--seed", seed, "random seed");
    gen->add_option("--recipe", recipe, "default | small");

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_path, "model file")->required();
    train->add_flag("--lenient", lenient, "skip malformed transaction rows");
    flags.attach(train);

    auto* det = app.add_subcommand("detect", "classify accounts with a trained model");
    det->add_option("--model", model_path, "model file")->required();
    det->add_option("--data", data_dir, "dataset directory")->required();
    det->add_option("--ids", ids_path, "file with one account id per line (default: every contract)");
    det->add_option("--out", out_path, "CSV output (default: stdout)");
    det->add_flag("--lenient", lenient, "skip malformed transaction rows");

    auto* eval = app.add_subcommand("evaluate", "k-fold cross-validation");
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--folds", folds, "number of folds");
    eval->add_option("--jobs", jobs, "folds trained in parallel");
    eval->add_option("--out", out_path, "metrics CSV")->capture_default_str();
    eval->add_flag("--lenient", lenient, "skip malformed transaction rows");
    flags.attach(eval);

    auto* imp = app.add_subcommand("importance", "TF-IDF opcode importance");
    imp->add_option("--data", data_dir, "dataset directory")->required();
    imp->add_option("--out", out_path, "importance CSV (default: stdout)");
    imp->add_option("--top", top, "number of opcodes reported (0 = all)");
    imp->add_flag("--smooth-idf", smooth, "use ln((1+N)/(1+df)) + 1");

    auto* proj = app.add_subcommand("project", "2-D PCA projection of contract embeddings");
    proj->add_option("--model", model_path, "model file")->required();
    proj->add_option("--data", data_dir, "dataset directory")->required();
    proj->add_option("--out", out_path, "projection CSV")->required();
    proj->add_option("--svg", svg_path, "also write an SVG scatter plot");
    proj->add_option("--seed", seed, "power-iteration seed");
    proj->add_flag("--lenient", lenient, "skip malformed transaction rows");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    auto log = logger();
    try {
        if (*gen) {
            const Dataset d = generate_dataset(recipe_by_name(recipe), seed);
            const auto m = write_dataset(d, out_path, recipe, seed);
            log->info("wrote {} events, {} contracts ({} Ponzi) to {}", m.events, m.contracts, m.positives,
                      out_path);
        } else if (*train) {
            const TrainConfig config = flags.resolve();
            const TemporalGraph g = load_data(data_dir, lenient).graph();
            const TrainResult r = train_model(g, config);
            save_model(r.model, out_path);
            log->info("saved model to {}", out_path);
        } else if (*det) {
            const ModelBundle model = load_model(model_path);
            const TemporalGraph g = load_data(data_dir, lenient).graph();
            std::vector<AccountId> ids;
            if (ids_path.empty()) {
                for (const auto& a : g.accounts())
                    if (a.kind == AccountKind::Contract) ids.push_back(a.id);
            } else {
                ids = read_ids(ids_path);
            }
            const auto results = detect(ids, model, g);
            std::ofstream file;
            if (!out_path.empty()) {
                file.open(out_path, std::ios::binary);
                if (!file) throw DataError("cannot write " + out_path);
            }
            std::ostream& out = out_path.empty() ? std::cout : file;
            out << "id,label,margin,probability,error\n";
            std::size_t failed = 0;
            for (const auto& d : results) {
                out << d.id.value << ',';
                if (d.ok) {
                    out << (d.label == Label::Ponzi ? 1 : 0) << ',' << format_double(d.margin) << ','
                        << format_double(d.probability) << ",\n";
                } else {
                    ++failed;
                    out << ",,," << d.error << '\n';
                }
            }
            if (failed) log->error("{} of {} ids could not be scored", failed, results.size());
        } else if (*eval) {
            const TrainConfig config = flags.resolve();
            const TemporalGraph g = load_data(data_dir, lenient).graph();
            const CvReport report = cross_validate(g, config, {folds, jobs});
            write_metrics_csv(report, out_path.empty() ? "metrics.csv" : out_path);
            log->info("mean over {} folds: P={:.4f} R={:.4f} F={:.4f}{}", report.completed,
                      report.mean.precision, report.mean.recall, report.mean.f,
                      report.partial ? " (partial)" : "");
        } else if (*imp) {
            const Dataset d = load_data(data_dir, false);
            const auto rows = tfidf_opcode_importance(d.accounts, {smooth, top});
            if (out_path.empty()) {
                std::cout << "opcode,score,class\n";
                for (const auto& r : rows)
                    std::cout << r.opcode << ',' << r.score << ',' << (r.cls == Label::Ponzi ? "ponzi" : "normal")
                              << '\n';
            } else {
                write_importance_csv(rows, out_path);
            }
        } else if (*proj) {
            const ModelBundle model = load_model(model_path);
            const TemporalGraph g = load_data(data_dir, lenient).graph();
            const AlignedEmbedding aligned = align_embedding(model, g);
            NodeEmbedder embedder(g, aligned.params, model.config);
            std::vector<AccountId> ids;
            std::vector<std::vector<double>> points;
            std::vector<std::optional<Label>> labels;
            for (NodeIndex v = 0; v < g.num_nodes(); ++v) {
                const Account& a = g.account(v);
                if (a.kind != AccountKind::Contract) continue;
                ids.push_back(a.id);
                labels.push_back(a.label);
                points.push_back(embedder.embed(v, model.scaler, model.lstm));
            }
            const Projection p = project_2d(points, seed);
            if (p.degenerate) log->info("all embeddings are identical; projection is degenerate");
            write_projection_csv(ids, p, labels, out_path);
            if (!svg_path.empty()) write_projection_svg(p, labels, svg_path);
        }
    } catch (const ConfigError& e) {
        log->error("configuration error: {}", e.what());
        return kExitConfigError;
    } catch (const DataError& e) {
        log->error("data error: {}", e.what());
        return kExitDataError;
    } catch (const NotFoundError& e) {
        log->error("data error: {}", e.what());
        return kExitDataError;
    } catch (const std::exception& e) {
        log->error("{}", e.what());
        return 1;
    }
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dspsd
