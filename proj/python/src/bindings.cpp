#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dspsd/dataio.hpp"
#include "dspsd/errors.hpp"
#include "dspsd/evalviz.hpp"
#include "dspsd/model_io.hpp"
#include "dspsd/pipeline.hpp"

namespace py = pybind11;
using namespace dspsd;

namespace {

// Configs cross the boundary as JSON text; the Python wrapper handles dicts.
TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    if (!text.empty()) {
        try {
            cfg = config_from_json(nlohmann::json::parse(text));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("invalid config JSON: ") + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

py::dict manifest_dict(const DatasetManifest& m) {
    py::dict d;
    d["recipe"] = m.recipe;
    d["seed"] = m.seed;
    d["accounts"] = m.accounts;
    d["contracts"] = m.contracts;
    d["events"] = m.events;
    d["positives"] = m.positives;
    return d;
}

py::dict prf_dict(const Prf& p) {
    py::dict d;
    d["precision"] = p.precision;
    d["recall"] = p.recall;
    d["f"] = p.f;
    return d;
}

}  // namespace

PYBIND11_MODULE(_dspsd, m) {
    m.doc() = "Smart Ponzi scheme detection on temporal transaction graphs";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_KeyError);

    m.def("generate", [](const std::string& out_dir, std::uint64_t seed, const std::string& recipe) {
        const Dataset d = generate_dataset(recipe_by_name(recipe), seed);
        return manifest_dict(write_dataset(d, out_dir, recipe, seed));
    }, py::arg("out_dir"), py::arg("seed") = 7, py::arg("recipe") = "default");

    m.def("train", [](const std::string& data_dir, const std::string& out_path, const std::string& config) {
        const TrainConfig cfg = parse_config(config);
        const TemporalGraph g = load_dataset(data_dir).graph();
        TrainResult r = [&] {
            py::gil_scoped_release release;
            return train_model(g, cfg);
        }();
        save_model(r.model, out_path);
        py::dict out;
        out["stage1_loss"] = r.stage1.epoch_loss;
        out["stage2_loss"] = r.stage2.epoch_loss;
        return out;
    }, py::arg("data_dir"), py::arg("out_path"), py::arg("config") = "");

    m.def("detect", [](const std::string& model_path, const std::string& data_dir,
                       std::vector<std::string> ids) {
        const ModelBundle model = load_model(model_path);
        const TemporalGraph g = load_dataset(data_dir).graph();
        std::vector<AccountId> targets;
        if (ids.empty()) {
            for (const auto& a : g.accounts())
                if (a.kind == AccountKind::Contract) targets.push_back(a.id);
        } else {
            targets.assign(ids.begin(), ids.end());
        }
        py::list rows;
        for (const auto& d : detect(targets, model, g)) {
            py::dict row;
            row["id"] = d.id.value;
            row["ok"] = d.ok;
            row["ponzi"] = d.ok ? py::object(py::bool_(d.label == Label::Ponzi)) : py::object(py::none());
            row["margin"] = d.margin;
            row["probability"] = d.probability;
            row["error"] = d.error;
            rows.append(row);
        }
        return rows;
    }, py::arg("model_path"), py::arg("data_dir"), py::arg("ids") = std::vector<std::string>{});

    m.def("evaluate", [](const std::string& data_dir, const std::string& config, std::size_t folds) {
        const TrainConfig cfg = parse_config(config);
        const TemporalGraph g = load_dataset(data_dir).graph();
        const CvReport report = [&] {
            py::gil_scoped_release release;
            return cross_validate(g, cfg, {folds, 1});
        }();
        py::list per_fold;
        for (const auto& f : report.folds) {
            py::dict d = prf_dict(f.metrics);
            d["fold"] = f.fold;
            d["ok"] = f.ok;
            per_fold.append(d);
        }
        py::dict out;
        out["folds"] = per_fold;
        out["mean"] = prf_dict(report.mean);
        out["partial"] = report.partial;
        return out;
    }, py::arg("data_dir"), py::arg("config") = "", py::arg("folds") = 10);

    m.def("importance", [](const std::string& data_dir, std::size_t top, bool smooth_idf) {
        const Dataset d = load_dataset(data_dir);
        py::list rows;
        for (const auto& r : tfidf_opcode_importance(d.accounts, {smooth_idf, top}))
            rows.append(py::make_tuple(r.opcode, r.score, r.cls == Label::Ponzi ? "ponzi" : "normal"));
        return rows;
    }, py::arg("data_dir"), py::arg("top") = 80, py::arg("smooth_idf") = false);

    m.def("prf", [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
        return prf_dict(prf({tp, fp, fn, tn}));
    }, py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn") = 0);

    m.def("kfold_split", [](const std::vector<std::string>& ids, std::size_t k, std::uint64_t seed) {
        const auto plan = kfold_split(std::vector<AccountId>(ids.begin(), ids.end()), k, seed);
        std::vector<std::vector<std::string>> out;
        for (const auto& f : plan.folds) {
            out.emplace_back();
            for (const auto& id : f) out.back().push_back(id.value);
        }
        return out;
    }, py::arg("ids"), py::arg("k") = 10, py::arg("seed") = 7);

    m.def("default_config", [] { return config_to_json(TrainConfig{}).dump(); });
}
