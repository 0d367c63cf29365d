#include "dspsd/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dspsd/errors.hpp"

namespace dspsd {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor2& t) {
    json rows = json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto row = t.row(r);
        rows.push_back(json(std::vector<double>(row.begin(), row.end())));
    }
    return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(rows)}};
}

Tensor2 tensor_from_json(const json& j, const char* what) {
    try {
        const auto rows = j.at("rows").get<std::size_t>();
        const auto cols = j.at("cols").get<std::size_t>();
        const auto& data = j.at("data");
        if (data.size() != rows) throw ShapeError(std::string(what) + ": row count mismatch");
        Tensor2 t(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto row = data[r].get<std::vector<double>>();
            if (row.size() != cols) throw ShapeError(std::string(what) + ": column count mismatch");
            std::copy(row.begin(), row.end(), t.row(r).begin());
        }
        return t;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed tensor '") + what + "': " + e.what());
    }
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace

json config_to_json(const TrainConfig& c) {
    return json{{"structure_dim", c.structure_dim},
                {"feature_dim", c.feature_dim},
                {"opcode_dim", c.opcode_dim},
                {"filter_width", c.filter_width},
                {"max_opcodes", c.max_opcodes},
                {"lstm_hidden", c.lstm_hidden},
                {"sequence_len", c.sequence_len},
                {"mlp_widths", c.mlp_widths},
                {"lr", c.lr},
                {"lr_min", c.lr_min},
                {"lr_max", c.lr_max},
                {"batch_size", c.batch_size},
                {"neg_k", c.neg_k},
                {"noise_power", c.noise_power},
                {"lambda", c.lambda},
                {"dropout", c.dropout},
                {"epochs_stage1", c.epochs_stage1},
                {"epochs_stage2", c.epochs_stage2},
                {"replay_edges", c.replay_edges},
                {"seed", c.seed},
                {"ablation", to_string(c.ablation)},
                {"negatives_from_snapshot", c.negatives_from_snapshot},
                {"joint_finetune", c.joint_finetune},
                {"regularize_embeddings", c.regularize_embeddings},
                {"standardize_inputs", c.standardize_inputs}};
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const json known = config_to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    read_key(j, "structure_dim", c.structure_dim);
    read_key(j, "feature_dim", c.feature_dim);
    read_key(j, "opcode_dim", c.opcode_dim);
    read_key(j, "filter_width", c.filter_width);
    read_key(j, "max_opcodes", c.max_opcodes);
    read_key(j, "lstm_hidden", c.lstm_hidden);
    read_key(j, "sequence_len", c.sequence_len);
    read_key(j, "mlp_widths", c.mlp_widths);
    read_key(j, "lr", c.lr);
    read_key(j, "lr_min", c.lr_min);
    read_key(j, "lr_max", c.lr_max);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "neg_k", c.neg_k);
    read_key(j, "noise_power", c.noise_power);
    read_key(j, "lambda", c.lambda);
    read_key(j, "dropout", c.dropout);
    read_key(j, "epochs_stage1", c.epochs_stage1);
    read_key(j, "epochs_stage2", c.epochs_stage2);
    read_key(j, "replay_edges", c.replay_edges);
    read_key(j, "seed", c.seed);
    std::string ablation = to_string(c.ablation);
    read_key(j, "ablation", ablation);
    c.ablation = ablation_from_string(ablation);
    read_key(j, "negatives_from_snapshot", c.negatives_from_snapshot);
    read_key(j, "joint_finetune", c.joint_finetune);
    read_key(j, "regularize_embeddings", c.regularize_embeddings);
    read_key(j, "standardize_inputs", c.standardize_inputs);
    return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

json model_to_json(const ModelBundle& m) {
    json ids = json::array();
    for (const auto& id : m.node_ids) ids.push_back(id.value);

    std::vector<std::string> vocab(m.embedding.opcode.lexicon.index.size());
    for (const auto& [name, token] : m.embedding.opcode.lexicon.index) vocab.at(token - 1) = name;

    const auto& op = m.embedding.opcode;
    json lstm = {{"w_input", tensor_to_json(m.lstm.w_input)},
                 {"w_forget", tensor_to_json(m.lstm.w_forget)},
                 {"w_output", tensor_to_json(m.lstm.w_output)},
                 {"w_cell", tensor_to_json(m.lstm.w_cell)},
                 {"b_input", tensor_to_json(m.lstm.b_input)},
                 {"b_forget", tensor_to_json(m.lstm.b_forget)},
                 {"b_output", tensor_to_json(m.lstm.b_output)},
                 {"b_cell", tensor_to_json(m.lstm.b_cell)},
                 {"dropout", m.lstm.dropout}};
    json weights = json::array();
    json biases = json::array();
    for (std::size_t l = 0; l < m.classifier.weights.size(); ++l) {
        weights.push_back(tensor_to_json(m.classifier.weights[l]));
        biases.push_back(tensor_to_json(m.classifier.biases[l]));
    }
    return json{{"format", m.version},
                {"config", config_to_json(m.config)},
                {"node_ids", std::move(ids)},
                {"structure", tensor_to_json(m.embedding.structure.vectors)},
                {"opcode",
                 {{"vocabulary", vocab},
                  {"lexicon", tensor_to_json(op.lexicon.vectors)},
                  {"filters", tensor_to_json(op.filters)},
                  {"bias", tensor_to_json(op.bias)},
                  {"attentive", tensor_to_json(op.attentive)},
                  {"width", op.width},
                  {"max_len", op.max_len}}},
                {"scaler", {{"mean", m.scaler.mean}, {"scale", m.scaler.scale}}},
                {"lstm", std::move(lstm)},
                {"classifier", {{"weights", std::move(weights)}, {"biases", std::move(biases)}}}};
}

ModelBundle model_from_json(const json& j) {
    if (!j.is_object() || !j.contains("format")) throw DataError("not a dspsd model file");
    const auto version = j.at("format").get<std::string>();
    if (version != kModelFormatVersion) {
        throw DataError("unsupported model format '" + version + "' (expected " +
                        kModelFormatVersion + ")");
    }
    ModelBundle m;
    try {
        m.config = config_from_json(j.at("config"));
        for (const auto& id : j.at("node_ids")) m.node_ids.emplace_back(id.get<std::string>());
        m.embedding.structure.vectors = tensor_from_json(j.at("structure"), "structure");

        const auto& op = j.at("opcode");
        auto& lex = m.embedding.opcode.lexicon;
        const auto vocab = op.at("vocabulary").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < vocab.size(); ++i) lex.index.emplace(vocab[i], i + 1);
        if (lex.index.size() != vocab.size()) throw DataError("duplicate opcode in vocabulary");
        lex.vectors = tensor_from_json(op.at("lexicon"), "lexicon");
        m.embedding.opcode.filters = tensor_from_json(op.at("filters"), "filters");
        m.embedding.opcode.bias = tensor_from_json(op.at("bias"), "bias");
        m.embedding.opcode.attentive = tensor_from_json(op.at("attentive"), "attentive");
        m.embedding.opcode.width = op.at("width").get<std::size_t>();
        m.embedding.opcode.max_len = op.at("max_len").get<std::size_t>();

        const auto& sc = j.at("scaler");
        m.scaler.mean = sc.at("mean").get<std::vector<double>>();
        m.scaler.scale = sc.at("scale").get<std::vector<double>>();

        const auto& l = j.at("lstm");
        m.lstm.w_input = tensor_from_json(l.at("w_input"), "w_input");
        m.lstm.w_forget = tensor_from_json(l.at("w_forget"), "w_forget");
        m.lstm.w_output = tensor_from_json(l.at("w_output"), "w_output");
        m.lstm.w_cell = tensor_from_json(l.at("w_cell"), "w_cell");
        m.lstm.b_input = tensor_from_json(l.at("b_input"), "b_input");
        m.lstm.b_forget = tensor_from_json(l.at("b_forget"), "b_forget");
        m.lstm.b_output = tensor_from_json(l.at("b_output"), "b_output");
        m.lstm.b_cell = tensor_from_json(l.at("b_cell"), "b_cell");
        m.lstm.dropout = l.at("dropout").get<double>();

        const auto& c = j.at("classifier");
        for (const auto& w : c.at("weights")) m.classifier.weights.push_back(tensor_from_json(w, "mlp weight"));
        for (const auto& b : c.at("biases")) m.classifier.biases.push_back(tensor_from_json(b, "mlp bias"));
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }

    const auto& cfg = m.config;
    const auto& op = m.embedding.opcode;
    bool ok = m.embedding.structure.vectors.rows() == m.node_ids.size() &&
              m.embedding.structure.dim() == cfg.structure_dim &&
              op.lexicon.size() == op.lexicon.index.size() + 1 && op.lexicon.dim() == cfg.opcode_dim &&
              op.filters.rows() == cfg.feature_dim && op.filters.cols() == op.width * cfg.opcode_dim &&
              op.attentive.rows() == cfg.feature_dim && op.attentive.cols() == cfg.feature_dim &&
              m.lstm.hidden() == cfg.lstm_hidden && m.lstm.w_input.cols() == cfg.lstm_hidden + cfg.point_dim() &&
              m.classifier.weights.size() == cfg.mlp_widths.size() + 1 &&
              m.classifier.biases.size() == m.classifier.weights.size() &&
              m.classifier.input_dim() == cfg.lstm_hidden &&
              m.scaler.mean.size() == m.scaler.scale.size() &&
              (m.scaler.empty() || m.scaler.mean.size() == cfg.point_dim()) &&
              std::all_of(m.scaler.scale.begin(), m.scaler.scale.end(),
                          [](double x) { return x > 0.0 && std::isfinite(x); });
    if (!ok) throw DataError("model tensors do not match the stored config");
    return m;
}

void save_model(const ModelBundle& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model " + path.string());
    out << model_to_json(model).dump(1) << '\n';
    if (!out) throw DataError("failed writing model " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("model " + path.string() + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace dspsd
