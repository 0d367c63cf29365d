#include "dspsd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "dspsd/errors.hpp"
#include "dspsd/log.hpp"

namespace dspsd {

const char* to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::StructureOnly: return "structure_only";
        case Ablation::OpcodeOnly: return "opcode_only";
    }
    return "full";
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "structure_only") return Ablation::StructureOnly;
    if (s == "opcode_only") return Ablation::OpcodeOnly;
    throw ConfigError("unknown ablation '" + s + "' (expected full|structure_only|opcode_only)");
}

void TrainConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(structure_dim, "structure_dim");
    positive(feature_dim, "feature_dim");
    positive(opcode_dim, "opcode_dim");
    positive(filter_width, "filter_width");
    positive(max_opcodes, "max_opcodes");
    positive(lstm_hidden, "lstm_hidden");
    positive(sequence_len, "sequence_len");
    positive(batch_size, "batch_size");
    positive(neg_k, "neg_k");
    if (max_opcodes < filter_width) throw ConfigError("max_opcodes must be >= filter_width");
    if (mlp_widths.empty()) throw ConfigError("mlp_widths must list at least one layer");
    for (auto w : mlp_widths) positive(w, "mlp_widths entry");
    if (!(lr_min > 0.0) || !(lr_max >= lr_min)) throw ConfigError("invalid learning-rate bounds");
    if (!(lr >= lr_min && lr <= lr_max)) {
        throw ConfigError("lr " + std::to_string(lr) + " outside [" + std::to_string(lr_min) + ", " +
                          std::to_string(lr_max) + "]");
    }
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(noise_power >= 0.0)) throw ConfigError("noise_power must be non-negative");
}

std::vector<std::string> opcode_vocabulary(const TemporalGraph& g) {
    std::set<std::string> vocab;
    for (const auto& a : g.accounts())
        if (a.kind == AccountKind::Contract) vocab.insert(a.opcodes.begin(), a.opcodes.end());
    return {vocab.begin(), vocab.end()};
}

ModelBundle initialize_model(const TemporalGraph& g, const TrainConfig& config, Rng& rng) {
    config.validate();
    ModelBundle m;
    m.config = config;
    m.node_ids.reserve(g.num_nodes());
    for (const auto& a : g.accounts()) m.node_ids.push_back(a.id);
    m.embedding.structure = StructureTable::initialized(g.num_nodes(), config.structure_dim, rng);
    m.embedding.opcode =
        OpcodeParams::initialized(opcode_vocabulary(g), config.opcode_dim, config.feature_dim,
                                  config.filter_width, config.max_opcodes, rng);
    m.lstm = SequenceModelParams::initialized(config.lstm_hidden, config.point_dim(), config.dropout,
                                              rng);
    m.classifier = ClassifierParams::initialized(config.lstm_hidden, config.mlp_widths, rng);
    return m;
}

std::vector<std::uint64_t> snapshot_weights(const TemporalGraph& g) {
    std::vector<std::uint64_t> out(g.num_events());
    std::map<std::pair<NodeIndex, NodeIndex>, std::uint64_t> counts;
    std::size_t i = 0;
    while (i < g.num_events()) {
        std::size_t j = i;
        const auto t = g.events()[i].timestamp;
        while (j < g.num_events() && g.events()[j].timestamp == t) ++counts[g.event_nodes(j++)];
        for (std::size_t k = i; k < j; ++k) out[k] = counts[g.event_nodes(k)];
        i = j;
    }
    return out;
}

namespace {

bool uses_structure(const TrainConfig& c) { return c.ablation != Ablation::OpcodeOnly; }
bool uses_opcode(const TrainConfig& c) { return c.ablation != Ablation::StructureOnly; }

}  // namespace

Stage1Report train_embeddings(const TemporalGraph& g, EmbeddingParams& params,
                              const TrainConfig& config, Rng& rng) {
    config.validate();
    Stage1Report report;
    if (config.epochs_stage1 == 0 || g.num_events() == 0) return report;
    if (params.structure.num_nodes() != g.num_nodes()) {
        throw ConfigError("structure table does not match the graph");
    }

    const NoiseDistribution noise = NoiseDistribution::from_graph(g, config.noise_power);
    const OpcodeCorpus corpus =
        uses_opcode(config) ? OpcodeCorpus::build(g, params.opcode.lexicon, params.opcode.width,
                                                  params.opcode.max_len)
                            : OpcodeCorpus{};

    std::vector<std::int64_t> first_seen(g.num_nodes(), INT64_MAX);
    for (std::size_t i = 0; i < g.num_events(); ++i) {
        const auto [a, b] = g.event_nodes(i);
        first_seen[a] = std::min(first_seen[a], g.events()[i].timestamp);
        first_seen[b] = std::min(first_seen[b], g.events()[i].timestamp);
    }

    auto sample_negatives = [&](NodeIndex x, std::int64_t t) {
        std::vector<NodeIndex> negs(config.neg_k);
        for (auto& z : negs) {
            do {
                z = noise.sample(rng, x);
            } while (config.negatives_from_snapshot && first_seen[z] > t);
        }
        return negs;
    };

    for (std::size_t epoch = 0; epoch < config.epochs_stage1; ++epoch) {
        double total = 0.0;
        // Edge terms of the epoch: each event, followed by replayed prior events.
        std::vector<std::pair<std::size_t, std::int64_t>> stream;
        stream.reserve(g.num_events() * (1 + config.replay_edges));
        for (std::size_t i = 0; i < g.num_events(); ++i) {
            const auto t = g.events()[i].timestamp;
            stream.emplace_back(i, t);
            for (std::size_t r = 0; r < config.replay_edges; ++r)
                stream.emplace_back(static_cast<std::size_t>(rng.below(i + 1)), t);
        }
        for (std::size_t start = 0; start < stream.size(); start += config.batch_size) {
            const std::size_t end = std::min(stream.size(), start + config.batch_size);
            std::optional<OpcodeEvaluator> eval;
            if (uses_opcode(config)) eval.emplace(params.opcode, corpus);
            std::size_t terms = 0;
            for (std::size_t b = start; b < end; ++b) {
                const auto [v, u] = g.event_nodes(stream[b].first);
                if (v == u) continue;
                ++terms;
                const auto negs = sample_negatives(u, stream[b].second);
                if (uses_structure(config)) {
                    const auto loss = edge_loss_with_negatives(params.structure, v, u, 1.0, negs);
                    total += loss.loss;
                    // Rows are sparse, so structure steps are taken per term.
                    apply_sparse(params.structure, loss.grad, config.lr);
                }
                if (eval) total += eval->add_negsampled_loss(v, u, 1.0, negs);
            }
            // Every term touches the shared opcode parameters; a summed step
            // overshoots, so they take the batch mean.
            if (eval && terms > 0)
                apply_gradients(params.opcode, eval->gradients(),
                                config.lr / static_cast<double>(terms));
        }
        report.epoch_loss.push_back(total);
        logger()->debug("stage 1 epoch {}: surrogate loss {:.6f}", epoch + 1, total);
    }
    return report;
}

double exact_stage1_loss(const TemporalGraph& g, const EmbeddingParams& params,
                         const TrainConfig& config) {
    const auto candidates = all_nodes(g.num_nodes());
    double total = 0.0;
    std::optional<OpcodeCorpus> corpus;
    std::optional<OpcodeEvaluator> eval;
    if (uses_opcode(config)) {
        corpus.emplace(OpcodeCorpus::build(g, params.opcode.lexicon, params.opcode.width,
                                           params.opcode.max_len));
        eval.emplace(params.opcode, *corpus);
    }
    for (const auto& e : g.edges()) {
        if (e.from == e.to) continue;
        const double w = static_cast<double>(e.weight);
        if (uses_structure(config))
            total -= w * log_conditional_prob(params.structure, e.from, e.to, candidates);
        if (eval) total -= w * eval->exact_log_prob(e.from, e.to, candidates);
    }
    return total;
}

namespace {

struct PointTrace {
    std::vector<NodeIndex> distinct;  // counterparties in first-contact order
    std::vector<std::size_t> known;   // distinct counterparties known at each step
};

Sequence build_points(const TemporalGraph& g, const StructureTable& structure,
                      OpcodeEvaluator* eval, const TrainConfig& config, NodeIndex v,
                      std::size_t count, PointTrace* trace) {
    const auto& formation = g.formation(v);
    count = std::min(count, formation.size());
    const std::size_t ds = config.structure_dim;
    const std::size_t d_o = config.feature_dim;
    Sequence out;
    out.reserve(count);
    // Interactive embeddings grouped by exact value with their counts. All EOAs
    // share one embedding, so this keeps equal means bitwise equal over time.
    std::vector<std::pair<std::vector<double>, std::size_t>> groups;
    std::set<NodeIndex> seen;
    std::size_t known = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const NodeIndex u = formation[i].counterparty;
        if (seen.insert(u).second) {
            ++known;
            if (trace) trace->distinct.push_back(u);
            if (eval && uses_opcode(config)) {
                auto e = eval->interactive(v, u);
                auto it = std::find_if(groups.begin(), groups.end(),
                                       [&](const auto& gr) { return gr.first == e; });
                if (it == groups.end()) groups.emplace_back(std::move(e), 1);
                else ++it->second;
            }
        }
        if (trace) trace->known.push_back(known);
        std::vector<double> point(ds + d_o, 0.0);
        if (uses_structure(config)) {
            const auto row = structure.row(v);
            std::copy(row.begin(), row.end(), point.begin());
        }
        if (uses_opcode(config)) {
            const auto mean = std::span<double>(point).subspan(ds);
            for (const auto& [e, c] : groups)
                axpy(static_cast<double>(c) / static_cast<double>(known), e, mean);
        }
        out.push_back(std::move(point));
    }
    return out;
}

}  // namespace

NodeEmbedder::NodeEmbedder(const TemporalGraph& g, const EmbeddingParams& params,
                           const TrainConfig& config)
    : graph_(g),
      params_(params),
      config_(config),
      corpus_(OpcodeCorpus::build(g, params.opcode.lexicon, params.opcode.width,
                                  params.opcode.max_len)),
      evaluator_(params.opcode, corpus_) {}

Sequence NodeEmbedder::points(NodeIndex v, std::size_t count) {
    if (v >= graph_.num_nodes()) throw NotFoundError("unknown node");
    return build_points(graph_, params_.structure, &evaluator_, config_, v, count, nullptr);
}

Sequence NodeEmbedder::temporal_points(NodeIndex v) {
    return points(v, graph_.formation(v).size());
}

Sequence NodeEmbedder::temporal_points_until(NodeIndex v, std::int64_t t) {
    const auto& f = graph_.formation(v);
    const auto n = static_cast<std::size_t>(
        std::partition_point(f.begin(), f.end(), [t](const FormationEntry& e) { return e.timestamp <= t; }) -
        f.begin());
    return points(v, n);
}

Sequence NodeEmbedder::compressed(NodeIndex v) {
    return compress_sequence(temporal_points(v), config_.sequence_len, config_.point_dim());
}

std::vector<double> NodeEmbedder::embed(NodeIndex v, const InputScaler& scaler,
                                        const SequenceModelParams& lstm) {
    Rng unused(0);
    return lstm_forward(scaler.apply(compressed(v)), lstm, false, unused).output;
}

AlignedEmbedding align_embedding(const ModelBundle& model, const TemporalGraph& g) {
    AlignedEmbedding out;
    out.params.opcode = model.embedding.opcode;
    const std::size_t dim = model.embedding.structure.dim();
    out.params.structure.vectors = Tensor2(g.num_nodes(), dim);
    std::unordered_map<AccountId, NodeIndex, AccountIdHash> rows;
    for (NodeIndex i = 0; i < model.node_ids.size(); ++i) rows.emplace(model.node_ids[i], i);
    for (NodeIndex v = 0; v < g.num_nodes(); ++v) {
        auto it = rows.find(g.account(v).id);
        if (it == rows.end()) {
            out.missing.push_back(v);
            continue;
        }
        const auto src = model.embedding.structure.row(it->second);
        std::copy(src.begin(), src.end(), out.params.structure.row(v).begin());
    }
    return out;
}

std::vector<LabeledNode> labeled_contracts(const TemporalGraph& g) {
    std::vector<LabeledNode> out;
    for (NodeIndex v = 0; v < g.num_nodes(); ++v) {
        const auto& a = g.account(v);
        if (a.kind == AccountKind::Contract && a.label)
            out.push_back({v, *a.label == Label::Ponzi ? 1 : 0});
    }
    return out;
}

namespace {

void require_aligned(const ModelBundle& model, const TemporalGraph& g) {
    bool ok = model.node_ids.size() == g.num_nodes();
    for (NodeIndex v = 0; ok && v < g.num_nodes(); ++v) ok = model.node_ids[v] == g.account(v).id;
    if (!ok) throw ConfigError("model node order does not match the training graph");
}

void add_scaled(SequenceModelParams& into, const SequenceModelParams& from, double s) {
    auto dst = into.tensors();
    auto src = from.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) axpy(s, src[i]->values(), dst[i]->values());
}

void add_scaled(ClassifierParams& into, const ClassifierParams& from, double s) {
    for (std::size_t l = 0; l < into.weights.size(); ++l) {
        axpy(s, from.weights[l].values(), into.weights[l].values());
        axpy(s, from.biases[l].values(), into.biases[l].values());
    }
}

// Spreads gradients on the compressed sequence back onto the original points.
Sequence expand_gradient(const Sequence& d_compressed, std::size_t original_len, std::size_t dim) {
    Sequence out(original_len, std::vector<double>(dim, 0.0));
    const std::size_t target = d_compressed.size();
    if (original_len <= target) {
        for (std::size_t i = 0; i < original_len; ++i) out[i] = d_compressed[i];
        return out;
    }
    const std::size_t base = original_len / target;
    const std::size_t extra = original_len % target;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < target; ++b) {
        const std::size_t len = base + (b < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i)
            axpy(1.0 / static_cast<double>(len), d_compressed[b], out[pos + i]);
        pos += len;
    }
    return out;
}

}  // namespace

namespace {

void require_both_classes(std::span<const int> labels) {
    const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) throw ConfigError("training set must contain both classes");
}

void fit_scaler(const std::vector<Sequence>& sequences, ModelBundle& model) {
    model.scaler = model.config.standardize_inputs
                       ? InputScaler::fit(sequences, model.config.point_dim())
                       : InputScaler{};
}

// Frozen embeddings take `precomputed` sequences; joint fine-tuning rebuilds
// them from `g` every batch.
Stage2Report run_stage2(const TemporalGraph* graph, const std::vector<LabeledNode>& labeled,
                        const std::vector<Sequence>* precomputed, ModelBundle& model, Rng& rng) {
    const TrainConfig& config = model.config;
    Stage2Report report;
    const std::size_t n = labeled.size();
    const std::size_t ds = config.structure_dim;
    const std::vector<Sequence>& cached = *precomputed;
    const OpcodeCorpus corpus =
        config.joint_finetune ? OpcodeCorpus::build(*graph, model.embedding.opcode.lexicon,
                                                    model.embedding.opcode.width,
                                                    model.embedding.opcode.max_len)
                              : OpcodeCorpus{};

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs_stage2; ++epoch) {
        rng.shuffle(order);
        double data_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            SequenceModelParams d_lstm =
                SequenceModelParams::zeros(config.lstm_hidden, config.point_dim());
            ClassifierParams d_mlp = ClassifierParams::zeros_like(model.classifier);
            std::optional<OpcodeEvaluator> eval;
            SparseGrad d_structure{ds, {}};
            if (config.joint_finetune) eval.emplace(model.embedding.opcode, corpus);

            for (std::size_t b = start; b < end; ++b) {
                const LabeledNode& sample = labeled[order[b]];
                PointTrace provenance;
                Sequence raw;
                Sequence input;
                if (config.joint_finetune) {
                    raw = build_points(*graph, model.embedding.structure, &*eval, config, sample.node,
                                       graph->formation(sample.node).size(), &provenance);
                    input = compress_sequence(raw, config.sequence_len, config.point_dim());
                }
                const Sequence seq =
                    config.joint_finetune ? model.scaler.apply(input) : cached[order[b]];
                const LstmTrace trace = lstm_forward(seq, model.lstm, true, rng);
                const MlpTrace mt = mlp_forward(trace.output, model.classifier);
                data_loss += sample.label ? softplus(-mt.margin) : softplus(mt.margin);
                const MlpGrads mg =
                    mlp_gradients(mt, model.classifier, classification_loss_grad(mt.margin, sample.label));
                const LstmGrads lg =
                    lstm_gradients(trace, model.lstm, mg.input, config.joint_finetune);
                add_scaled(d_mlp, mg.params, 1.0);
                add_scaled(d_lstm, lg.params, 1.0);

                if (config.joint_finetune && !raw.empty()) {
                    Sequence d_input = lg.inputs;
                    model.scaler.backprop(d_input, input);
                    const Sequence d_raw = expand_gradient(d_input, raw.size(), config.point_dim());
                    std::vector<double> d_row(ds, 0.0);
                    std::vector<std::vector<double>> bucket(provenance.distinct.size(),
                                                            std::vector<double>(config.feature_dim, 0.0));
                    for (std::size_t i = 0; i < d_raw.size(); ++i) {
                        axpy(1.0, std::span<const double>(d_raw[i]).subspan(0, ds), d_row);
                        const double scale = 1.0 / static_cast<double>(provenance.known[i]);
                        axpy(scale, std::span<const double>(d_raw[i]).subspan(ds),
                             bucket[provenance.known[i] - 1]);
                    }
                    if (uses_structure(config)) d_structure.add(sample.node, 1.0, d_row);
                    if (uses_opcode(config)) {
                        // Counterparty j contributes to every step that already knows it.
                        std::vector<double> suffix(config.feature_dim, 0.0);
                        for (std::size_t j = provenance.distinct.size(); j-- > 0;) {
                            axpy(1.0, bucket[j], suffix);
                            eval->add_interactive_grad(sample.node, provenance.distinct[j], suffix);
                        }
                    }
                }
            }

            // L2 share of this batch, applied as a proximal step so large lambda stays stable.
            const double frac = static_cast<double>(end - start) / static_cast<double>(n);
            const double shrink = 1.0 / (1.0 + 2.0 * config.lr * config.lambda * frac);
            auto params = model.lstm.tensors();
            auto grads = d_lstm.tensors();
            for (std::size_t i = 0; i < params.size(); ++i) {
                sgd_update(*params[i], *grads[i], config.lr);
                *params[i] *= shrink;
            }
            for (std::size_t l = 0; l < model.classifier.weights.size(); ++l) {
                sgd_update(model.classifier.weights[l], d_mlp.weights[l], config.lr);
                sgd_update(model.classifier.biases[l], d_mlp.biases[l], config.lr);
                model.classifier.weights[l] *= shrink;
                model.classifier.biases[l] *= shrink;
            }

            if (config.joint_finetune) {
                apply_gradients(model.embedding.opcode, eval->gradients(), config.lr);
                apply_sparse(model.embedding.structure, d_structure, config.lr);
                if (config.regularize_embeddings) {
                    auto& op = model.embedding.opcode;
                    for (Tensor2* t : {&model.embedding.structure.vectors, &op.lexicon.vectors, &op.filters,
                                       &op.bias, &op.attentive})
                        *t *= shrink;
                }
            }
        }
        double theta = model.lstm.weight_squared_norm() + model.classifier.weight_squared_norm();
        if (config.joint_finetune && config.regularize_embeddings) {
            theta += model.embedding.structure.vectors.squared_norm() +
                     model.embedding.opcode.lexicon.vectors.squared_norm() +
                     model.embedding.opcode.filters.squared_norm() +
                     model.embedding.opcode.bias.squared_norm() +
                     model.embedding.opcode.attentive.squared_norm();
        }
        report.epoch_loss.push_back(data_loss + config.lambda * theta);
        logger()->debug("stage 2 epoch {}: loss {:.6f}", epoch + 1, report.epoch_loss.back());
    }
    return report;
}

}  // namespace

Stage2Report train_classifier(const TemporalGraph& g, const std::vector<LabeledNode>& labeled,
                              ModelBundle& model, Rng& rng) {
    model.config.validate();
    require_aligned(model, g);
    std::vector<int> labels;
    for (const auto& l : labeled) labels.push_back(l.label);
    require_both_classes(labels);
    std::vector<Sequence> cached;
    {
        NodeEmbedder embedder(g, model.embedding, model.config);
        cached.reserve(labeled.size());
        for (const auto& l : labeled) cached.push_back(embedder.compressed(l.node));
    }
    // Under joint fine-tuning the scaler stays at its fit on the initial embeddings.
    fit_scaler(cached, model);
    if (model.config.joint_finetune) cached.clear();
    else
        for (auto& seq : cached) seq = model.scaler.apply(seq);
    return run_stage2(&g, labeled, &cached, model, rng);
}

Stage2Report train_classifier_frozen(const std::vector<Sequence>& sequences,
                                     const std::vector<int>& labels, ModelBundle& model, Rng& rng) {
    model.config.validate();
    if (model.config.joint_finetune) throw ConfigError("joint fine-tuning needs the graph");
    if (sequences.size() != labels.size()) throw ShapeError("one label per sequence expected");
    require_both_classes(labels);
    std::vector<LabeledNode> labeled;
    for (std::size_t i = 0; i < labels.size(); ++i) labeled.push_back({0, labels[i]});
    fit_scaler(sequences, model);
    std::vector<Sequence> scaled;
    scaled.reserve(sequences.size());
    for (const auto& seq : sequences) scaled.push_back(model.scaler.apply(seq));
    return run_stage2(nullptr, labeled, &scaled, model, rng);
}

TrainResult train_model(const TemporalGraph& g, const TrainConfig& config) {
    config.validate();
    const Rng master(config.seed);
    Rng init_rng = master.derive(1);
    Rng stage1_rng = master.derive(2);
    Rng stage2_rng = master.derive(3);
    TrainResult result{initialize_model(g, config, init_rng), {}, {}};
    logger()->info("stage 1: {} events, {} nodes, {} epochs", g.num_events(), g.num_nodes(),
                   config.epochs_stage1);
    result.stage1 = train_embeddings(g, result.model.embedding, config, stage1_rng);
    const auto labeled = labeled_contracts(g);
    logger()->info("stage 2: {} labeled contracts, {} epochs", labeled.size(), config.epochs_stage2);
    result.stage2 = train_classifier(g, labeled, result.model, stage2_rng);
    return result;
}

std::vector<Detection> detect(const std::vector<AccountId>& ids, const ModelBundle& model,
                              const TemporalGraph& g) {
    const AlignedEmbedding aligned = align_embedding(model, g);
    NodeEmbedder embedder(g, aligned.params, model.config);
    std::vector<Detection> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        Detection d;
        d.id = id;
        const auto v = g.find(id);
        if (!v) {
            d.error = "unknown account";
            out.push_back(std::move(d));
            continue;
        }
        const auto embedding = embedder.embed(*v, model.scaler, model.lstm);
        const MlpTrace mt = mlp_forward(embedding, model.classifier);
        d.ok = true;
        d.margin = mt.margin;
        d.probability = mt.probability();
        d.label = predict(mt.margin);
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace dspsd
