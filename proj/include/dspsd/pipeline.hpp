#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dspsd/classifier.hpp"
#include "dspsd/opcode_embed.hpp"
#include "dspsd/structure_embed.hpp"
#include "dspsd/temporal.hpp"
#include "dspsd/txgraph.hpp"

namespace dspsd {

enum class Ablation { Full, StructureOnly, OpcodeOnly };

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
    std::size_t structure_dim = 100;  // d_s
    std::size_t feature_dim = 100;    // d_o, number of filters
    std::size_t opcode_dim = 100;     // d'
    std::size_t filter_width = 2;     // r
    std::size_t max_opcodes = 300;    // L_max
    std::size_t lstm_hidden = 32;
    std::size_t sequence_len = 32;    // T
    std::vector<std::size_t> mlp_widths{64, 32, 32};
    double lr = 0.01;
    double lr_min = 0.001;
    double lr_max = 0.01;
    std::size_t batch_size = 64;
    std::size_t neg_k = 5;
    double noise_power = 0.75;
    double lambda = 1e-4;
    double dropout = 0.75;
    std::size_t epochs_stage1 = 20;
    std::size_t epochs_stage2 = 200;
    // Extra prior events replayed per event during stage 1.
    std::size_t replay_edges = 0;
    std::uint64_t seed = 7;
    Ablation ablation = Ablation::Full;
    // Restrict negatives to nodes already present in the snapshot.
    bool negatives_from_snapshot = false;
    // Backpropagate the classification loss into the embedding tables.
    bool joint_finetune = false;
    // Include embedding tables in the L2 term (only meaningful with joint_finetune).
    bool regularize_embeddings = false;
    // Standardize temporal points per dimension before the LSTM.
    bool standardize_inputs = true;

    void validate() const;
    std::size_t point_dim() const { return structure_dim + feature_dim; }
};

struct EmbeddingParams {
    StructureTable structure;
    OpcodeParams opcode;
};

inline constexpr const char* kModelFormatVersion = "dspsd-model/1";

struct ModelBundle {
    std::string version = kModelFormatVersion;
    TrainConfig config;
    std::vector<AccountId> node_ids;  // row order of the structure table
    EmbeddingParams embedding;
    InputScaler scaler;
    SequenceModelParams lstm;
    ClassifierParams classifier;
};

// Vocabulary of all contract opcodes in the graph.
std::vector<std::string> opcode_vocabulary(const TemporalGraph& g);

ModelBundle initialize_model(const TemporalGraph& g, const TrainConfig& config, Rng& rng);

// Snapshot weight w_{from,to}(t_i) for every event of the graph.
std::vector<std::uint64_t> snapshot_weights(const TemporalGraph& g);

struct Stage1Report {
    std::vector<double> epoch_loss;  // negative-sampled surrogate, summed over events
};

// Stage 1: event-ordered negative-sampled SGD on the structure and opcode
// edge losses.
Stage1Report train_embeddings(const TemporalGraph& g, EmbeddingParams& params,
                              const TrainConfig& config, Rng& rng);

// Exact stage-1 objective over the edges of the full graph (candidates = all
// nodes), with the ablated term removed. Quadratic in |V|; small graphs only.
double exact_stage1_loss(const TemporalGraph& g, const EmbeddingParams& params,
                         const TrainConfig& config);

// Builds temporal-point embeddings and overall node embeddings for one graph
// and one frozen set of embedding parameters.
class NodeEmbedder {
public:
    NodeEmbedder(const TemporalGraph& g, const EmbeddingParams& params, const TrainConfig& config);

    // [v^s ; v^o_{t_i}] for each formation entry of v.
    Sequence temporal_points(NodeIndex v);
    // Temporal points truncated to entries with timestamp <= t.
    Sequence temporal_points_until(NodeIndex v, std::int64_t t);
    Sequence compressed(NodeIndex v);
    std::vector<double> embed(NodeIndex v, const InputScaler& scaler, const SequenceModelParams& lstm);

    const TrainConfig& config() const { return config_; }

private:
    Sequence points(NodeIndex v, std::size_t count);

    const TemporalGraph& graph_;
    const EmbeddingParams& params_;
    TrainConfig config_;
    OpcodeCorpus corpus_;
    OpcodeEvaluator evaluator_;
};

// Embedding parameters re-indexed to a graph's node order. Nodes unknown to
// the model get zero structure vectors and are reported in `missing`.
struct AlignedEmbedding {
    EmbeddingParams params;
    std::vector<NodeIndex> missing;
};

AlignedEmbedding align_embedding(const ModelBundle& model, const TemporalGraph& g);

struct LabeledNode {
    NodeIndex node;
    int label;  // 1 = Ponzi
};

std::vector<LabeledNode> labeled_contracts(const TemporalGraph& g);

struct Stage2Report {
    std::vector<double> epoch_loss;  // classification loss incl. L2 term
};

// Stage 2: fits the input scaler (when enabled) and trains LSTM + MLP on
// labeled contracts. Embedding parameters stay frozen unless
// config.joint_finetune is set.
Stage2Report train_classifier(const TemporalGraph& g, const std::vector<LabeledNode>& labeled,
                              ModelBundle& model, Rng& rng);

// Stage 2 on already compressed sequences (frozen embeddings only), e.g. when
// cross-validation folds share one stage-1 result.
Stage2Report train_classifier_frozen(const std::vector<Sequence>& sequences,
                                     const std::vector<int>& labels, ModelBundle& model, Rng& rng);

struct TrainResult {
    ModelBundle model;
    Stage1Report stage1;
    Stage2Report stage2;
};

// Full pipeline on one graph: initialize, stage 1, stage 2 on every labeled
// contract.
TrainResult train_model(const TemporalGraph& g, const TrainConfig& config);

struct Detection {
    AccountId id;
    bool ok = false;
    Label label = Label::Normal;
    double margin = 0.0;
    double probability = 0.0;
    std::string error;
};

std::vector<Detection> detect(const std::vector<AccountId>& ids, const ModelBundle& model,
                              const TemporalGraph& g);

}  // namespace dspsd
