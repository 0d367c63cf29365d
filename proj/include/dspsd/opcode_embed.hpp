#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dspsd/numerics.hpp"
#include "dspsd/structure_embed.hpp"
#include "dspsd/txgraph.hpp"

namespace dspsd {

using TokenId = std::size_t;
inline constexpr TokenId kUnknownToken = 0;
// Marks a zero row of the control logic matrix (past the end of the code).
inline constexpr TokenId kPadToken = std::numeric_limits<TokenId>::max();

// Opcode dictionary. Row 0 of `vectors` is the shared unknown-token vector,
// known mnemonics occupy rows 1..N in sorted order.
struct OpcodeLexicon {
    std::map<std::string, TokenId> index;
    Tensor2 vectors;

    std::size_t dim() const { return vectors.cols(); }
    std::size_t size() const { return vectors.rows(); }
    TokenId token_id(const std::string& mnemonic) const;
    std::span<const double> vector(TokenId t) const { return vectors.row(t); }

    static OpcodeLexicon build(const std::vector<std::string>& vocabulary, std::size_t dim,
                               Rng& rng);
};

// Trainable opcode-side parameters.
struct OpcodeParams {
    OpcodeLexicon lexicon;
    // Row j is filter j flattened as width x d' (window row k at columns
    // [k*d', (k+1)*d')).
    Tensor2 filters;
    Tensor2 bias;       // d_o x 1
    Tensor2 attentive;  // d_o x d_o
    std::size_t width = 2;
    std::size_t max_len = 300;

    std::size_t feature_dim() const { return filters.rows(); }
    std::size_t window_count() const { return max_len - width + 1; }

    static OpcodeParams initialized(const std::vector<std::string>& vocabulary,
                                    std::size_t opcode_dim, std::size_t feature_dim,
                                    std::size_t width, std::size_t max_len, Rng& rng);
};

struct OpcodeGrads {
    Tensor2 lexicon;
    Tensor2 filters;
    Tensor2 bias;
    Tensor2 attentive;

    static OpcodeGrads zeros_like(const OpcodeParams& p);
    OpcodeGrads& operator+=(const OpcodeGrads& other);
    OpcodeGrads& operator*=(double s);
};

void apply_gradients(OpcodeParams& params, const OpcodeGrads& grads, double lr);

// L_max x d' matrix of stacked lexicon vectors; zero rows past the end of the
// code and for EOAs. Longer code is truncated.
Tensor2 control_logic_matrix(const Account& account, const OpcodeLexicon& lexicon,
                             std::size_t max_len);

// C[j, i] = f(sum(F_j * X[i:i+r-1]) + b_j), shape d_o x (L_max - r + 1).
Tensor2 convolve_features(const Tensor2& x, const OpcodeParams& params,
                          Nonlinearity f = Nonlinearity::Tanh);

struct MutualAttention {
    // Weights over the columns of C_v, from max-pooling each row of D.
    // Used as v(u) = C_v a_u.
    std::vector<double> a_u;
    // Weights over the columns of C_u, from max-pooling each column of D.
    // Used as u(v) = C_u a_v.
    std::vector<double> a_v;
    Tensor2 correlation;  // D = tanh(C_v^T A C_u)
};

MutualAttention mutual_attention(const Tensor2& c_v, const Tensor2& c_u, const Tensor2& attentive);

// C a as a 1 x d_o row vector.
Tensor2 interactive_embedding(const Tensor2& c, std::span<const double> attention);

// Distinct convolution windows of one account. Windows with identical token
// content produce identical feature columns, so features are computed once per
// distinct window and weighted by its multiplicity. The all-padding window
// covers every position past the end of the code.
struct WindowGroups {
    std::size_t count = 0;
    std::vector<TokenId> tokens;  // count x width
    std::vector<double> multiplicity;
};

WindowGroups group_windows(std::span<const TokenId> code, std::size_t width, std::size_t max_len);

// Tokenised, truncated code for every node of a graph.
struct OpcodeCorpus {
    std::vector<std::vector<TokenId>> code;
    std::vector<WindowGroups> windows;

    static OpcodeCorpus build(const TemporalGraph& g, const OpcodeLexicon& lexicon,
                              std::size_t width, std::size_t max_len);
};

// Evaluates opcode embeddings and losses for one parameter state and
// accumulates their gradients. Node features are computed lazily and cached,
// so one evaluator should live for one minibatch.
class OpcodeEvaluator {
public:
    OpcodeEvaluator(const OpcodeParams& params, const OpcodeCorpus& corpus);

    // v(u): interactive account-aware embedding of v given u, length d_o.
    std::vector<double> interactive(NodeIndex v, NodeIndex u);
    // u(v) . v(u)
    double score(NodeIndex v, NodeIndex u);

    // -w [log s(u(v).v(u)) + sum_z log s(-z(v).v(z))]; gradients accumulate.
    double add_negsampled_loss(NodeIndex v, NodeIndex u, double w,
                               std::span<const NodeIndex> negatives);
    // -w log p(u(v) | v(u)) with the full softmax over candidates z.
    double add_exact_loss(NodeIndex v, NodeIndex u, double w, std::span<const NodeIndex> candidates);
    double exact_log_prob(NodeIndex v, NodeIndex u, std::span<const NodeIndex> candidates);

    // Accumulates an upstream gradient on v(u).
    void add_interactive_grad(NodeIndex v, NodeIndex u, std::span<const double> d_v_given_u);

    // Backpropagates everything accumulated so far into parameter gradients.
    OpcodeGrads gradients();

private:
    struct NodeState {
        const WindowGroups* windows = nullptr;
        Tensor2 features;      // groups x d_o
        Tensor2 projected_t;     // groups x d_o, features A^T; empty until needed
        Tensor2 projected_left;  // groups x d_o, features A; empty until needed
        Tensor2 d_features;
        Tensor2 d_projected_t;
        Tensor2 d_projected_left;
    };
    struct PairPass {
        NodeIndex v, u;
        std::vector<double> v_given_u, u_given_v;
        std::vector<double> a_u, a_v;
        std::vector<std::size_t> row_arg, col_arg;
        std::vector<double> row_max, col_max;  // tanh-applied maxima
        double score = 0.0;
        // D was formed as (C_v^T A) C_u rather than C_v^T (A C_u).
        bool left = false;
    };

    NodeState& state(NodeIndex v);
    NodeState& projected(NodeIndex v);
    NodeState& projected_left(NodeIndex v);
    PairPass forward(NodeIndex v, NodeIndex u);
    void backward(const PairPass& pass, double d_score);
    void backward(const PairPass& pass, std::span<const double> d_vu, std::span<const double> d_uv);

    const OpcodeParams& params_;
    const OpcodeCorpus& corpus_;
    // token_table_[k * lexicon_size + t] holds F_j[k] . lex[t] for all j.
    Tensor2 token_table_;
    std::unordered_map<NodeIndex, NodeState> nodes_;
};

struct OpcodeEdgeLoss {
    double loss = 0.0;
    OpcodeGrads grads;
    std::vector<NodeIndex> negatives;
};

OpcodeEdgeLoss opcode_edge_loss(const OpcodeParams& params, const OpcodeCorpus& corpus,
                                NodeIndex v, NodeIndex u, double w, std::size_t k,
                                const NoiseDistribution& noise, Rng& rng);

OpcodeEdgeLoss opcode_edge_loss_exact(const OpcodeParams& params, const OpcodeCorpus& corpus,
                                      NodeIndex v, NodeIndex u, double w,
                                      std::span<const NodeIndex> candidates);

// Mean of v(u_j) over the interactive set; zero vector when it is empty.
std::vector<double> aggregate_opcode_embedding(OpcodeEvaluator& eval, NodeIndex v,
                                               std::span<const NodeIndex> interactive_set,
                                               std::size_t feature_dim);

}  // namespace dspsd
