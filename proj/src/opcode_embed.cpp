#include "dspsd/opcode_embed.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dspsd {

TokenId OpcodeLexicon::token_id(const std::string& mnemonic) const {
    auto it = index.find(mnemonic);
    return it == index.end() ? kUnknownToken : it->second;
}

OpcodeLexicon OpcodeLexicon::build(const std::vector<std::string>& vocabulary, std::size_t dim,
                                   Rng& rng) {
    std::set<std::string> unique(vocabulary.begin(), vocabulary.end());
    OpcodeLexicon lex;
    TokenId next = 1;
    for (const auto& m : unique) lex.index.emplace(m, next++);
    lex.vectors = Tensor2(next, dim);
    fill_uniform(lex.vectors, rng, -0.1, 0.1);
    return lex;
}

OpcodeParams OpcodeParams::initialized(const std::vector<std::string>& vocabulary,
                                       std::size_t opcode_dim, std::size_t feature_dim,
                                       std::size_t width, std::size_t max_len, Rng& rng) {
    if (width == 0 || feature_dim == 0 || opcode_dim == 0) {
        throw ConfigError("opcode dimensions and filter width must be positive");
    }
    if (max_len < width) throw ShapeError("max opcode length is shorter than the filter width");
    OpcodeParams p;
    p.width = width;
    p.max_len = max_len;
    p.lexicon = OpcodeLexicon::build(vocabulary, opcode_dim, rng);
    p.filters = Tensor2(feature_dim, width * opcode_dim);
    p.bias = Tensor2(feature_dim, 1);
    p.attentive = Tensor2(feature_dim, feature_dim);
    fill_uniform(p.filters, rng, -0.1, 0.1);
    fill_uniform(p.bias, rng, -0.1, 0.1);
    fill_uniform(p.attentive, rng, -0.1, 0.1);
    return p;
}

OpcodeGrads OpcodeGrads::zeros_like(const OpcodeParams& p) {
    return {Tensor2(p.lexicon.vectors.rows(), p.lexicon.vectors.cols()),
            Tensor2(p.filters.rows(), p.filters.cols()), Tensor2(p.bias.rows(), p.bias.cols()),
            Tensor2(p.attentive.rows(), p.attentive.cols())};
}

OpcodeGrads& OpcodeGrads::operator+=(const OpcodeGrads& other) {
    lexicon += other.lexicon;
    filters += other.filters;
    bias += other.bias;
    attentive += other.attentive;
    return *this;
}

OpcodeGrads& OpcodeGrads::operator*=(double s) {
    lexicon *= s;
    filters *= s;
    bias *= s;
    attentive *= s;
    return *this;
}

void apply_gradients(OpcodeParams& params, const OpcodeGrads& grads, double lr) {
    sgd_update(params.lexicon.vectors, grads.lexicon, lr);
    sgd_update(params.filters, grads.filters, lr);
    sgd_update(params.bias, grads.bias, lr);
    sgd_update(params.attentive, grads.attentive, lr);
}

Tensor2 control_logic_matrix(const Account& account, const OpcodeLexicon& lexicon,
                             std::size_t max_len) {
    Tensor2 x(max_len, lexicon.dim());
    if (account.kind == AccountKind::Eoa) return x;
    const std::size_t n = std::min(account.opcodes.size(), max_len);
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = lexicon.vector(lexicon.token_id(account.opcodes[i]));
        std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    return x;
}

Tensor2 convolve_features(const Tensor2& x, const OpcodeParams& params, Nonlinearity f) {
    const std::size_t r = params.width;
    const std::size_t dp = params.lexicon.dim();
    if (x.cols() != dp) throw ShapeError("control logic matrix width differs from d'");
    if (x.rows() < r) throw ShapeError("control logic matrix shorter than filter width");
    const std::size_t l = x.rows() - r + 1;
    Tensor2 c(params.feature_dim(), l);
    for (std::size_t j = 0; j < params.feature_dim(); ++j) {
        const auto filter = params.filters.row(j);
        for (std::size_t i = 0; i < l; ++i) {
            double acc = params.bias(j, 0);
            for (std::size_t k = 0; k < r; ++k) acc += dot(filter.subspan(k * dp, dp), x.row(i + k));
            c(j, i) = apply(f, acc);
        }
    }
    return c;
}

namespace {

// Softmax of `raw` weighted by multiplicity: w_g = m_g e^{raw_g} / sum.
std::vector<double> weighted_softmax(std::span<const double> raw, std::span<const double> mult) {
    std::vector<double> out(raw.size());
    const double mx = *std::max_element(raw.begin(), raw.end());
    double z = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = mult[i] * std::exp(raw[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace

MutualAttention mutual_attention(const Tensor2& c_v, const Tensor2& c_u, const Tensor2& attentive) {
    if (c_v.rows() != c_u.rows() || attentive.rows() != c_v.rows() ||
        attentive.cols() != c_v.rows()) {
        throw ShapeError("mutual attention: feature dimensions disagree with the attentive matrix");
    }
    MutualAttention out;
    out.correlation = elementwise(Nonlinearity::Tanh, matmul(matmul(transpose(c_v), attentive), c_u));
    const auto& d = out.correlation;
    std::vector<double> row_max(d.rows(), -2.0), col_max(d.cols(), -2.0);
    for (std::size_t m = 0; m < d.rows(); ++m) {
        for (std::size_t n = 0; n < d.cols(); ++n) {
            row_max[m] = std::max(row_max[m], d(m, n));
            col_max[n] = std::max(col_max[n], d(m, n));
        }
    }
    out.a_u = weighted_softmax(row_max, std::vector<double>(row_max.size(), 1.0));
    out.a_v = weighted_softmax(col_max, std::vector<double>(col_max.size(), 1.0));
    return out;
}

Tensor2 interactive_embedding(const Tensor2& c, std::span<const double> attention) {
    if (attention.size() != c.cols()) throw ShapeError("attention length differs from C columns");
    Tensor2 out(1, c.rows());
    for (std::size_t j = 0; j < c.rows(); ++j) out(0, j) = dot(c.row(j), attention);
    return out;
}

WindowGroups group_windows(std::span<const TokenId> code, std::size_t width, std::size_t max_len) {
    if (max_len < width) throw ShapeError("max opcode length is shorter than the filter width");
    const std::size_t n = std::min(code.size(), max_len);
    const std::size_t l = max_len - width + 1;
    WindowGroups groups;
    std::map<std::vector<TokenId>, std::size_t> seen;
    std::vector<TokenId> key(width);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t k = 0; k < width; ++k) key[k] = i + k < n ? code[i + k] : kPadToken;
        auto [it, inserted] = seen.emplace(key, groups.count);
        if (inserted) {
            groups.tokens.insert(groups.tokens.end(), key.begin(), key.end());
            groups.multiplicity.push_back(0.0);
            ++groups.count;
        }
        groups.multiplicity[it->second] += 1.0;
        // Every later window is all padding.
        if (i >= n && i + 1 < l) {
            groups.multiplicity[it->second] += static_cast<double>(l - i - 1);
            break;
        }
    }
    return groups;
}

OpcodeCorpus OpcodeCorpus::build(const TemporalGraph& g, const OpcodeLexicon& lexicon,
                                 std::size_t width, std::size_t max_len) {
    OpcodeCorpus corpus;
    corpus.code.resize(g.num_nodes());
    corpus.windows.reserve(g.num_nodes());
    for (NodeIndex v = 0; v < g.num_nodes(); ++v) {
        const auto& acct = g.account(v);
        if (acct.kind == AccountKind::Contract) {
            const std::size_t n = std::min(acct.opcodes.size(), max_len);
            corpus.code[v].reserve(n);
            for (std::size_t i = 0; i < n; ++i) corpus.code[v].push_back(lexicon.token_id(acct.opcodes[i]));
        }
        corpus.windows.push_back(group_windows(corpus.code[v], width, max_len));
    }
    return corpus;
}

OpcodeEvaluator::OpcodeEvaluator(const OpcodeParams& params, const OpcodeCorpus& corpus)
    : params_(params), corpus_(corpus) {
    const std::size_t r = params.width;
    const std::size_t dp = params.lexicon.dim();
    const std::size_t vocab = params.lexicon.size();
    const std::size_t d = params.feature_dim();
    token_table_ = Tensor2(r * vocab, d);
    for (std::size_t k = 0; k < r; ++k) {
        for (TokenId t = 0; t < vocab; ++t) {
            auto out = token_table_.row(k * vocab + t);
            const auto lex = params.lexicon.vector(t);
            for (std::size_t j = 0; j < d; ++j) out[j] = dot(params.filters.row(j).subspan(k * dp, dp), lex);
        }
    }
}

OpcodeEvaluator::NodeState& OpcodeEvaluator::state(NodeIndex v) {
    auto it = nodes_.find(v);
    if (it != nodes_.end()) return it->second;
    if (v >= corpus_.windows.size()) throw NotFoundError("node missing from opcode corpus");
    NodeState s;
    s.windows = &corpus_.windows[v];
    const std::size_t d = params_.feature_dim();
    const std::size_t r = params_.width;
    const std::size_t vocab = params_.lexicon.size();
    s.features = Tensor2(s.windows->count, d);
    for (std::size_t g = 0; g < s.windows->count; ++g) {
        auto row = s.features.row(g);
        for (std::size_t j = 0; j < d; ++j) row[j] = params_.bias(j, 0);
        for (std::size_t k = 0; k < r; ++k) {
            const TokenId t = s.windows->tokens[g * r + k];
            if (t != kPadToken) axpy(1.0, token_table_.row(k * vocab + t), row);
        }
        for (double& x : row) x = std::tanh(x);
    }
    return nodes_.emplace(v, std::move(s)).first->second;
}

OpcodeEvaluator::NodeState& OpcodeEvaluator::projected(NodeIndex v) {
    NodeState& s = state(v);
    if (s.projected_t.empty()) s.projected_t = matmul_nt(s.features, params_.attentive);
    return s;
}

OpcodeEvaluator::NodeState& OpcodeEvaluator::projected_left(NodeIndex v) {
    NodeState& s = state(v);
    if (s.projected_left.empty()) s.projected_left = matmul(s.features, params_.attentive);
    return s;
}

OpcodeEvaluator::PairPass OpcodeEvaluator::forward(NodeIndex v, NodeIndex u) {
    const std::size_t mv = state(v).windows->count;
    const std::size_t mu = state(u).windows->count;
    // Project whichever side has fewer distinct windows.
    const bool left = mv < mu;
    NodeState& su = left ? state(u) : projected(u);
    NodeState& sv = left ? projected_left(v) : state(v);
    const std::size_t d = params_.feature_dim();

    PairPass p;
    p.v = v;
    p.u = u;
    p.left = left;
    p.row_max.assign(mv, -std::numeric_limits<double>::infinity());
    p.col_max.assign(mu, -std::numeric_limits<double>::infinity());
    p.row_arg.assign(mv, 0);
    p.col_arg.assign(mu, 0);
    std::vector<double> pre(mu);
    // tanh is monotone, so pooling the pre-activations selects the same entries.
    for (std::size_t g = 0; g < mv; ++g) {
        if (left) {
            const auto pg = sv.projected_left.row(g);
            for (std::size_t h = 0; h < mu; ++h) pre[h] = dot(pg, su.features.row(h));
        } else {
            const auto vg = sv.features.row(g);
            for (std::size_t h = 0; h < mu; ++h) pre[h] = dot(vg, su.projected_t.row(h));
        }
        for (std::size_t h = 0; h < mu; ++h) {
            if (pre[h] > p.row_max[g]) {
                p.row_max[g] = pre[h];
                p.row_arg[g] = h;
            }
            if (pre[h] > p.col_max[h]) {
                p.col_max[h] = pre[h];
                p.col_arg[h] = g;
            }
        }
    }
    for (double& x : p.row_max) x = std::tanh(x);
    for (double& x : p.col_max) x = std::tanh(x);
    p.a_u = weighted_softmax(p.row_max, sv.windows->multiplicity);
    p.a_v = weighted_softmax(p.col_max, su.windows->multiplicity);
    p.v_given_u.assign(d, 0.0);
    p.u_given_v.assign(d, 0.0);
    for (std::size_t g = 0; g < mv; ++g) axpy(p.a_u[g], sv.features.row(g), p.v_given_u);
    for (std::size_t h = 0; h < mu; ++h) axpy(p.a_v[h], su.features.row(h), p.u_given_v);
    p.score = dot(p.v_given_u, p.u_given_v);
    return p;
}

void OpcodeEvaluator::backward(const PairPass& p, double d_score) {
    if (d_score == 0.0) return;
    const std::size_t d = params_.feature_dim();
    std::vector<double> d_vu(d), d_uv(d);
    for (std::size_t c = 0; c < d; ++c) {
        d_vu[c] = d_score * p.u_given_v[c];
        d_uv[c] = d_score * p.v_given_u[c];
    }
    backward(p, d_vu, d_uv);
}

void OpcodeEvaluator::add_interactive_grad(NodeIndex v, NodeIndex u,
                                           std::span<const double> d_v_given_u) {
    if (d_v_given_u.size() != params_.feature_dim()) {
        throw ShapeError("interactive embedding gradient has the wrong size");
    }
    const PairPass pass = forward(v, u);
    const std::vector<double> d_uv(params_.feature_dim(), 0.0);
    backward(pass, d_v_given_u, d_uv);
}

void OpcodeEvaluator::backward(const PairPass& p, std::span<const double> d_vu,
                               std::span<const double> d_uv) {
    NodeState& sv = state(p.v);
    NodeState& su = state(p.u);
    const std::size_t d = params_.feature_dim();
    const std::size_t mv = sv.windows->count;
    const std::size_t mu = su.windows->count;
    if (sv.d_features.empty()) sv.d_features = Tensor2(mv, d);
    if (su.d_features.empty()) su.d_features = Tensor2(mu, d);
    if (p.left && sv.d_projected_left.empty()) sv.d_projected_left = Tensor2(mv, d);
    if (!p.left && su.d_projected_t.empty()) su.d_projected_t = Tensor2(mu, d);

    auto pooled_grad = [](std::span<const double> weights, const Tensor2& feats,
                          std::span<const double> upstream) {
        std::vector<double> da(weights.size());
        double mean = 0.0;
        for (std::size_t g = 0; g < weights.size(); ++g) {
            da[g] = dot(feats.row(g), upstream);
            mean += weights[g] * da[g];
        }
        for (std::size_t g = 0; g < weights.size(); ++g) da[g] = weights[g] * (da[g] - mean);
        return da;
    };
    const auto d_row = pooled_grad(p.a_u, sv.features, d_vu);
    const auto d_col = pooled_grad(p.a_v, su.features, d_uv);

    for (std::size_t g = 0; g < mv; ++g) axpy(p.a_u[g], d_vu, sv.d_features.row(g));
    for (std::size_t h = 0; h < mu; ++h) axpy(p.a_v[h], d_uv, su.d_features.row(h));

    // Only pooled entries of D receive gradient.
    auto scatter = [&](std::size_t g, std::size_t h, double delta) {
        if (delta == 0.0) return;
        if (p.left) {
            axpy(delta, su.features.row(h), sv.d_projected_left.row(g));
            axpy(delta, sv.projected_left.row(g), su.d_features.row(h));
            return;
        }
        axpy(delta, su.projected_t.row(h), sv.d_features.row(g));
        axpy(delta, sv.features.row(g), su.d_projected_t.row(h));
    };
    for (std::size_t g = 0; g < mv; ++g)
        scatter(g, p.row_arg[g], d_row[g] * (1.0 - p.row_max[g] * p.row_max[g]));
    for (std::size_t h = 0; h < mu; ++h)
        scatter(p.col_arg[h], h, d_col[h] * (1.0 - p.col_max[h] * p.col_max[h]));
}

std::vector<double> OpcodeEvaluator::interactive(NodeIndex v, NodeIndex u) {
    return forward(v, u).v_given_u;
}

double OpcodeEvaluator::score(NodeIndex v, NodeIndex u) { return forward(v, u).score; }

double OpcodeEvaluator::add_negsampled_loss(NodeIndex v, NodeIndex u, double w,
                                            std::span<const NodeIndex> negatives) {
    const PairPass pos = forward(v, u);
    double loss = -w * log_sigmoid(pos.score);
    backward(pos, -w * (1.0 - sigmoid(pos.score)));
    for (NodeIndex z : negatives) {
        const PairPass neg = forward(v, z);
        loss -= w * log_sigmoid(-neg.score);
        backward(neg, w * sigmoid(neg.score));
    }
    return loss;
}

double OpcodeEvaluator::exact_log_prob(NodeIndex v, NodeIndex u,
                                       std::span<const NodeIndex> candidates) {
    if (std::find(candidates.begin(), candidates.end(), u) == candidates.end()) {
        throw NotFoundError("node is not among the opcode candidates");
    }
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (NodeIndex z : candidates) scores.push_back(forward(v, z).score);
    const double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - mx);
    return score(v, u) - mx - std::log(denom);
}

double OpcodeEvaluator::add_exact_loss(NodeIndex v, NodeIndex u, double w,
                                       std::span<const NodeIndex> candidates) {
    if (std::find(candidates.begin(), candidates.end(), u) == candidates.end()) {
        throw NotFoundError("node is not among the opcode candidates");
    }
    std::vector<PairPass> passes;
    passes.reserve(candidates.size());
    for (NodeIndex z : candidates) passes.push_back(forward(v, z));
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& p : passes) mx = std::max(mx, p.score);
    double denom = 0.0;
    for (const auto& p : passes) denom += std::exp(p.score - mx);
    const double lse = mx + std::log(denom);
    const double s_u = forward(v, u).score;
    for (std::size_t i = 0; i < passes.size(); ++i) {
        const double prob = std::exp(passes[i].score - lse);
        backward(passes[i], w * (prob - (candidates[i] == u ? 1.0 : 0.0)));
    }
    return -w * (s_u - lse);
}

OpcodeGrads OpcodeEvaluator::gradients() {
    OpcodeGrads grads = OpcodeGrads::zeros_like(params_);
    const std::size_t d = params_.feature_dim();
    const std::size_t r = params_.width;
    const std::size_t dp = params_.lexicon.dim();
    const std::size_t vocab = params_.lexicon.size();
    Tensor2 d_table(r * vocab, d);

    std::vector<NodeIndex> order;
    order.reserve(nodes_.size());
    for (const auto& [v, s] : nodes_) order.push_back(v);
    std::sort(order.begin(), order.end());

    for (NodeIndex v : order) {
        NodeState& s = nodes_.at(v);
        if (!s.d_projected_t.empty()) {
            // Q = F A^T: dA += dQ^T F, dF += dQ A.
            add_matmul_tn(s.d_projected_t, s.features, grads.attentive);
            s.d_features += matmul(s.d_projected_t, params_.attentive);
        }
        if (!s.d_projected_left.empty()) {
            // P = F A: dA += F^T dP, dF += dP A^T.
            add_matmul_tn(s.features, s.d_projected_left, grads.attentive);
            s.d_features += matmul_nt(s.d_projected_left, params_.attentive);
        }
        if (s.d_features.empty()) continue;
        for (std::size_t g = 0; g < s.windows->count; ++g) {
            auto dpre = s.d_features.row(g);
            const auto f = s.features.row(g);
            for (std::size_t j = 0; j < d; ++j) dpre[j] *= 1.0 - f[j] * f[j];
            for (std::size_t j = 0; j < d; ++j) grads.bias(j, 0) += dpre[j];
            for (std::size_t k = 0; k < r; ++k) {
                const TokenId t = s.windows->tokens[g * r + k];
                if (t != kPadToken) axpy(1.0, dpre, d_table.row(k * vocab + t));
            }
        }
        s.d_features = Tensor2();
        s.d_projected_t = Tensor2();
        s.d_projected_left = Tensor2();
    }

    for (std::size_t k = 0; k < r; ++k) {
        for (TokenId t = 0; t < vocab; ++t) {
            const auto dt = d_table.row(k * vocab + t);
            if (std::all_of(dt.begin(), dt.end(), [](double x) { return x == 0.0; })) continue;
            const auto lex = params_.lexicon.vector(t);
            auto dlex = grads.lexicon.row(t);
            for (std::size_t j = 0; j < d; ++j) {
                if (dt[j] == 0.0) continue;
                axpy(dt[j], lex, grads.filters.row(j).subspan(k * dp, dp));
                axpy(dt[j], params_.filters.row(j).subspan(k * dp, dp), dlex);
            }
        }
    }
    return grads;
}

OpcodeEdgeLoss opcode_edge_loss(const OpcodeParams& params, const OpcodeCorpus& corpus,
                                NodeIndex v, NodeIndex u, double w, std::size_t k,
                                const NoiseDistribution& noise, Rng& rng) {
    if (k == 0) throw ConfigError("negative sample count must be >= 1");
    OpcodeEdgeLoss out;
    out.negatives.resize(k);
    for (auto& z : out.negatives) z = noise.sample(rng, u);
    OpcodeEvaluator eval(params, corpus);
    out.loss = eval.add_negsampled_loss(v, u, w, out.negatives);
    out.grads = eval.gradients();
    return out;
}

OpcodeEdgeLoss opcode_edge_loss_exact(const OpcodeParams& params, const OpcodeCorpus& corpus,
                                      NodeIndex v, NodeIndex u, double w,
                                      std::span<const NodeIndex> candidates) {
    OpcodeEdgeLoss out;
    OpcodeEvaluator eval(params, corpus);
    out.loss = eval.add_exact_loss(v, u, w, candidates);
    out.grads = eval.gradients();
    return out;
}

std::vector<double> aggregate_opcode_embedding(OpcodeEvaluator& eval, NodeIndex v,
                                               std::span<const NodeIndex> interactive_set,
                                               std::size_t feature_dim) {
    std::vector<double> mean(feature_dim, 0.0);
    if (interactive_set.empty()) return mean;
    // Fixed summation order makes the mean exactly order-independent.
    std::vector<NodeIndex> ordered(interactive_set.begin(), interactive_set.end());
    std::sort(ordered.begin(), ordered.end());
    const double scale = 1.0 / static_cast<double>(ordered.size());
    for (NodeIndex u : ordered) axpy(scale, eval.interactive(v, u), mean);
    return mean;
}

}  // namespace dspsd
