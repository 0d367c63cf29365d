#include "dspsd/structure_embed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dspsd {

std::span<const double> StructureTable::row(NodeIndex v) const {
    if (v >= vectors.rows()) throw NotFoundError("node missing from structure table");
    return vectors.row(v);
}

std::span<double> StructureTable::row(NodeIndex v) {
    if (v >= vectors.rows()) throw NotFoundError("node missing from structure table");
    return vectors.row(v);
}

StructureTable StructureTable::initialized(std::size_t num_nodes, std::size_t dim, Rng& rng) {
    StructureTable t{Tensor2(num_nodes, dim)};
    fill_uniform(t.vectors, rng, -0.1, 0.1);
    return t;
}

void SparseGrad::add(NodeIndex v, double alpha, std::span<const double> x) {
    auto& row = rows[v];
    if (row.empty()) row.assign(dim, 0.0);
    axpy(alpha, x, row);
}

double SparseGrad::max_abs() const {
    double m = 0.0;
    for (const auto& [v, row] : rows)
        for (double g : row) m = std::max(m, std::abs(g));
    return m;
}

void apply_sparse(StructureTable& table, const SparseGrad& grad, double lr) {
    for (const auto& [v, row] : grad.rows) axpy(-lr, row, table.row(v));
}

NoiseDistribution::NoiseDistribution(std::vector<double> mass) : mass_(std::move(mass)) {
    cumulative_.resize(mass_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mass_.size(); ++i) {
        if (!(mass_[i] >= 0.0)) throw ConfigError("noise mass must be non-negative");
        acc += mass_[i];
        cumulative_[i] = acc;
    }
}

NoiseDistribution NoiseDistribution::from_graph(const TemporalGraph& g, double power) {
    std::vector<double> degree(g.num_nodes(), 0.0);
    for (const auto& [key, w] : g.weights()) {
        degree[key.first] += static_cast<double>(w);
        degree[key.second] += static_cast<double>(w);
    }
    for (double& d : degree) d = std::pow(d, power);
    return NoiseDistribution(std::move(degree));
}

NodeIndex NoiseDistribution::sample(Rng& rng, NodeIndex exclude) const {
    const double total = cumulative_.empty() ? 0.0 : cumulative_.back();
    const double excluded = exclude < mass_.size() ? mass_[exclude] : 0.0;
    if (!(total - excluded > 0.0)) {
        throw ConfigError("noise distribution has no valid negative");
    }
    while (true) {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        const auto idx = static_cast<NodeIndex>(it - cumulative_.begin());
        if (idx != exclude && mass_[idx] > 0.0) return idx;
    }
}

namespace {

void require_in(std::span<const NodeIndex> candidates, NodeIndex v) {
    if (std::find(candidates.begin(), candidates.end(), v) == candidates.end()) {
        throw NotFoundError("node is not among the snapshot candidates");
    }
}

}  // namespace

double log_conditional_prob(const StructureTable& table, NodeIndex v, NodeIndex x,
                            std::span<const NodeIndex> candidates) {
    require_in(candidates, v);
    require_in(candidates, x);
    const auto vv = table.row(v);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (NodeIndex z : candidates) scores.push_back(dot(table.row(z), vv));
    const double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - mx);
    return dot(table.row(x), vv) - mx - std::log(denom);
}

double conditional_prob(const StructureTable& table, NodeIndex v, NodeIndex x,
                        std::span<const NodeIndex> candidates) {
    return std::exp(log_conditional_prob(table, v, x, candidates));
}

StructureLoss edge_loss_exact(const StructureTable& table, NodeIndex v, NodeIndex x, double w,
                              std::span<const NodeIndex> candidates) {
    require_in(candidates, v);
    require_in(candidates, x);
    const auto vv = table.row(v);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (NodeIndex z : candidates) scores.push_back(dot(table.row(z), vv));
    const double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - mx);
    const double log_denom = mx + std::log(denom);

    StructureLoss out;
    out.grad.dim = table.dim();
    out.loss = -w * (dot(table.row(x), vv) - log_denom);
    // dL/ds_z = w (p_z - [z == x]); s_z = z.v feeds both z and v.
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const NodeIndex z = candidates[i];
        const double p = std::exp(scores[i] - log_denom);
        const double coef = w * (p - (z == x ? 1.0 : 0.0));
        out.grad.add(v, coef, table.row(z));
        out.grad.add(z, coef, vv);
    }
    return out;
}

StructureLoss edge_loss_with_negatives(const StructureTable& table, NodeIndex v, NodeIndex x,
                                       double w, std::span<const NodeIndex> negatives) {
    const auto vv = table.row(v);
    StructureLoss out;
    out.grad.dim = table.dim();
    out.negatives.assign(negatives.begin(), negatives.end());

    const double pos = dot(table.row(x), vv);
    out.loss = -w * log_sigmoid(pos);
    const double pos_coef = -w * (1.0 - sigmoid(pos));
    out.grad.add(v, pos_coef, table.row(x));
    out.grad.add(x, pos_coef, vv);
    for (NodeIndex z : negatives) {
        const double s = dot(table.row(z), vv);
        out.loss -= w * log_sigmoid(-s);
        const double coef = w * sigmoid(s);
        out.grad.add(v, coef, table.row(z));
        out.grad.add(z, coef, vv);
    }
    return out;
}

StructureLoss edge_loss_negsampled(const StructureTable& table, NodeIndex v, NodeIndex x,
                                   double w, std::size_t k, const NoiseDistribution& noise,
                                   Rng& rng) {
    if (k == 0) throw ConfigError("negative sample count must be >= 1");
    std::vector<NodeIndex> negatives(k);
    for (auto& z : negatives) z = noise.sample(rng, x);
    return edge_loss_with_negatives(table, v, x, w, negatives);
}

double exact_structure_loss(const StructureTable& table, const std::vector<WeightedEdge>& edges,
                            std::span<const NodeIndex> candidates) {
    double total = 0.0;
    for (const auto& e : edges) {
        total -= static_cast<double>(e.weight) * log_conditional_prob(table, e.from, e.to, candidates);
    }
    return total;
}

std::vector<NodeIndex> all_nodes(std::size_t n) {
    std::vector<NodeIndex> out(n);
    std::iota(out.begin(), out.end(), NodeIndex{0});
    return out;
}

}  // namespace dspsd
