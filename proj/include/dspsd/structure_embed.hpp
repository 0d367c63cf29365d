#pragma once

#include <map>
#include <span>
#include <vector>

#include "dspsd/numerics.hpp"
#include "dspsd/txgraph.hpp"

namespace dspsd {

// One structure vector per node, stored as the rows of a |V| x d_s tensor.
struct StructureTable {
    Tensor2 vectors;

    std::size_t dim() const { return vectors.cols(); }
    std::size_t num_nodes() const { return vectors.rows(); }
    std::span<const double> row(NodeIndex v) const;
    std::span<double> row(NodeIndex v);

    static StructureTable initialized(std::size_t num_nodes, std::size_t dim, Rng& rng);
};

// Row-sparse gradient keyed by node index. Ordered so that applying it is
// deterministic.
struct SparseGrad {
    std::size_t dim = 0;
    std::map<NodeIndex, std::vector<double>> rows;

    void add(NodeIndex v, double alpha, std::span<const double> x);
    double max_abs() const;
};

void apply_sparse(StructureTable& table, const SparseGrad& grad, double lr);

// Sampling distribution for negatives: node mass proportional to
// (weighted degree)^power.
class NoiseDistribution {
public:
    NoiseDistribution() = default;
    explicit NoiseDistribution(std::vector<double> mass);
    static NoiseDistribution from_graph(const TemporalGraph& g, double power = 0.75);

    std::size_t size() const { return mass_.size(); }
    double mass(NodeIndex v) const { return mass_.at(v); }
    // Draws a node other than `exclude`. Throws ConfigError when no other node
    // carries mass.
    NodeIndex sample(Rng& rng, NodeIndex exclude) const;

private:
    std::vector<double> mass_;
    std::vector<double> cumulative_;
};

struct StructureLoss {
    double loss = 0.0;
    SparseGrad grad;
    std::vector<NodeIndex> negatives;
};

// exp(x.v) / sum_{z in candidates} exp(z.v), with max subtraction.
double conditional_prob(const StructureTable& table, NodeIndex v, NodeIndex x,
                        std::span<const NodeIndex> candidates);
double log_conditional_prob(const StructureTable& table, NodeIndex v, NodeIndex x,
                            std::span<const NodeIndex> candidates);

// -w log p(x|v) over the full candidate set, with its gradient.
StructureLoss edge_loss_exact(const StructureTable& table, NodeIndex v, NodeIndex x, double w,
                              std::span<const NodeIndex> candidates);

// -w [log s(x.v) + sum_j log s(-z_j.v)] for the given negatives.
StructureLoss edge_loss_with_negatives(const StructureTable& table, NodeIndex v, NodeIndex x,
                                       double w, std::span<const NodeIndex> negatives);

StructureLoss edge_loss_negsampled(const StructureTable& table, NodeIndex v, NodeIndex x,
                                   double w, std::size_t k, const NoiseDistribution& noise,
                                   Rng& rng);

// Sum of exact edge losses over all weighted edges, candidates = all nodes.
double exact_structure_loss(const StructureTable& table, const std::vector<WeightedEdge>& edges,
                            std::span<const NodeIndex> candidates);

std::vector<NodeIndex> all_nodes(std::size_t n);

}  // namespace dspsd
