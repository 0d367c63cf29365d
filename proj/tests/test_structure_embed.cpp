#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "dspsd/structure_embed.hpp"

using namespace dspsd;

namespace {

StructureTable table_of(std::initializer_list<std::initializer_list<double>> rows) {
    return StructureTable{Tensor2(rows)};
}

// Gradient of one loss with respect to the whole table, via SparseGrad.
Tensor2 dense(const SparseGrad& g, std::size_t nodes) {
    Tensor2 out(nodes, g.dim);
    for (const auto& [v, row] : g.rows) axpy(1.0, row, out.row(v));
    return out;
}

std::vector<WeightedEdge> ring_edges(std::size_t n, Rng& rng) {
    std::vector<WeightedEdge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        edges.push_back({static_cast<NodeIndex>(i), static_cast<NodeIndex>((i + 1) % n), 1 + rng.below(3)});
        if (i % 3 == 0) edges.push_back({static_cast<NodeIndex>(i), static_cast<NodeIndex>((i + 4) % n), 1});
    }
    return edges;
}

}  // namespace

TEST_SUITE("structure_embed") {

TEST_CASE("conditional probability examples") {
    const auto two = table_of({{0.3, 0.1}, {0.3, 0.1}});
    const std::vector<NodeIndex> c2{0, 1};
    CHECK(conditional_prob(two, 0, 1, c2) == doctest::Approx(0.5));

    StructureTable zeros{Tensor2(5, 3)};
    const auto c5 = all_nodes(5);
    for (NodeIndex x = 0; x < 5; ++x) CHECK(conditional_prob(zeros, 2, x, c5) == doctest::Approx(0.2));

    // v = e1 = [1,0]; candidates e1, e2=[0,1], e3=[0,0]: e / (e + 2).
    const auto t = table_of({{1, 0}, {0, 1}, {0, 0}});
    const double e = std::exp(1.0);
    CHECK(conditional_prob(t, 0, 0, all_nodes(3)) == doctest::Approx(e / (e + 2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(conditional_prob(t, 0, 5, all_nodes(3)), NotFoundError);
}

TEST_CASE("probabilities sum to one against a brute-force denominator") {
    Rng rng(21);
    for (std::size_t n : {2u, 5u, 10u, 50u}) {
        auto t = StructureTable::initialized(n, 6, rng);
        t.vectors *= 20.0;  // large scores exercise max subtraction
        const auto cand = all_nodes(n);
        for (NodeIndex v = 0; v < n; v += 3) {
            double sum = 0.0, brute = 0.0;
            for (NodeIndex x = 0; x < n; ++x) sum += conditional_prob(t, v, x, cand);
            CHECK(std::abs(sum - 1.0) < 1e-9);
            long double denom = 0.0L;
            for (NodeIndex z = 0; z < n; ++z) denom += std::exp(static_cast<long double>(dot(t.row(z), t.row(v))));
            for (NodeIndex x = 0; x < n; ++x)
                brute += static_cast<double>(std::exp(static_cast<long double>(dot(t.row(x), t.row(v)))) / denom);
            CHECK(std::abs(brute - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("exact edge loss value and gradient") {
    const auto two = table_of({{0.3, 0.1}, {0.3, 0.1}});
    CHECK(edge_loss_exact(two, 0, 1, 2.0, std::vector<NodeIndex>{0, 1}).loss ==
          doctest::Approx(2.0 * std::log(2.0)));

    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const auto t = StructureTable::initialized(3, 4, rng);
        const auto cand = all_nodes(3);
        const double w = 1.0 + trial;
        const auto loss = edge_loss_exact(t, 0, 2, w, cand);
        const double err = check_gradient(
            [&](const Tensor2& x) { return edge_loss_exact(StructureTable{x}, 0, 2, w, cand).loss; },
            t.vectors, dense(loss.grad, 3));
        CHECK(err < 1e-4);
    }
}

TEST_CASE("confident prediction drives the loss to zero") {
    // A tie with the self score gives exactly one half.
    auto t = table_of({{10, 0}, {10, 0}, {-10, 0}});
    CHECK(edge_loss_exact(t, 0, 1, 1.0, all_nodes(3)).loss == doctest::Approx(std::log(2.0)));
    t = table_of({{0, 10}, {0, 20}, {-10, 0}});
    CHECK(edge_loss_exact(t, 0, 1, 1.0, all_nodes(3)).loss < 1e-30);
}

TEST_CASE("negative-sampled loss") {
    StructureTable zeros{Tensor2(3, 4)};
    const std::vector<NodeIndex> negs{2, 2, 0};
    CHECK(edge_loss_with_negatives(zeros, 0, 1, 1.5, negs).loss == doctest::Approx(1.5 * 4 * std::log(2.0)));

    // k = 1 with a recorded sample against the direct formula.
    Rng rng(8);
    const auto t = StructureTable::initialized(3, 4, rng);
    const NoiseDistribution noise({1.0, 1.0, 1.0});
    Rng draw(99);
    const auto l = edge_loss_negsampled(t, 0, 1, 2.0, 1, noise, draw);
    REQUIRE(l.negatives.size() == 1);
    const NodeIndex z = l.negatives[0];
    CHECK(z != 1);
    const double expected = -2.0 * (std::log(sigmoid(dot(t.row(1), t.row(0)))) +
                                    std::log(sigmoid(-dot(t.row(z), t.row(0)))));
    CHECK(l.loss == doctest::Approx(expected).epsilon(1e-12));

    for (int trial = 0; trial < 5; ++trial) {
        const auto tt = StructureTable::initialized(4, 3, rng);
        const std::vector<NodeIndex> nz{2, 3, 2};
        const auto loss = edge_loss_with_negatives(tt, 1, 0, 0.7, nz);
        const double err = check_gradient(
            [&](const Tensor2& x) { return edge_loss_with_negatives(StructureTable{x}, 1, 0, 0.7, nz).loss; },
            tt.vectors, dense(loss.grad, 4));
        CHECK(err < 1e-4);
    }
}

TEST_CASE("noise distribution") {
    const NoiseDistribution noise({0.0, 1.0, 3.0});
    Rng rng(1);
    int twos = 0;
    for (int i = 0; i < 4000; ++i) {
        const NodeIndex z = noise.sample(rng, 0);
        CHECK(z != 0);
        twos += z == 2;
    }
    CHECK(twos == doctest::Approx(3000).epsilon(0.05));
    CHECK_THROWS_AS(NoiseDistribution({0.0, 2.0}).sample(rng, 1), ConfigError);
    StructureTable t{Tensor2(2, 2)};
    CHECK_THROWS_AS(edge_loss_negsampled(t, 0, 1, 1.0, 0, noise, rng), ConfigError);

    const auto g = testing::small_graph();
    const auto from_graph = NoiseDistribution::from_graph(g, 0.75);
    const auto c1 = g.index_of("c1");
    double deg = 0.0;
    for (const auto& [k, w] : g.weights())
        if (k.first == c1 || k.second == c1) deg += static_cast<double>(w);
    CHECK(from_graph.mass(c1) == doctest::Approx(std::pow(deg, 0.75)));
}

TEST_CASE("initialization range") {
    Rng rng(2);
    const auto t = StructureTable::initialized(7, 100, rng);
    CHECK(t.num_nodes() == 7);
    CHECK(t.dim() == 100);
    for (double v : t.vectors.values()) CHECK(std::abs(v) <= 0.1);
}

TEST_CASE("one epoch of exact SGD lowers the exact loss on a 10-node graph") {
    int decreased = 0;
    const int seeds = 40;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(1000 + seed);
        const auto edges = ring_edges(10, rng);
        auto t = StructureTable::initialized(10, 100, rng);
        const auto cand = all_nodes(10);
        const double before = exact_structure_loss(t, edges, cand);
        for (const auto& e : edges) {
            const auto l = edge_loss_exact(t, e.from, e.to, static_cast<double>(e.weight), cand);
            apply_sparse(t, l.grad, 0.01);
        }
        decreased += exact_structure_loss(t, edges, cand) < before;
    }
    CHECK(decreased >= 0.95 * seeds);
}

TEST_CASE("negative sampling lowers the exact loss on a 5-node graph") {
    Rng rng(17);
    const std::vector<WeightedEdge> edges{{0, 1, 2}, {1, 2, 1}, {2, 3, 1}, {3, 4, 2}, {4, 0, 1}, {0, 2, 1}};
    std::vector<double> mass(5, 0.0);
    for (const auto& e : edges) {
        mass[e.from] += static_cast<double>(e.weight);
        mass[e.to] += static_cast<double>(e.weight);
    }
    for (double& m : mass) m = std::pow(m, 0.75);
    const NoiseDistribution noise(mass);
    auto t = StructureTable::initialized(5, 16, rng);
    const auto cand = all_nodes(5);
    const double before = exact_structure_loss(t, edges, cand);
    for (int epoch = 0; epoch < 200; ++epoch)
        for (const auto& e : edges) {
            const auto l = edge_loss_negsampled(t, e.from, e.to, 1.0, 5, noise, rng);
            apply_sparse(t, l.grad, 0.01);
        }
    CHECK(exact_structure_loss(t, edges, cand) < before);
}

}
