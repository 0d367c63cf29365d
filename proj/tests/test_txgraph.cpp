#include "doctest.h"

#include "dspsd/errors.hpp"
#include "dspsd/numerics.hpp"
#include "dspsd/txgraph.hpp"

using namespace dspsd;

namespace {

std::vector<TransactionEvent> abc_events() {
    return {{"a", "b", 1, 1.0}, {"a", "c", 5, 2.0}, {"a", "b", 9, 0.5}};
}

std::vector<std::pair<AccountId, std::int64_t>> seq(std::initializer_list<std::pair<const char*, std::int64_t>> items) {
    std::vector<std::pair<AccountId, std::int64_t>> out;
    for (const auto& [id, t] : items) out.emplace_back(id, t);
    return out;
}

}  // namespace

TEST_SUITE("txgraph") {

TEST_CASE("empty event list gives no edges") {
    const auto g = build_graph({}, {});
    CHECK(g.num_edges() == 0);
    CHECK(g.num_nodes() == 0);
}

TEST_CASE("edge weight counts transactions") {
    const auto g = build_graph({{"a", "b", 1, 1.0}, {"a", "b", 9, 3.0}}, {});
    CHECK(g.weight(g.index_of("a"), g.index_of("b")) == 2);
    CHECK(g.weight(g.index_of("b"), g.index_of("a")) == 0);
}

TEST_CASE("formation sequences follow time and include both directions") {
    const auto g = build_graph(abc_events(), {});
    CHECK(interactive_sequence(g, "a") == seq({{"b", 1}, {"c", 5}, {"b", 9}}));
    CHECK(interactive_sequence(g, "b") == seq({{"a", 1}, {"a", 9}}));

    const auto h = build_graph({{"x", "v", 2, 1.0}}, {Account::eoa("iso")});
    CHECK(interactive_sequence(h, "v") == seq({{"x", 2}}));
    CHECK(interactive_sequence(h, "iso").empty());
    CHECK_THROWS_AS(interactive_sequence(h, "nobody"), NotFoundError);
}

TEST_CASE("timestamp ties keep input order") {
    const auto g = build_graph({{"a", "c", 3, 0}, {"a", "b", 3, 0}, {"a", "d", 1, 0}}, {});
    CHECK(interactive_sequence(g, "a") == seq({{"d", 1}, {"c", 3}, {"b", 3}}));
}

TEST_CASE("unknown endpoints become EOAs and contracts keep metadata") {
    const auto g = build_graph(abc_events(), {Account::contract("c", {"PUSH1"}, Label::Ponzi)});
    CHECK(g.account(g.index_of("c")).kind == AccountKind::Contract);
    CHECK(g.account(g.index_of("a")).kind == AccountKind::Eoa);
    CHECK(g.account(g.index_of("a")).opcodes.empty());
    CHECK_THROWS_AS(build_graph({}, {Account{"e", AccountKind::Eoa, {"PUSH1"}, std::nullopt}}), DataError);
}

TEST_CASE("self loops weigh but stay out of formation") {
    const auto g = build_graph({{"a", "a", 1, 0}, {"a", "b", 2, 0}}, {});
    const auto a = g.index_of("a");
    CHECK(g.weight(a, a) == 1);
    CHECK(g.formation(a).size() == 1);
}

TEST_CASE("snapshots filter by time") {
    const auto g = build_graph(abc_events(), {});
    const auto a = g.index_of("a"), b = g.index_of("b"), c = g.index_of("c");
    CHECK(snapshot_at(g, 0).weights.empty());
    CHECK(snapshot_at(g, 0).nodes.empty());
    const auto s5 = snapshot_at(g, 5);
    CHECK(s5.weights.size() == 2);
    CHECK(s5.weights.at({a, b}) == 1);
    CHECK(s5.weights.at({a, c}) == 1);
    CHECK(snapshot_at(g, 100).weights == g.weights());
}

TEST_CASE("graph invariants on random streams") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TransactionEvent> events;
        const std::size_t n = 1 + rng.below(60);
        for (std::size_t i = 0; i < n; ++i) {
            events.push_back({"n" + std::to_string(rng.below(8)), "n" + std::to_string(rng.below(8)),
                              static_cast<std::int64_t>(rng.below(20)), 1.0});
        }
        const auto g = build_graph(events, {});
        std::uint64_t total = 0;
        for (const auto& [k, w] : g.weights()) total += w;
        CHECK(total == n);

        // Snapshots are monotone in time.
        for (std::int64_t t = 0; t < 20; ++t) {
            const auto s1 = snapshot_at(g, t), s2 = snapshot_at(g, t + 1);
            for (const auto& [k, w] : s1.weights) CHECK(w <= s2.weights.at(k));
        }
        // Rebuilding from the graph's own events is idempotent.
        const auto again = build_graph(g.events(), g.accounts());
        CHECK(again.weights() == g.weights());
        for (NodeIndex v = 0; v < g.num_nodes(); ++v) {
            CHECK(again.account(v).id == g.account(v).id);
            CHECK(again.formation(v).size() == g.formation(v).size());
        }
    }
}

}
