#include "dspsd/txgraph.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "dspsd/errors.hpp"

namespace dspsd {

std::optional<NodeIndex> TemporalGraph::find(const AccountId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

NodeIndex TemporalGraph::index_of(const AccountId& id) const {
    auto found = find(id);
    if (!found) throw NotFoundError("unknown account: " + id.value);
    return *found;
}

std::uint64_t TemporalGraph::weight(NodeIndex from, NodeIndex to) const {
    auto it = weights_.find({from, to});
    return it == weights_.end() ? 0 : it->second;
}

std::vector<WeightedEdge> TemporalGraph::edges() const {
    std::vector<WeightedEdge> out;
    out.reserve(weights_.size());
    for (const auto& [key, w] : weights_) out.push_back({key.first, key.second, w});
    return out;
}

TemporalGraph build_graph(const std::vector<TransactionEvent>& events,
                          const std::vector<Account>& accounts) {
    TemporalGraph g;
    auto register_account = [&g](const Account& a) {
        if (g.index_.contains(a.id)) return g.index_.at(a.id);
        const auto idx = static_cast<NodeIndex>(g.accounts_.size());
        g.index_.emplace(a.id, idx);
        g.accounts_.push_back(a);
        return idx;
    };
    for (const auto& a : accounts) {
        if (a.id.value.empty()) throw DataError("account id must be non-empty");
        if (a.kind == AccountKind::Eoa && (!a.opcodes.empty() || a.label)) {
            throw DataError("EOA " + a.id.value + " cannot carry opcodes or a label");
        }
        register_account(a);
    }

    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return events[a].timestamp < events[b].timestamp;
    });

    g.events_.reserve(events.size());
    g.event_nodes_.reserve(events.size());
    for (std::size_t i : order) {
        const auto& e = events[i];
        const NodeIndex from = register_account(Account::eoa(e.from));
        const NodeIndex to = register_account(Account::eoa(e.to));
        g.events_.push_back(e);
        g.event_nodes_.emplace_back(from, to);
    }

    g.formation_.assign(g.accounts_.size(), {});
    std::vector<std::set<NodeIndex>> neighbours(g.accounts_.size());
    for (std::size_t i = 0; i < g.events_.size(); ++i) {
        const auto [from, to] = g.event_nodes_[i];
        ++g.weights_[{from, to}];
        if (from == to) continue;
        const auto t = g.events_[i].timestamp;
        g.formation_[from].push_back({to, t, i});
        g.formation_[to].push_back({from, t, i});
        neighbours[from].insert(to);
        neighbours[to].insert(from);
    }
    g.degree_.resize(g.accounts_.size());
    for (std::size_t v = 0; v < neighbours.size(); ++v) g.degree_[v] = neighbours[v].size();
    return g;
}

Snapshot snapshot_at(const TemporalGraph& g, std::int64_t t) {
    Snapshot s;
    s.time = t;
    std::set<NodeIndex> nodes;
    for (std::size_t i = 0; i < g.num_events(); ++i) {
        if (g.events()[i].timestamp > t) break;  // events are time-sorted
        const auto [from, to] = g.event_nodes(i);
        ++s.weights[{from, to}];
        nodes.insert(from);
        nodes.insert(to);
    }
    s.nodes.assign(nodes.begin(), nodes.end());
    return s;
}

std::vector<std::pair<AccountId, std::int64_t>> interactive_sequence(const TemporalGraph& g,
                                                                     const AccountId& v) {
    const NodeIndex idx = g.index_of(v);
    std::vector<std::pair<AccountId, std::int64_t>> out;
    for (const auto& f : g.formation(idx)) out.emplace_back(g.account(f.counterparty).id, f.timestamp);
    return out;
}

}  // namespace dspsd
