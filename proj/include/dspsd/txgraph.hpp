#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dspsd {

struct AccountId {
    std::string value;

    AccountId() = default;
    AccountId(std::string v) : value(std::move(v)) {}  // NOLINT(google-explicit-constructor)
    AccountId(const char* v) : value(v) {}             // NOLINT(google-explicit-constructor)

    auto operator<=>(const AccountId&) const = default;
};

struct AccountIdHash {
    std::size_t operator()(const AccountId& id) const {
        return std::hash<std::string>{}(id.value);
    }
};

enum class AccountKind { Eoa, Contract };
enum class Label { Normal = 0, Ponzi = 1 };

struct Account {
    AccountId id;
    AccountKind kind = AccountKind::Eoa;
    std::vector<std::string> opcodes;
    std::optional<Label> label;

    static Account eoa(AccountId id) { return {std::move(id), AccountKind::Eoa, {}, std::nullopt}; }
    static Account contract(AccountId id, std::vector<std::string> opcodes,
                            std::optional<Label> label = std::nullopt) {
        return {std::move(id), AccountKind::Contract, std::move(opcodes), label};
    }
};

struct TransactionEvent {
    AccountId from;
    AccountId to;
    std::int64_t timestamp = 0;
    // Kept for round-tripping; edge weights count transactions only.
    double value = 0.0;

    bool operator==(const TransactionEvent&) const = default;
};

using NodeIndex = std::uint32_t;

struct FormationEntry {
    NodeIndex counterparty;
    std::int64_t timestamp;
    // Position of the originating event in TemporalGraph::events().
    std::size_t event_index;
};

struct WeightedEdge {
    NodeIndex from;
    NodeIndex to;
    std::uint64_t weight;
};

struct Snapshot {
    std::int64_t time = 0;
    std::map<std::pair<NodeIndex, NodeIndex>, std::uint64_t> weights;
    std::vector<NodeIndex> nodes;  // sorted endpoints of the edges
};

// Weighted directed transaction graph plus per-node formation sequences.
// Immutable once built.
class TemporalGraph {
public:
    std::size_t num_nodes() const { return accounts_.size(); }
    std::size_t num_edges() const { return weights_.size(); }
    std::size_t num_events() const { return events_.size(); }

    const std::vector<Account>& accounts() const { return accounts_; }
    const Account& account(NodeIndex v) const { return accounts_.at(v); }
    std::optional<NodeIndex> find(const AccountId& id) const;
    NodeIndex index_of(const AccountId& id) const;  // throws NotFoundError

    // Events sorted by (timestamp, input order).
    const std::vector<TransactionEvent>& events() const { return events_; }
    // Endpoint indices for events()[i].
    std::pair<NodeIndex, NodeIndex> event_nodes(std::size_t i) const { return event_nodes_[i]; }

    std::uint64_t weight(NodeIndex from, NodeIndex to) const;
    const std::map<std::pair<NodeIndex, NodeIndex>, std::uint64_t>& weights() const {
        return weights_;
    }
    std::vector<WeightedEdge> edges() const;

    const std::vector<FormationEntry>& formation(NodeIndex v) const { return formation_.at(v); }
    // Number of distinct neighbours in either direction.
    std::size_t degree(NodeIndex v) const { return degree_.at(v); }

private:
    friend TemporalGraph build_graph(const std::vector<TransactionEvent>&,
                                     const std::vector<Account>&);

    std::vector<Account> accounts_;
    std::unordered_map<AccountId, NodeIndex, AccountIdHash> index_;
    std::vector<TransactionEvent> events_;
    std::vector<std::pair<NodeIndex, NodeIndex>> event_nodes_;
    std::map<std::pair<NodeIndex, NodeIndex>, std::uint64_t> weights_;
    std::vector<std::vector<FormationEntry>> formation_;
    std::vector<std::size_t> degree_;
};

// Endpoints missing from `accounts` are registered as EOAs in event order.
// Self-loops count toward edge weights but not formation sequences.
TemporalGraph build_graph(const std::vector<TransactionEvent>& events,
                          const std::vector<Account>& accounts);

Snapshot snapshot_at(const TemporalGraph& g, std::int64_t t);

std::vector<std::pair<AccountId, std::int64_t>> interactive_sequence(const TemporalGraph& g,
                                                                     const AccountId& v);

}  // namespace dspsd
