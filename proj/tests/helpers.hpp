#pragma once

#include <vector>

#include "dspsd/opcode_embed.hpp"
#include "dspsd/pipeline.hpp"
#include "dspsd/txgraph.hpp"

namespace testing {

using namespace dspsd;

// Two contracts and four EOAs with some repeated edges.
inline TemporalGraph small_graph() {
    std::vector<Account> accounts = {
        Account::contract("c1", {"PUSH1", "CALLVALUE", "CALL", "PUSH1", "SSTORE", "STOP"}, Label::Ponzi),
        Account::contract("c2", {"PUSH1", "SLOAD", "LOG1", "RETURN"}, Label::Normal),
    };
    std::vector<TransactionEvent> events = {
        {"a", "c1", 1, 1.0}, {"b", "c1", 2, 1.0}, {"c1", "a", 2, 1.1}, {"c", "c2", 3, 0.5},
        {"a", "c2", 4, 0.2}, {"d", "c1", 5, 1.0}, {"c1", "b", 5, 1.1}, {"c2", "c", 6, 0.1},
        {"a", "c1", 7, 1.0}, {"c1", "a", 8, 0.3},
    };
    return build_graph(events, accounts);
}

inline OpcodeParams small_opcode_params(const TemporalGraph& g, Rng& rng, std::size_t max_len = 8) {
    auto p = OpcodeParams::initialized(opcode_vocabulary(g), 4, 3, 2, max_len, rng);
    // Larger weights than the default init so tanh curvature is exercised.
    for (Tensor2* t : {&p.lexicon.vectors, &p.filters, &p.bias, &p.attentive}) *t *= 8.0;
    return p;
}

}  // namespace testing
