#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dspsd/txgraph.hpp"

namespace dspsd {

enum class ParseMode { Strict, Lenient };

struct TransactionLoad {
    std::vector<TransactionEvent> events;  // file order
    std::size_t skipped = 0;               // malformed rows dropped in lenient mode
    std::vector<std::string> problems;     // "line N: ..." for each skipped row
};

// CSV with header `from,to,timestamp,value`.
TransactionLoad load_transactions(const std::filesystem::path& path,
                                  ParseMode mode = ParseMode::Strict);

// Opcodes TSV (`id<TAB>mnemonics`) and labels CSV (`id,label`, label 0|1).
// Returns one contract record per opcodes row, in file order.
std::vector<Account> load_opcodes_and_labels(const std::filesystem::path& opcodes,
                                             const std::filesystem::path& labels);

void write_transactions(const std::vector<TransactionEvent>& events,
                        const std::filesystem::path& path);
void write_opcodes(const std::vector<Account>& contracts, const std::filesystem::path& path);
void write_labels(const std::vector<Account>& contracts, const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

// Transactions plus contract records. EOAs are implied by the events.
struct Dataset {
    std::vector<TransactionEvent> events;
    std::vector<Account> accounts;

    TemporalGraph graph() const { return build_graph(events, accounts); }
};

struct DatasetManifest {
    std::string transactions = "transactions.csv";
    std::string opcodes = "opcodes.tsv";
    std::string labels = "labels.csv";
    std::string recipe;
    std::uint64_t seed = 0;
    std::size_t accounts = 0;
    std::size_t contracts = 0;
    std::size_t events = 0;
    std::size_t positives = 0;
};

DatasetManifest describe(const Dataset& data, std::string recipe, std::uint64_t seed);

// Writes the three data files and manifest.json into `dir`.
DatasetManifest write_dataset(const Dataset& data, const std::filesystem::path& dir,
                              const std::string& recipe, std::uint64_t seed);
// Reads manifest.json when present, else the default file names.
Dataset load_dataset(const std::filesystem::path& dir, ParseMode mode = ParseMode::Strict);
DatasetManifest read_manifest(const std::filesystem::path& dir);

enum class SchemeKind { ArrayPyramid, TreePyramid, Handover, Waterfall, Normal };

const char* to_string(SchemeKind s);

struct SyntheticParams {
    std::string id_prefix = "c0";
    std::int64_t start_tick = 1;
    // Inter-arrival gap between investors is drawn from [1, max_gap].
    std::int64_t max_gap = 3;
    std::size_t opcode_min = 24;
    std::size_t opcode_max = 48;
    // Probability that an opcode is drawn from the shared background pool
    // rather than the scheme's signature set.
    double opcode_noise = 0.5;
    double interest = 0.1;
};

struct SyntheticContract {
    std::vector<TransactionEvent> events;
    std::vector<Account> accounts;  // the contract first, then its investors
    std::vector<std::pair<AccountId, Label>> labels;
};

// One contract plus n_investors EOAs following the given payout pattern.
// Opcode mnemonics are synthetic vocabularies, not compiled EVM code.
SyntheticContract generate_synthetic(SchemeKind scheme, std::size_t n_investors,
                                     std::uint64_t seed, const SyntheticParams& params = {});

struct Recipe {
    std::size_t per_scheme = 10;  // contracts for each Ponzi scheme
    std::size_t normal = 160;
    std::size_t investors_min = 25;
    std::size_t investors_max = 35;
    std::int64_t start_spread = 200;  // contracts start at ticks in [1, start_spread]
    SyntheticParams params;
};

// "default" (200 contracts, 40 Ponzi) or "small" (28 contracts, 8 Ponzi).
Recipe recipe_by_name(const std::string& name);
Dataset generate_dataset(const Recipe& recipe, std::uint64_t seed);

}  // namespace dspsd
