#include "dspsd/dataio.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "dspsd/errors.hpp"
#include "dspsd/numerics.hpp"

namespace dspsd {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

void chomp(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.filename().string() + " line " + std::to_string(line) + ": ";
}

}  // namespace

std::string format_double(double x) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    if (ec != std::errc()) throw NumericError("cannot format value");
    return {buf.data(), ptr};
}

TransactionLoad load_transactions(const std::filesystem::path& path, ParseMode mode) {
    auto in = open_input(path);
    TransactionLoad out;
    std::string line;
    if (!std::getline(in, line)) return out;
    chomp(line);
    if (line != "from,to,timestamp,value") {
        throw DataError(where(path, 1) + "expected header 'from,to,timestamp,value'");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        chomp(line);
        if (line.empty()) continue;
        std::string problem;
        const auto f = split(line, ',');
        TransactionEvent e;
        if (f.size() != 4) {
            problem = "expected 4 fields, found " + std::to_string(f.size());
        } else if (f[0].empty() || f[1].empty()) {
            problem = "empty account id";
        } else if (!parse_number(f[2], e.timestamp)) {
            problem = "timestamp '" + f[2] + "' is not an integer";
        } else if (!parse_number(f[3], e.value) || !std::isfinite(e.value)) {
            problem = "value '" + f[3] + "' is not a finite number";
        }
        if (!problem.empty()) {
            if (mode == ParseMode::Strict) throw DataError(where(path, lineno) + problem);
            ++out.skipped;
            out.problems.push_back("line " + std::to_string(lineno) + ": " + problem);
            continue;
        }
        e.from = f[0];
        e.to = f[1];
        out.events.push_back(std::move(e));
    }
    return out;
}

std::vector<Account> load_opcodes_and_labels(const std::filesystem::path& opcodes,
                                             const std::filesystem::path& labels) {
    std::vector<Account> out;
    std::unordered_map<std::string, std::size_t> row_of;
    {
        auto in = open_input(opcodes);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            chomp(line);
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw DataError(where(opcodes, lineno) + "missing tab separator");
            std::string id = line.substr(0, tab);
            if (id.empty()) throw DataError(where(opcodes, lineno) + "empty account id");
            std::vector<std::string> mnemonics;
            std::istringstream words(line.substr(tab + 1));
            for (std::string w; words >> w;) mnemonics.push_back(std::move(w));
            if (!row_of.emplace(id, out.size()).second)
                throw DataError(where(opcodes, lineno) + "duplicate account '" + id + "'");
            out.push_back(Account::contract(std::move(id), std::move(mnemonics)));
        }
    }
    auto in = open_input(labels);
    std::string line;
    std::size_t lineno = 0;
    std::unordered_set<std::string> labeled;
    while (std::getline(in, line)) {
        ++lineno;
        chomp(line);
        if (line.empty() || (lineno == 1 && line == "id,label")) continue;
        const auto f = split(line, ',');
        if (f.size() != 2) throw DataError(where(labels, lineno) + "expected 'id,label'");
        if (f[1] != "0" && f[1] != "1") throw DataError(where(labels, lineno) + "label must be 0 or 1");
        auto it = row_of.find(f[0]);
        if (it == row_of.end())
            throw DataError(where(labels, lineno) + "label for unknown account '" + f[0] + "'");
        if (!labeled.insert(f[0]).second)
            throw DataError(where(labels, lineno) + "duplicate label for '" + f[0] + "'");
        out[it->second].label = f[1] == "1" ? Label::Ponzi : Label::Normal;
    }
    return out;
}

void write_transactions(const std::vector<TransactionEvent>& events,
                        const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "from,to,timestamp,value\n";
    for (const auto& e : events)
        out << e.from.value << ',' << e.to.value << ',' << e.timestamp << ',' << format_double(e.value) << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

void write_opcodes(const std::vector<Account>& contracts, const std::filesystem::path& path) {
    auto out = open_output(path);
    for (const auto& a : contracts) {
        if (a.kind != AccountKind::Contract) continue;
        out << a.id.value << '\t';
        for (std::size_t i = 0; i < a.opcodes.size(); ++i) out << (i ? " " : "") << a.opcodes[i];
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

void write_labels(const std::vector<Account>& contracts, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "id,label\n";
    for (const auto& a : contracts)
        if (a.kind == AccountKind::Contract && a.label)
            out << a.id.value << ',' << (*a.label == Label::Ponzi ? 1 : 0) << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

DatasetManifest describe(const Dataset& data, std::string recipe, std::uint64_t seed) {
    DatasetManifest m;
    m.recipe = std::move(recipe);
    m.seed = seed;
    m.accounts = data.graph().num_nodes();
    m.events = data.events.size();
    for (const auto& a : data.accounts) {
        if (a.kind != AccountKind::Contract) continue;
        ++m.contracts;
        if (a.label == Label::Ponzi) ++m.positives;
    }
    return m;
}

DatasetManifest write_dataset(const Dataset& data, const std::filesystem::path& dir,
                              const std::string& recipe, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const DatasetManifest m = describe(data, recipe, seed);
    write_transactions(data.events, dir / m.transactions);
    write_opcodes(data.accounts, dir / m.opcodes);
    write_labels(data.accounts, dir / m.labels);
    nlohmann::json j = {{"format", "dspsd-dataset/1"},
                        {"recipe", m.recipe},
                        {"seed", m.seed},
                        {"transactions", m.transactions},
                        {"opcodes", m.opcodes},
                        {"labels", m.labels},
                        {"counts",
                         {{"accounts", m.accounts},
                          {"contracts", m.contracts},
                          {"events", m.events},
                          {"positives", m.positives}}}};
    auto out = open_output(dir / "manifest.json");
    out << j.dump(2) << '\n';
    return m;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
    DatasetManifest m;
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) return m;
    auto in = open_input(path);
    try {
        nlohmann::json j;
        in >> j;
        m.transactions = j.value("transactions", m.transactions);
        m.opcodes = j.value("opcodes", m.opcodes);
        m.labels = j.value("labels", m.labels);
        m.recipe = j.value("recipe", std::string());
        m.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("counts")) {
            const auto& c = j.at("counts");
            m.accounts = c.value("accounts", std::size_t{0});
            m.contracts = c.value("contracts", std::size_t{0});
            m.events = c.value("events", std::size_t{0});
            m.positives = c.value("positives", std::size_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest.json: " + std::string(e.what()));
    }
    return m;
}

Dataset load_dataset(const std::filesystem::path& dir, ParseMode mode) {
    if (!std::filesystem::is_directory(dir)) throw DataError("no data directory " + dir.string());
    const DatasetManifest m = read_manifest(dir);
    Dataset d;
    d.events = load_transactions(dir / m.transactions, mode).events;
    d.accounts = load_opcodes_and_labels(dir / m.opcodes, dir / m.labels);
    return d;
}

const char* to_string(SchemeKind s) {
    switch (s) {
        case SchemeKind::ArrayPyramid: return "array_pyramid";
        case SchemeKind::TreePyramid: return "tree_pyramid";
        case SchemeKind::Handover: return "handover";
        case SchemeKind::Waterfall: return "waterfall";
        case SchemeKind::Normal: return "normal";
    }
    return "normal";
}

namespace {

using Words = std::vector<const char*>;

const Words kBackground = {"PUSH1", "PUSH2", "PUSH4", "DUP1",  "DUP2",   "SWAP1",        "SWAP2",
                           "POP",   "MSTORE", "MLOAD", "ADD",  "SUB",    "JUMP",         "JUMPI",
                           "JUMPDEST", "ISZERO", "EQ", "LT",   "GT",     "AND",          "CALLDATALOAD",
                           "CALLDATASIZE", "RETURN", "STOP", "REVERT"};

const Words& signature(SchemeKind s, std::size_t normal_variant) {
    static const Words array = {"CALLVALUE", "BALANCE", "CALL", "MUL", "DIV", "SLOAD"};
    static const Words tree = {"CALLVALUE", "CALL", "SHA3", "DIV", "EXP", "SLOAD"};
    static const Words handover = {"CALLVALUE", "CALL", "BALANCE", "SSTORE", "ADDMOD", "CALLER"};
    static const Words waterfall = {"CALLVALUE", "CALL", "BALANCE", "MUL", "DIV", "GT"};
    static const std::array<Words, 4> normal = {
        Words{"CALLER", "SLOAD", "SSTORE", "LOG3", "SHA3", "EQ"},
        Words{"CALLER", "ORIGIN", "CALL", "GAS", "EXTCODESIZE", "LOG1"},
        Words{"TIMESTAMP", "NUMBER", "BLOCKHASH", "MOD", "SLOAD", "LOG2"},
        Words{"SHA3", "SSTORE", "LOG1", "CALLDATACOPY", "CODECOPY", "MSIZE"}};
    switch (s) {
        case SchemeKind::ArrayPyramid: return array;
        case SchemeKind::TreePyramid: return tree;
        case SchemeKind::Handover: return handover;
        case SchemeKind::Waterfall: return waterfall;
        case SchemeKind::Normal: break;
    }
    return normal[normal_variant % normal.size()];
}

double money(double x) { return std::round(x * 1e4) / 1e4; }

}  // namespace

SyntheticContract generate_synthetic(SchemeKind scheme, std::size_t n_investors,
                                     std::uint64_t seed, const SyntheticParams& params) {
    if (n_investors < 2) throw ConfigError("a synthetic contract needs at least 2 investors");
    if (params.max_gap < 1) throw ConfigError("max_gap must be >= 1");
    if (params.opcode_min == 0 || params.opcode_max < params.opcode_min)
        throw ConfigError("invalid opcode length range");
    if (!(params.opcode_noise >= 0.0 && params.opcode_noise <= 1.0))
        throw ConfigError("opcode_noise must lie in [0, 1]");
    if (params.id_prefix.empty()) throw ConfigError("id_prefix must not be empty");

    Rng rng(seed);
    SyntheticContract out;
    const AccountId contract = params.id_prefix;

    const std::size_t variant = static_cast<std::size_t>(rng.below(4));
    const Words& sig = signature(scheme, variant);
    const std::size_t len =
        params.opcode_min + static_cast<std::size_t>(rng.below(params.opcode_max - params.opcode_min + 1));
    std::vector<std::string> code;
    code.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        const bool noise = rng.bernoulli(params.opcode_noise);
        const Words& pool = noise ? kBackground : sig;
        code.emplace_back(pool[rng.below(pool.size())]);
    }
    const Label label = scheme == SchemeKind::Normal ? Label::Normal : Label::Ponzi;
    out.accounts.push_back(Account::contract(contract, std::move(code), label));
    out.labels.emplace_back(contract, label);

    std::vector<AccountId> investors;
    for (std::size_t k = 0; k < n_investors; ++k) {
        investors.emplace_back(params.id_prefix + "u" + std::to_string(k + 1));
        out.accounts.push_back(Account::eoa(investors.back()));
    }

    std::int64_t t = params.start_tick;
    auto advance = [&] { t += 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(params.max_gap))); };
    auto emit = [&](const AccountId& from, const AccountId& to, double value) {
        out.events.push_back({from, to, t, money(value)});
    };

    if (scheme == SchemeKind::Normal) {
        // Mostly calls into the contract, some unrelated transfers out.
        const std::size_t n_events = n_investors + n_investors / 2 + rng.below(n_investors);
        for (std::size_t e = 0; e < n_events; ++e) {
            if (e > 0) advance();
            // Early users are active first so every user appears at least once.
            const std::size_t user = e < n_investors ? e : static_cast<std::size_t>(rng.below(n_investors));
            if (e < n_investors || rng.bernoulli(0.7)) {
                emit(investors[user], contract, rng.uniform(0.01, 2.0));
            } else {
                emit(contract, investors[user], rng.uniform(0.01, 1.0));
            }
        }
        return out;
    }

    std::vector<double> deposit(n_investors);
    std::vector<std::size_t> parent(n_investors, 0);
    std::size_t next_refund = 0;  // array pyramid queue head
    double pool = 0.0;
    for (std::size_t k = 0; k < n_investors; ++k) {
        if (k > 0) advance();
        deposit[k] = money(rng.uniform(1.0, 2.0));
        emit(investors[k], contract, deposit[k]);
        switch (scheme) {
            case SchemeKind::ArrayPyramid: {
                // Refund the earliest unpaid investors while the pot allows it.
                pool += deposit[k];
                while (next_refund < k && pool >= deposit[next_refund] * (1.0 + params.interest) * 1.5) {
                    const double amount = deposit[next_refund] * (1.0 + params.interest) * 1.5;
                    pool -= amount;
                    emit(contract, investors[next_refund++], amount);
                }
                break;
            }
            case SchemeKind::TreePyramid: {
                if (k == 0) break;
                parent[k] = static_cast<std::size_t>(rng.below(k));
                double share = deposit[k] * 0.5;
                for (std::size_t a = parent[k];; a = parent[a]) {
                    emit(contract, investors[a], share);
                    share *= 0.5;
                    if (a == 0) break;
                }
                break;
            }
            case SchemeKind::Handover:
                if (k > 0) emit(contract, investors[k - 1], deposit[k - 1] * (1.0 + params.interest));
                break;
            case SchemeKind::Waterfall: {
                double left = deposit[k];
                for (std::size_t j = 0; j < k; ++j) {
                    const double share = deposit[j] * 0.3;
                    if (left < share) break;
                    emit(contract, investors[j], share);
                    left -= share;
                }
                break;
            }
            case SchemeKind::Normal: break;
        }
    }
    return out;
}

Recipe recipe_by_name(const std::string& name) {
    Recipe r;
    if (name == "default") return r;
    if (name == "small") {
        r.per_scheme = 2;
        r.normal = 20;
        r.investors_min = 8;
        r.investors_max = 12;
        r.start_spread = 40;
        return r;
    }
    throw ConfigError("unknown recipe '" + name + "' (expected default|small)");
}

Dataset generate_dataset(const Recipe& recipe, std::uint64_t seed) {
    if (recipe.investors_min < 2 || recipe.investors_max < recipe.investors_min)
        throw ConfigError("invalid investor range");
    if (recipe.start_spread < 1) throw ConfigError("start_spread must be >= 1");
    std::vector<SchemeKind> plan;
    for (auto s : {SchemeKind::ArrayPyramid, SchemeKind::TreePyramid, SchemeKind::Handover,
                   SchemeKind::Waterfall})
        plan.insert(plan.end(), recipe.per_scheme, s);
    plan.insert(plan.end(), recipe.normal, SchemeKind::Normal);

    Rng rng(seed);
    Dataset d;
    const std::size_t width = std::to_string(plan.size()).size();
    for (std::size_t c = 0; c < plan.size(); ++c) {
        SyntheticParams p = recipe.params;
        std::string num = std::to_string(c + 1);
        p.id_prefix = "C" + std::string(width - num.size(), '0') + num;
        p.start_tick = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(recipe.start_spread)));
        const std::size_t n = recipe.investors_min +
                              static_cast<std::size_t>(rng.below(recipe.investors_max - recipe.investors_min + 1));
        const auto sc = generate_synthetic(plan[c], n, rng.derive(c + 1).next_u64(), p);
        d.events.insert(d.events.end(), sc.events.begin(), sc.events.end());
        d.accounts.push_back(sc.accounts.front());
    }
    // Interleave contracts on one timeline; the stable sort keeps each
    // contract's same-tick payouts after the deposit that triggered them.
    std::stable_sort(d.events.begin(), d.events.end(),
                     [](const TransactionEvent& a, const TransactionEvent& b) { return a.timestamp < b.timestamp; });
    return d;
}

}  // namespace dspsd
