// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "helpers.hpp"

#include "dspsd/classifier.hpp"
#include "dspsd/cli.hpp"
#include "dspsd/dataio.hpp"
#include "dspsd/evalviz.hpp"
#include "dspsd/log.hpp"
#include "dspsd/opcode_embed.hpp"
#include "dspsd/pipeline.hpp"
#include "dspsd/structure_embed.hpp"
#include "dspsd/temporal.hpp"

using namespace dspsd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- 1. gradients -------------------------------------------------------

double opcode_worst(const OpcodeParams& params, const OpcodeGrads& grads,
                    const std::function<double(const OpcodeParams&)>& loss) {
    double worst = 0.0;
    auto probe = [&](Tensor2 OpcodeParams::*member, const Tensor2& g) {
        const double e = check_gradient(
            [&](const Tensor2& x) {
                OpcodeParams p = params;
                p.*member = x;
                return loss(p);
            },
            params.*member, g);
        worst = std::max(worst, e);
    };
    probe(&OpcodeParams::filters, grads.filters);
    probe(&OpcodeParams::bias, grads.bias);
    probe(&OpcodeParams::attentive, grads.attentive);
    const double e = check_gradient(
        [&](const Tensor2& x) {
            OpcodeParams p = params;
            p.lexicon.vectors = x;
            return loss(p);
        },
        params.lexicon.vectors, grads.lexicon);
    return std::max(worst, e);
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    double worst_s = 0, worst_o = 0, worst_l = 0, worst_m = 0;
    int instances = 0;

    for (int i = 0; i < 5; ++i) {
        Rng rng(10 + i);
        // Structure edge loss, exact and negative-sampled.
        const auto table = StructureTable::initialized(6, 4, rng);
        const auto cand = all_nodes(6);
        const auto exact = edge_loss_exact(table, 1, 3, 1.0 + i, cand);
        Tensor2 dense(6, 4);
        for (const auto& [v, row] : exact.grad.rows) axpy(1.0, row, dense.row(v));
        worst_s = std::max(worst_s, check_gradient([&](const Tensor2& x) {
            return edge_loss_exact(StructureTable{x}, 1, 3, 1.0 + i, cand).loss;
        }, table.vectors, dense));
        const std::vector<NodeIndex> negs{0, 4, 5};
        const auto ns = edge_loss_with_negatives(table, 2, 1, 1.0, negs);
        Tensor2 dense2(6, 4);
        for (const auto& [v, row] : ns.grad.rows) axpy(1.0, row, dense2.row(v));
        worst_s = std::max(worst_s, check_gradient([&](const Tensor2& x) {
            return edge_loss_with_negatives(StructureTable{x}, 2, 1, 1.0, negs).loss;
        }, table.vectors, dense2));

        // Opcode edge loss through filters, A, bias and lexicon.
        const auto g = testing::small_graph();
        const auto params = testing::small_opcode_params(g, rng);
        const auto corpus = OpcodeCorpus::build(g, params.lexicon, params.width, params.max_len);
        const auto all = all_nodes(g.num_nodes());
        const NodeIndex v = static_cast<NodeIndex>(i % g.num_nodes());
        const NodeIndex u = static_cast<NodeIndex>((i + 2) % g.num_nodes());
        const auto r = opcode_edge_loss_exact(params, corpus, v, u, 1.0, all);
        worst_o = std::max(worst_o, opcode_worst(params, r.grads, [&](const OpcodeParams& p) {
            return opcode_edge_loss_exact(p, corpus, v, u, 1.0, all).loss;
        }));
        const std::vector<NodeIndex> onegs{g.index_of("c2"), g.index_of("d")};
        OpcodeEvaluator eval(params, corpus);
        eval.add_negsampled_loss(g.index_of("c1"), u, 1.0, onegs);
        worst_o = std::max(worst_o, opcode_worst(params, eval.gradients(), [&](const OpcodeParams& p) {
            OpcodeEvaluator e(p, corpus);
            return e.add_negsampled_loss(g.index_of("c1"), u, 1.0, onegs);
        }));

        // LSTM, all tensors, three steps.
        auto lstm = SequenceModelParams::zeros(3, 2);
        for (Tensor2* t : lstm.tensors()) fill_uniform(*t, rng, -1.0, 1.0);
        Sequence seq(3, std::vector<double>(2));
        for (auto& row : seq)
            for (double& x : row) x = rng.uniform(-1.0, 1.0);
        const std::vector<double> up{0.4, -0.7, 0.2};
        Rng unused(0);
        const auto trace = lstm_forward(seq, lstm, false, unused);
        const auto lg = lstm_gradients(trace, lstm, up);
        const auto grads = lg.params.tensors();
        for (std::size_t k = 0; k < grads.size(); ++k) {
            worst_l = std::max(worst_l, check_gradient([&](const Tensor2& x) {
                auto q = lstm;
                *q.tensors()[k] = x;
                Rng r0(0);
                return dot(up, lstm_forward(seq, q, false, r0).output);
            }, *lstm.tensors()[k], *grads[k]));
        }

        // MLP classification loss.
        auto mlp = ClassifierParams::initialized(3, {4, 3}, rng);
        for (auto& b : mlp.biases) fill_uniform(b, rng, -0.5, 0.5);
        const std::vector<double> xin{0.3, -0.9, 0.5};
        const int label = i % 2;
        const auto mt = mlp_forward(xin, mlp);
        const auto mg = mlp_gradients(mt, mlp, classification_loss_grad(mt.margin, label));
        for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
            worst_m = std::max(worst_m, check_gradient([&](const Tensor2& w) {
                auto q = mlp;
                q.weights[l] = w;
                const double m = mlp_forward(xin, q).margin;
                return classification_loss(std::vector<double>{m}, std::vector<int>{label}, 0.0, 0.0);
            }, mlp.weights[l], mg.params.weights[l]));
        }
        ++instances;
    }
    const double secs = seconds_since(t0);
    const double worst = std::max({worst_s, worst_o, worst_l, worst_m});
    return {worst < 1e-4 && secs < 30.0,
            fmt::format("{} instances per model, max rel err structure {:.1e} opcode {:.1e} lstm {:.1e} mlp {:.1e}, {:.1f}s",
                        instances, worst_s, worst_o, worst_l, worst_m, secs)};
}

// ---- 2. normalization ---------------------------------------------------

Outcome normalization() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::size_t n = 2; n <= 10; ++n) {
        Rng rng(100 + n);
        auto table = StructureTable::initialized(n, 8, rng);
        table.vectors *= 10.0;
        const auto cand = all_nodes(n);
        for (NodeIndex v = 0; v < n; ++v) {
            double sum = 0.0;
            long double denom = 0.0L;
            for (NodeIndex z = 0; z < n; ++z) denom += std::exp(static_cast<long double>(dot(table.row(z), table.row(v))));
            long double brute = 0.0L;
            for (NodeIndex x = 0; x < n; ++x) {
                sum += conditional_prob(table, v, x, cand);
                brute += std::exp(static_cast<long double>(dot(table.row(x), table.row(v)))) / denom;
            }
            worst = std::max({worst, std::abs(sum - 1.0), static_cast<double>(std::abs(brute - 1.0L))});
        }
    }
    // Opcode softmax over the small graph (6 nodes).
    const auto g = testing::small_graph();
    const auto all = all_nodes(g.num_nodes());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto params = testing::small_opcode_params(g, rng);
        const auto corpus = OpcodeCorpus::build(g, params.lexicon, params.width, params.max_len);
        OpcodeEvaluator eval(params, corpus);
        for (NodeIndex v : all) {
            double sum = 0.0;
            long double denom = 0.0L;
            std::vector<long double> scores;
            for (NodeIndex x : all) scores.push_back(eval.score(v, x));
            for (long double s : scores) denom += std::exp(s);
            long double brute = 0.0L;
            for (std::size_t k = 0; k < all.size(); ++k) {
                sum += std::exp(eval.exact_log_prob(v, all[k], all));
                brute += std::exp(scores[k]) / denom;
            }
            worst = std::max({worst, std::abs(sum - 1.0), static_cast<double>(std::abs(brute - 1.0L))});
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-9 && secs < 5.0, fmt::format("max |sum - 1| = {:.2e} over graphs of 2..10 nodes, {:.2f}s", worst, secs)};
}

// ---- 3. LSTM oracle -----------------------------------------------------

Outcome lstm_oracle() {
    auto p = SequenceModelParams::zeros(1, 1);
    for (Tensor2* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cell}) w->fill(1.0);
    Rng rng(1);
    const auto trace = lstm_forward({{1.0}}, p, false, rng);
    const auto& s = trace.steps.at(0);
    // Independent hand evaluation.
    const double sig = 1.0 / (1.0 + std::exp(-1.0));
    const double cand = std::tanh(1.0);
    const double state = sig * 0.0 + sig * cand;
    const double h = sig * std::tanh(state);
    bool ok = std::abs(sig - 0.7311) < 1e-4 && std::abs(cand - 0.7616) < 1e-4 && std::abs(state - 0.5568) < 1e-4;
    for (double g : {s.in[0], s.forget[0], s.out[0]}) ok = ok && std::abs(g - sig) < 1e-4;
    ok = ok && std::abs(s.cand[0] - cand) < 1e-4 && std::abs(s.state[0] - state) < 1e-4 &&
         std::abs(s.hidden[0] - h) < 1e-4;

    const auto zeros = SequenceModelParams::zeros(4, 3);
    Sequence seq(5, std::vector<double>{0.5, -2.0, 1.0});
    bool all_zero = true;
    for (const auto& st : lstm_forward(seq, zeros, false, rng).steps)
        for (double x : st.hidden) all_zero = all_zero && x == 0.0;
    return {ok && all_zero,
            fmt::format("gates {:.4f}, cand {:.4f}, S {:.4f}, h {:.5f} (o*tanh(S) = {:.5f}); zero-param output exactly 0: {}",
                        s.in[0], s.cand[0], s.state[0], s.hidden[0], h, all_zero ? "yes" : "no")};
}

// ---- 4. metrics ---------------------------------------------------------

Outcome metric_fidelity() {
    const double f = f_measure(0.98, 0.85);
    using L = Label;
    struct Fixture {
        std::vector<L> truth, pred;
        ConfusionCounts hand;
        double p, r;
    };
    const std::vector<Fixture> fixtures{
        {{L::Ponzi, L::Ponzi, L::Ponzi, L::Ponzi, L::Normal},
         {L::Ponzi, L::Ponzi, L::Normal, L::Normal, L::Normal}, {2, 0, 2, 1}, 1.0, 0.5},
        {{L::Ponzi, L::Normal, L::Ponzi, L::Normal, L::Ponzi, L::Normal, L::Ponzi, L::Ponzi, L::Normal, L::Normal},
         {L::Ponzi, L::Ponzi, L::Ponzi, L::Normal, L::Normal, L::Normal, L::Ponzi, L::Normal, L::Normal, L::Normal},
         {3, 1, 2, 4}, 0.75, 0.6},
        {{L::Normal, L::Normal}, {L::Normal, L::Normal}, {0, 0, 0, 2}, 0.0, 0.0},
    };
    bool ok = std::abs(f - 0.91) <= 0.005;
    for (const auto& fx : fixtures) {
        const auto c = confusion(fx.truth, fx.pred);
        const auto m = prf(c);
        const double hand_f = fx.p + fx.r > 0 ? 2 * fx.p * fx.r / (fx.p + fx.r) : 0.0;
        ok = ok && c == fx.hand && std::abs(m.precision - fx.p) < 1e-12 && std::abs(m.recall - fx.r) < 1e-12 &&
             std::abs(m.f - hand_f) < 1e-12;
    }
    return {ok, fmt::format("F(0.98, 0.85) = {:.4f}; {} hand-counted fixtures", f, fixtures.size())};
}

// ---- 5. synthetic end to end --------------------------------------------

Outcome end_to_end() {
    const auto t0 = Clock::now();
    const auto data = generate_dataset(recipe_by_name("default"), 7);
    const auto g = data.graph();
    TrainConfig full;
    TrainConfig structure = full;
    structure.ablation = Ablation::StructureOnly;
    const auto a = cross_validate(g, full, {10, 1});
    const double t_full = seconds_since(t0);
    const auto b = cross_validate(g, structure, {10, 1});
    const double secs = seconds_since(t0);
    const bool ok = !a.partial && !b.partial && a.mean.f >= 0.85 && a.mean.f >= b.mean.f && secs < 600.0;
    return {ok, fmt::format("10-fold mean F full {:.3f} (P {:.3f} R {:.3f}), structure_only {:.3f}; {:.0f}s + {:.0f}s",
                            a.mean.f, a.mean.precision, a.mean.recall, b.mean.f, t_full, secs - t_full)};
}

// ---- 6. stage-1 loss ------------------------------------------------------

Outcome loss_decrease() {
    const auto s = generate_synthetic(SchemeKind::Handover, 9, 7);
    const auto g = build_graph(s.events, s.accounts);
    TrainConfig c;
    c.lr = 0.01;
    c.epochs_stage1 = 20;
    TrainConfig only_s = c, only_o = c;
    only_s.ablation = Ablation::StructureOnly;
    only_o.ablation = Ablation::OpcodeOnly;
    Rng rng(c.seed);
    Rng init = rng.derive(1);
    auto model = initialize_model(g, c, init);
    const double before = exact_stage1_loss(g, model.embedding, c);
    const double s0 = exact_stage1_loss(g, model.embedding, only_s), o0 = exact_stage1_loss(g, model.embedding, only_o);
    Rng s1 = rng.derive(2);
    train_embeddings(g, model.embedding, c, s1);
    const double after = exact_stage1_loss(g, model.embedding, c);
    const double s_after = exact_stage1_loss(g, model.embedding, only_s);
    const double o_after = exact_stage1_loss(g, model.embedding, only_o);
    const double ratio = after / before;
    return {ratio <= 0.5,
            fmt::format("{} nodes, exact loss {:.3f} -> {:.3f} (ratio {:.3f}, need <= 0.5); "
                        "structure term {:.3f} -> {:.3f}, opcode term {:.3f} -> {:.3f}",
                        g.num_nodes(), before, after, ratio, s0, s_after, o0, o_after)};
}

// ---- 7. determinism -------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "dspsd_acceptance_det";
    fs::remove_all(dir);
    const auto data = (dir / "data").string();
    bool ok = run_cli({"dspsd", "generate", "--out", data, "--seed", "7", "--recipe", "small"}) == kExitOk;
    const auto m1 = (dir / "m1.json").string(), m2 = (dir / "m2.json").string();
    ok = ok && run_cli({"dspsd", "train", "--data", data, "--out", m1, "--seed", "7"}) == kExitOk;
    ok = ok && run_cli({"dspsd", "train", "--data", data, "--out", m2, "--seed", "7"}) == kExitOk;
    const auto b1 = slurp(m1), b2 = slurp(m2);
    const bool same = ok && !b1.empty() && b1 == b2;

    // Fold plans on random instances, checked independently of FoldPlan::check.
    Rng rng(2024);
    int good = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.below(14);
        const std::size_t n = k + rng.below(400);
        std::vector<AccountId> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
        const auto plan = kfold_split(ids, k, rng.next_u64());
        std::set<AccountId> seen;
        std::size_t lo = n, hi = 0, count = 0;
        for (const auto& f : plan.folds) {
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
            count += f.size();
            seen.insert(f.begin(), f.end());
        }
        good += plan.folds.size() == k && count == n && seen.size() == n &&
                std::set<AccountId>(ids.begin(), ids.end()) == seen && hi - lo <= 1;
    }
    fs::remove_all(dir);
    return {same && good == 100,
            fmt::format("two train runs byte-identical: {} ({} bytes); fold invariants held on {}/100 plans",
                        same ? "yes" : "no", b1.size(), good)};
}

// ---- 8. TF-IDF -------------------------------------------------------------

Outcome tfidf_oracle() {
    const std::vector<Account> corpus{
        Account::contract("p1", {"CALLVALUE", "CALL", "CALL", "SSTORE", "PUSH1"}, Label::Ponzi),
        Account::contract("n1", {"PUSH1", "SLOAD", "LOG1", "SSTORE"}, Label::Normal),
        Account::contract("n2", {"PUSH1", "LOG1", "LOG1", "RETURN"}, Label::Normal),
    };
    const auto rows = tfidf_opcode_importance(corpus, {false, 0});
    std::set<std::string> vocab;
    for (const auto& a : corpus) vocab.insert(a.opcodes.begin(), a.opcodes.end());
    bool ok = rows.size() == vocab.size();
    for (const auto& r : rows) {
        double df = 0, cp = 0, cn = 0, tp = 0, tn = 0;
        for (const auto& a : corpus) {
            const bool ponzi = *a.label == Label::Ponzi;
            bool in_doc = false;
            for (const auto& o : a.opcodes) {
                (ponzi ? tp : tn) += 1;
                if (o == r.opcode) {
                    (ponzi ? cp : cn) += 1;
                    in_doc = true;
                }
            }
            df += in_doc;
        }
        const double idf = std::log(3.0 / df);
        const double sp = (cp / tp) * idf, sn = (cn / tn) * idf;
        const Label side = sp > sn ? Label::Ponzi : Label::Normal;
        ok = ok && r.tfidf_ponzi == sp && r.tfidf_normal == sn && r.score == std::max(sp, sn) && r.cls == side;
    }
    return {ok, fmt::format("{} opcodes equal a brute-force TF-IDF exactly, class = argmax side", rows.size())};
}

}  // namespace

int main(int argc, char** argv) {
    logger()->set_level(spdlog::level::err);
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> all{
        {"gradient suite", gradient_suite},       {"normalization", normalization},
        {"lstm oracle", lstm_oracle},             {"metric fidelity", metric_fidelity},
        {"synthetic end-to-end", end_to_end},     {"stage-1 loss decrease", loss_decrease},
        {"determinism", determinism},             {"tf-idf oracle", tfidf_oracle},
    };
    // Optional argument: run only the listed criterion numbers, e.g. "1,2,3".
    std::set<int> only;
    if (argc > 1) {
        std::string list = argv[1];
        std::size_t pos = 0;
        while (pos < list.size()) {
            const auto comma = list.find(',', pos);
            only.insert(std::stoi(list.substr(pos, comma - pos)));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    int failures = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = all[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, all[i].name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
