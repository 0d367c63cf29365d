#include "dspsd/evalviz.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "dspsd/errors.hpp"
#include "dspsd/log.hpp"

namespace dspsd {

ConfusionCounts confusion(std::span<const Label> truth, std::span<const Label> predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("truth and predictions differ in length");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == Label::Ponzi;
        const bool p = predicted[i] == Label::Ponzi;
        if (t && p) ++c.tp;
        else if (!t && p) ++c.fp;
        else if (t && !p) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f_measure(double precision, double recall) {
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

Prf prf(const ConfusionCounts& c) {
    Prf out;
    if (c.tp + c.fp == 0) {
        out.precision_undefined = true;
    } else {
        out.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        out.recall_undefined = true;
    } else {
        out.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    out.f_undefined = out.precision + out.recall == 0.0;
    out.f = f_measure(out.precision, out.recall);
    return out;
}

void FoldPlan::check(std::span<const AccountId> ids) const {
    if (folds.empty()) throw ConfigError("fold plan is empty");
    std::set<AccountId> seen;
    std::size_t lo = folds.front().size(), hi = lo;
    for (const auto& f : folds) {
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
        for (const auto& id : f)
            if (!seen.insert(id).second) throw ConfigError("folds overlap on '" + id.value + "'");
    }
    if (hi - lo > 1) throw ConfigError("fold sizes differ by more than one");
    const std::set<AccountId> expected(ids.begin(), ids.end());
    if (seen != expected) throw ConfigError("folds do not cover the labeled accounts exactly");
}

FoldPlan kfold_split(std::vector<AccountId> ids, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold split needs k >= 2");
    if (ids.size() < k) {
        throw ConfigError("cannot split " + std::to_string(ids.size()) + " items into " +
                          std::to_string(k) + " folds");
    }
    if (std::set<AccountId>(ids.begin(), ids.end()).size() != ids.size())
        throw DataError("duplicate id in k-fold input");
    const std::vector<AccountId> original = ids;
    Rng rng(seed);
    rng.shuffle(ids);
    FoldPlan plan;
    plan.folds.resize(k);
    for (std::size_t i = 0; i < ids.size(); ++i) plan.folds[i % k].push_back(std::move(ids[i]));
    plan.check(original);
    return plan;
}

CvReport cross_validate(const TemporalGraph& g, const TrainConfig& config, const CvOptions& options) {
    config.validate();
    if (config.joint_finetune) {
        throw ConfigError("cross-validation shares stage 1 across folds; disable joint_finetune");
    }
    const auto labeled = labeled_contracts(g);
    std::vector<AccountId> ids;
    for (const auto& l : labeled) ids.push_back(g.account(l.node).id);
    const FoldPlan plan = kfold_split(ids, options.folds, config.seed);

    const Rng master(config.seed);
    Rng init_rng = master.derive(1);
    Rng stage1_rng = master.derive(2);
    ModelBundle base = initialize_model(g, config, init_rng);
    logger()->info("cross-validation: stage 1 on {} events", g.num_events());
    train_embeddings(g, base.embedding, config, stage1_rng);

    std::vector<Sequence> sequences(labeled.size());
    {
        NodeEmbedder embedder(g, base.embedding, config);
        for (std::size_t i = 0; i < labeled.size(); ++i) sequences[i] = embedder.compressed(labeled[i].node);
    }
    std::map<AccountId, std::size_t> position;
    for (std::size_t i = 0; i < ids.size(); ++i) position.emplace(ids[i], i);

    CvReport report;
    report.folds.resize(plan.folds.size());
    auto run_fold = [&](std::size_t f) {
        FoldResult& r = report.folds[f];
        r.fold = f + 1;
        try {
            std::set<AccountId> held(plan.folds[f].begin(), plan.folds[f].end());
            std::vector<Sequence> train_x;
            std::vector<int> train_y;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (held.count(ids[i])) continue;
                train_x.push_back(sequences[i]);
                train_y.push_back(labeled[i].label);
            }
            ModelBundle model = base;
            Rng rng = master.derive(1000 + f);
            train_classifier_frozen(train_x, train_y, model, rng);
            Rng unused(0);
            for (const auto& id : plan.folds[f]) {
                const std::size_t i = position.at(id);
                const auto h =
                    lstm_forward(model.scaler.apply(sequences[i]), model.lstm, false, unused).output;
                const double m = mlp_forward(h, model.classifier).margin;
                r.ids.push_back(id);
                r.truth.push_back(labeled[i].label ? Label::Ponzi : Label::Normal);
                r.predicted.push_back(predict(m));
                r.margins.push_back(m);
            }
            r.counts = confusion(r.truth, r.predicted);
            r.metrics = prf(r.counts);
            r.ok = true;
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, plan.folds.size()));
    if (jobs == 1) {
        for (std::size_t f = 0; f < plan.folds.size(); ++f) run_fold(f);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t j = 0; j < jobs; ++j)
            workers.emplace_back([&] {
                for (std::size_t f; (f = next++) < plan.folds.size();) run_fold(f);
            });
        for (auto& w : workers) w.join();
    }

    for (const auto& r : report.folds) {
        if (!r.ok) {
            report.partial = true;
            logger()->error("fold {} failed: {}", r.fold, r.error);
            continue;
        }
        logger()->info("fold {}: P={:.4f} R={:.4f} F={:.4f}", r.fold, r.metrics.precision,
                       r.metrics.recall, r.metrics.f);
        ++report.completed;
        report.mean.precision += r.metrics.precision;
        report.mean.recall += r.metrics.recall;
        report.mean.f += r.metrics.f;
    }
    if (report.completed > 0) {
        const double n = static_cast<double>(report.completed);
        report.mean.precision /= n;
        report.mean.recall /= n;
        report.mean.f /= n;
    }
    return report;
}

std::vector<OpcodeImportance> tfidf_opcode_importance(const std::vector<Account>& contracts,
                                                      const TfidfOptions& options) {
    std::map<std::string, std::size_t> df, count_p, count_n;
    std::size_t docs = 0, total_p = 0, total_n = 0, n_p = 0, n_n = 0;
    for (const auto& a : contracts) {
        if (a.kind != AccountKind::Contract || !a.label) continue;
        ++docs;
        const bool ponzi = *a.label == Label::Ponzi;
        (ponzi ? n_p : n_n) += 1;
        for (const auto& op : std::set<std::string>(a.opcodes.begin(), a.opcodes.end())) ++df[op];
        for (const auto& op : a.opcodes) {
            ++(ponzi ? count_p : count_n)[op];
            ++(ponzi ? total_p : total_n);
        }
    }
    if (n_p == 0 || n_n == 0) throw DataError("TF-IDF needs at least one contract of each class");

    std::vector<OpcodeImportance> out;
    const double n = static_cast<double>(docs);
    for (const auto& [op, d] : df) {
        OpcodeImportance r;
        r.opcode = op;
        const double dfd = static_cast<double>(d);
        r.idf = options.smooth_idf ? std::log((1.0 + n) / (1.0 + dfd)) + 1.0 : std::log(n / dfd);
        const double tf_p = total_p ? static_cast<double>(count_p[op]) / static_cast<double>(total_p) : 0.0;
        const double tf_n = total_n ? static_cast<double>(count_n[op]) / static_cast<double>(total_n) : 0.0;
        r.tfidf_ponzi = tf_p * r.idf;
        r.tfidf_normal = tf_n * r.idf;
        r.score = std::max(r.tfidf_ponzi, r.tfidf_normal);
        r.cls = r.tfidf_ponzi > r.tfidf_normal ? Label::Ponzi : Label::Normal;
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const OpcodeImportance& a, const OpcodeImportance& b) { return a.score > b.score; });
    if (options.top > 0 && out.size() > options.top) out.resize(options.top);
    return out;
}

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> multiply(const Matrix& m, const std::vector<double>& x) {
    std::vector<double> y(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) y[i] = dot(m[i], x);
    return y;
}

double normalize(std::vector<double>& x) {
    const double n = std::sqrt(dot(x, x));
    if (n > 0.0)
        for (double& v : x) v /= n;
    return n;
}

void orthogonalize(std::vector<double>& x, const std::vector<std::vector<double>>& basis) {
    for (const auto& b : basis) axpy(-dot(x, b), b, x);
}

// Dominant eigenvector of a symmetric PSD matrix, orthogonal to `basis`.
std::vector<double> power_iteration(const Matrix& m, const std::vector<std::vector<double>>& basis,
                                    Rng& rng) {
    const std::size_t d = m.size();
    std::vector<double> x(d);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    orthogonalize(x, basis);
    if (normalize(x) == 0.0) return std::vector<double>(d, 0.0);
    for (int it = 0; it < 5000; ++it) {
        std::vector<double> y = multiply(m, x);
        orthogonalize(y, basis);
        if (normalize(y) == 0.0) break;  // x spans a null direction
        double diff = 0.0;
        for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(y[i] - x[i]));
        x = std::move(y);
        if (diff < 1e-13) break;
    }
    // Deterministic sign: largest-magnitude entry positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
        if (std::abs(x[i]) > std::abs(x[arg])) arg = i;
    if (x[arg] < 0.0)
        for (double& v : x) v = -v;
    return x;
}

}  // namespace

Projection project_2d(const std::vector<std::vector<double>>& points, std::uint64_t seed) {
    if (points.size() < 2) throw DataError("projection needs at least two vectors");
    const std::size_t d = points.front().size();
    if (d == 0) throw ShapeError("projection input has zero dimension");
    for (const auto& p : points)
        if (p.size() != d) throw ShapeError("projection inputs differ in dimension");

    const double n = static_cast<double>(points.size());
    std::vector<double> mean(d, 0.0);
    for (const auto& p : points) axpy(1.0 / n, p, mean);
    Matrix centered;
    for (const auto& p : points) {
        std::vector<double> c = p;
        axpy(-1.0, mean, c);
        centered.push_back(std::move(c));
    }
    Matrix cov(d, std::vector<double>(d, 0.0));
    for (const auto& c : centered)
        for (std::size_t i = 0; i < d; ++i) axpy(c[i] / n, c, cov[i]);

    Projection out;
    out.coords.assign(points.size(), {0.0, 0.0});
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += cov[i][i];
    if (trace == 0.0) {
        out.degenerate = true;
        out.components = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        return out;
    }

    Rng rng(seed);
    std::vector<std::vector<double>> basis;
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> v = d > k ? power_iteration(cov, basis, rng) : std::vector<double>(d, 0.0);
        const double lambda = dot(v, multiply(cov, v));
        // Deflation: remove the found component before searching the next.
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i][j] -= lambda * v[i] * v[j];
        if (dot(v, v) > 0.0) basis.push_back(v);
        for (std::size_t p = 0; p < points.size(); ++p) out.coords[p][k] = dot(centered[p], v);
        double var = 0.0;
        for (const auto& c : out.coords) var += c[k] * c[k] / n;
        out.variance[k] = var;
        out.components[k] = std::move(v);
    }
    return out;
}

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

std::string fixed(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string label_name(Label l) { return l == Label::Ponzi ? "ponzi" : "normal"; }

}  // namespace

void write_metrics_csv(const CvReport& report, const std::filesystem::path& path) {
    auto out = open_report(path);
    out << "fold,P,R,F\n";
    for (const auto& r : report.folds) {
        out << r.fold << ',';
        if (r.ok) {
            out << fixed(r.metrics.precision) << ',' << fixed(r.metrics.recall) << ',' << fixed(r.metrics.f);
        } else {
            out << "NA,NA,NA";
        }
        out << '\n';
    }
    out << (report.partial ? "mean_partial," : "mean,") << fixed(report.mean.precision) << ','
        << fixed(report.mean.recall) << ',' << fixed(report.mean.f) << '\n';
}

void write_importance_csv(const std::vector<OpcodeImportance>& rows, const std::filesystem::path& path) {
    auto out = open_report(path);
    out << "opcode,score,class\n";
    for (const auto& r : rows) out << r.opcode << ',' << fixed(r.score, 8) << ',' << label_name(r.cls) << '\n';
}

void write_projection_csv(const std::vector<AccountId>& ids, const Projection& p,
                          const std::vector<std::optional<Label>>& labels,
                          const std::filesystem::path& path) {
    if (ids.size() != p.coords.size() || labels.size() != ids.size())
        throw ShapeError("projection rows, ids and labels differ in length");
    auto out = open_report(path);
    out << "id,x,y,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i].value << ',' << fixed(p.coords[i][0], 8) << ',' << fixed(p.coords[i][1], 8) << ',';
        if (labels[i]) out << (*labels[i] == Label::Ponzi ? 1 : 0);
        out << '\n';
    }
}

void write_projection_svg(const Projection& p, const std::vector<std::optional<Label>>& labels,
                          const std::filesystem::path& path) {
    if (labels.size() != p.coords.size()) throw ShapeError("one label slot per point expected");
    constexpr double size = 480.0, margin = 24.0;
    double lo[2] = {0.0, 0.0}, hi[2] = {0.0, 0.0};
    for (int k = 0; k < 2; ++k) {
        lo[k] = hi[k] = p.coords.empty() ? 0.0 : p.coords.front()[k];
        for (const auto& c : p.coords) {
            lo[k] = std::min(lo[k], c[k]);
            hi[k] = std::max(hi[k], c[k]);
        }
        if (hi[k] - lo[k] < 1e-12) {
            lo[k] -= 1.0;
            hi[k] += 1.0;
        }
    }
    auto out = open_report(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < p.coords.size(); ++i) {
        const double x = margin + (p.coords[i][0] - lo[0]) / (hi[0] - lo[0]) * (size - 2 * margin);
        const double y = size - margin - (p.coords[i][1] - lo[1]) / (hi[1] - lo[1]) * (size - 2 * margin);
        const char* color = !labels[i] ? "#999999" : *labels[i] == Label::Ponzi ? "#d62728" : "#1f77b4";
        out << "<circle cx=\"" << fixed(x, 2) << "\" cy=\"" << fixed(y, 2) << "\" r=\"3\" fill=\"" << color
            << "\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace dspsd
