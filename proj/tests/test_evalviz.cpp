#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "dspsd/dataio.hpp"
#include "dspsd/evalviz.hpp"

using namespace dspsd;
namespace fs = std::filesystem;

namespace {

std::vector<AccountId> make_ids(std::size_t n) {
    std::vector<AccountId> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
    return ids;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("evalviz") {

TEST_CASE("precision recall and F") {
    const auto m = prf({2, 0, 2, 0});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 0.5);
    CHECK(m.f == doctest::Approx(2.0 / 3.0));
    CHECK(std::abs(f_measure(0.98, 0.85) - 0.91) <= 0.005);
    CHECK(f_measure(0.98, 0.85) == doctest::Approx(0.9103).epsilon(1e-4));
    CHECK(f_measure(0.0, 0.0) == 0.0);

    const auto empty = prf({0, 0, 3, 5});
    CHECK(empty.precision == 0.0);
    CHECK(empty.precision_undefined);
    CHECK_FALSE(empty.recall_undefined);
    const auto none = prf({0, 0, 0, 4});
    CHECK(none.recall_undefined);
    CHECK(none.f_undefined);
}

TEST_CASE("confusion counts match a recount") {
    using L = Label;
    const std::vector<L> truth{L::Ponzi, L::Ponzi, L::Normal, L::Normal, L::Ponzi, L::Normal};
    const std::vector<L> pred{L::Ponzi, L::Normal, L::Ponzi, L::Normal, L::Ponzi, L::Normal};
    const auto c = confusion(truth, pred);
    CHECK(c == ConfusionCounts{2, 1, 1, 2});
    CHECK(c.total() == 6);
    CHECK_THROWS_AS(confusion(truth, std::vector<L>{L::Ponzi}), ShapeError);
}

TEST_CASE("k-fold plans") {
    auto sizes = [](const FoldPlan& p) {
        std::multiset<std::size_t> s;
        for (const auto& f : p.folds) s.insert(f.size());
        return s;
    };
    const auto hundred = make_ids(100);
    const auto p100 = kfold_split(hundred, 10, 7);
    CHECK(sizes(p100).count(10) == 10);
    CHECK(p100.folds.size() == 10);
    CHECK_NOTHROW(p100.check(hundred));
    const auto ids101 = make_ids(101);
    const auto p101 = kfold_split(ids101, 10, 7);
    CHECK(sizes(p101).count(11) == 1);
    CHECK(sizes(p101).count(10) == 9);
    CHECK(kfold_split(hundred, 10, 7).folds == p100.folds);
    CHECK(kfold_split(hundred, 10, 8).folds != p100.folds);
    CHECK_THROWS_AS(kfold_split(make_ids(3), 10, 1), ConfigError);

    FoldPlan broken = p100;
    broken.folds[0].push_back(broken.folds[1][0]);
    CHECK_THROWS_AS(broken.check(hundred), ConfigError);
}

TEST_CASE("TF-IDF against a brute-force count") {
    const std::vector<Account> corpus{
        Account::contract("p", {"CALL", "CALL", "PUSH1", "SSTORE"}, Label::Ponzi),
        Account::contract("n1", {"PUSH1", "LOG1", "SSTORE"}, Label::Normal),
        Account::contract("n2", {"PUSH1", "LOG1", "LOG1", "STOP", "PUSH1"}, Label::Normal),
        Account::eoa("user"),
    };
    const auto rows = tfidf_opcode_importance(corpus, {false, 0});
    REQUIRE(rows.size() == 5);

    const std::vector<std::pair<std::vector<std::string>, bool>> docs{
        {corpus[0].opcodes, true}, {corpus[1].opcodes, false}, {corpus[2].opcodes, false}};
    for (const auto& r : rows) {
        double df = 0, cp = 0, cn = 0, tp = 0, tn = 0;
        for (const auto& [ops, ponzi] : docs) {
            bool seen = false;
            for (const auto& o : ops) {
                (ponzi ? tp : tn) += 1;
                if (o == r.opcode) {
                    (ponzi ? cp : cn) += 1;
                    seen = true;
                }
            }
            df += seen;
        }
        const double idf = std::log(3.0 / df);
        CHECK(r.tfidf_ponzi == (cp / tp) * idf);
        CHECK(r.tfidf_normal == (cn / tn) * idf);
        CHECK(r.score == std::max((cp / tp) * idf, (cn / tn) * idf));
        CHECK(r.score >= 0.0);
    }
    for (const auto& r : rows) {
        if (r.opcode == "PUSH1") CHECK(r.score == 0.0);
        if (r.opcode == "CALL") CHECK(r.cls == Label::Ponzi);
        if (r.opcode == "LOG1") CHECK(r.cls == Label::Normal);
    }
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].score >= rows[i].score);
    CHECK(tfidf_opcode_importance(corpus, {false, 2}).size() == 2);
    CHECK_THROWS_AS(tfidf_opcode_importance({corpus[1], corpus[2]}), DataError);
}

TEST_CASE("projection properties") {
    // Centered 2-D points: projection is a rotation, so distances survive.
    const std::vector<std::vector<double>> flat{{1, 2}, {-1, 0.5}, {0.5, -1.5}, {-0.5, -1}};
    const auto p = project_2d(flat);
    for (std::size_t i = 0; i < flat.size(); ++i)
        for (std::size_t j = 0; j < flat.size(); ++j) {
            const double d0 = std::hypot(flat[i][0] - flat[j][0], flat[i][1] - flat[j][1]);
            const double d1 = std::hypot(p.coords[i][0] - p.coords[j][0], p.coords[i][1] - p.coords[j][1]);
            CHECK(std::abs(d0 - d1) < 1e-9);
        }
    CHECK(p.variance[0] >= p.variance[1]);

    const auto line = project_2d({{0, 0, 0}, {1, 2, 3}, {2, 4, 6}, {-1, -2, -3}});
    CHECK(line.variance[1] < 1e-12);
    CHECK_FALSE(line.degenerate);

    const auto same = project_2d({{1, 1}, {1, 1}, {1, 1}});
    CHECK(same.degenerate);
    for (const auto& c : same.coords) CHECK((c[0] == 0.0 && c[1] == 0.0));
    CHECK_THROWS(project_2d({{1, 2}}));
}

TEST_CASE("report writers") {
    const auto dir = fs::temp_directory_path() / "dspsd_evalviz_writers";
    fs::create_directories(dir);
    CvReport report;
    FoldResult f;
    f.fold = 0;
    f.ok = true;
    f.metrics = prf({1, 0, 1, 2});
    report.folds.push_back(f);
    report.mean = f.metrics;
    report.completed = 1;
    write_metrics_csv(report, dir / "m.csv");
    const auto text = slurp(dir / "m.csv");
    CHECK(text.rfind("fold,P,R,F\n", 0) == 0);
    CHECK(text.find("mean,") != std::string::npos);

    write_importance_csv({{"CALL", 0.5, Label::Ponzi, 0.5, 0.1, 1.0}}, dir / "i.csv");
    CHECK(slurp(dir / "i.csv").rfind("opcode,score,class\n", 0) == 0);

    const auto proj = project_2d({{0, 1}, {1, 0}});
    write_projection_csv({"a", "b"}, proj, {Label::Ponzi, std::nullopt}, dir / "p.csv");
    CHECK(slurp(dir / "p.csv").rfind("id,x,y,label\n", 0) == 0);
    write_projection_svg(proj, {Label::Ponzi, std::nullopt}, dir / "p.svg");
    CHECK(slurp(dir / "p.svg").find("<svg") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("two-fold cross-validation on the small recipe") {
    const auto data = generate_dataset(recipe_by_name("small"), 7);
    const auto g = data.graph();
    TrainConfig c;
    c.structure_dim = 8;
    c.feature_dim = 8;
    c.opcode_dim = 8;
    c.max_opcodes = 48;
    c.lstm_hidden = 8;
    c.sequence_len = 8;
    c.mlp_widths = {8};
    c.epochs_stage1 = 1;
    c.epochs_stage2 = 5;
    const auto a = cross_validate(g, c, {2, 1});
    CHECK(a.folds.size() == 2);
    CHECK(a.completed == 2);
    CHECK_FALSE(a.partial);
    std::size_t evaluated = 0;
    for (const auto& f : a.folds) {
        CHECK(f.ok);
        CHECK(f.counts == confusion(f.truth, f.predicted));
        evaluated += f.counts.total();
    }
    CHECK(evaluated == 28);
    const auto b = cross_validate(g, c, {2, 1});
    CHECK(a.folds[0].margins == b.folds[0].margins);
    CHECK(a.mean.f == b.mean.f);
}

}
