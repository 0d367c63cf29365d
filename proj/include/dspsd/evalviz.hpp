#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspsd/pipeline.hpp"
#include "dspsd/txgraph.hpp"

namespace dspsd {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

// Positive class is Ponzi.
ConfusionCounts confusion(std::span<const Label> truth, std::span<const Label> predicted);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    // Set when the matching ratio was 0/0; the value is then reported as 0.
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f_undefined = false;
};

Prf prf(const ConfusionCounts& c);
// Harmonic mean 2PR/(P+R); 0 when P+R is 0.
double f_measure(double precision, double recall);

struct FoldPlan {
    std::vector<std::vector<AccountId>> folds;

    // Throws ConfigError unless the folds are disjoint, cover `ids` exactly
    // and differ in size by at most one.
    void check(std::span<const AccountId> ids) const;
};

// Seeded shuffle, then round-robin assignment.
FoldPlan kfold_split(std::vector<AccountId> ids, std::size_t k, std::uint64_t seed);

struct FoldResult {
    std::size_t fold = 0;
    bool ok = false;
    std::string error;
    std::vector<AccountId> ids;
    std::vector<Label> truth;
    std::vector<Label> predicted;
    std::vector<double> margins;
    ConfusionCounts counts;
    Prf metrics;
};

struct CvReport {
    std::vector<FoldResult> folds;
    Prf mean;  // unweighted mean over completed folds
    std::size_t completed = 0;
    bool partial = false;
};

struct CvOptions {
    std::size_t folds = 10;
    std::size_t jobs = 1;
};

// Stage 1 uses no labels, so it runs once on the full graph and every fold
// starts from the same embeddings; stage 2 runs per fold on the remaining
// labeled contracts.
CvReport cross_validate(const TemporalGraph& g, const TrainConfig& config,
                        const CvOptions& options = {});

struct OpcodeImportance {
    std::string opcode;
    double score = 0.0;
    Label cls = Label::Normal;
    double tfidf_ponzi = 0.0;
    double tfidf_normal = 0.0;
    double idf = 0.0;
};

struct TfidfOptions {
    // ln((1 + N) / (1 + df)) + 1 instead of ln(N / df).
    bool smooth_idf = false;
    std::size_t top = 80;  // 0 keeps every opcode
};

// Importance of each opcode as max(TF-IDF in the Ponzi corpus, TF-IDF in the
// normal corpus), attributed to the larger side. Unlabeled accounts are
// ignored.
std::vector<OpcodeImportance> tfidf_opcode_importance(const std::vector<Account>& contracts,
                                                      const TfidfOptions& options = {});

struct Projection {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> variance{};  // variance along each component
    std::array<std::vector<double>, 2> components;
    bool degenerate = false;  // all points identical
};

// PCA onto the top two principal components by power iteration with
// deflation.
Projection project_2d(const std::vector<std::vector<double>>& points, std::uint64_t seed = 7);

void write_metrics_csv(const CvReport& report, const std::filesystem::path& path);
void write_importance_csv(const std::vector<OpcodeImportance>& rows, const std::filesystem::path& path);
void write_projection_csv(const std::vector<AccountId>& ids, const Projection& p,
                          const std::vector<std::optional<Label>>& labels,
                          const std::filesystem::path& path);
void write_projection_svg(const Projection& p, const std::vector<std::optional<Label>>& labels,
                          const std::filesystem::path& path);

}  // namespace dspsd
