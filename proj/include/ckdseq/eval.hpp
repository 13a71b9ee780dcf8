#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ckdseq/numerics.hpp"
#include "ckdseq/training.hpp"

namespace ckdseq {

struct Projection2D {
  Matrix points;                   // n x 2
  std::vector<double> kl_history;  // one KL value per iteration
};

struct TsneOptions {
  double learning_rate = 200.0;
  int exaggeration_iters = 250;
  double exaggeration = 12.0;
  double momentum_early = 0.5;
  double momentum_late = 0.8;
};

// Exact O(n^2) t-SNE. Per-point Gaussian bandwidths are bisected until the
// conditional entropy matches log(perplexity); after the exaggeration phase
// the KL divergence is kept nonincreasing by step halving.
Projection2D tsne_project(const Matrix& embeddings, double perplexity,
                          int iterations, Rng& rng,
                          const TsneOptions& opts = {},
                          std::ostream* warn = nullptr);

// Exposed for testing: conditional transition matrix (rows sum to 1,
// zero diagonal) after the bandwidth search.
Matrix tsne_conditional_p(const Matrix& embeddings, double perplexity,
                          Rng& rng, std::ostream* warn = nullptr);

// Mean over clusters of the worst (s_i + s_j) / d(mu_i, mu_j) ratio, with
// s_i the mean member-to-centroid distance. +inf when two distinct clusters
// share a centroid.
double davies_bouldin(const Matrix& points, const std::vector<int>& labels,
                      std::ostream* warn = nullptr);

struct LogRegModel {
  Matrix weights;  // classes x dim, or 1 x dim for binary
  Vector bias;
  int num_classes = 2;
  std::string trained_on;
};

struct LogRegOptions {
  int max_iters = 20000;
  double tol = 1e-6;  // gradient-norm stopping threshold
  std::string trained_on;
};

// Binary or multinomial logistic regression, plain gradient descent with an
// adaptive step on the l2-regularized negative log-likelihood (bias
// unregularized).
LogRegModel fit_logreg(const Matrix& x, const std::vector<int>& y,
                       int num_classes, double l2 = 1e-3,
                       const LogRegOptions& opts = {});

Matrix logreg_probs(const LogRegModel& m, const Matrix& x);  // n x classes
std::vector<int> logreg_predict(const LogRegModel& m, const Matrix& x);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Mann-Whitney probability; ties count one half.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision: stepwise integral of precision over recall.
double auprc(std::span<const double> scores, std::span<const int> labels);

// Binary decisions at the fixed 0.5 threshold (score >= 0.5 -> class 1).
std::vector<int> threshold_labels(std::span<const double> scores);

struct MetricStats {
  std::vector<double> per_fold;
  double mean = 0.0;
  double sd = 0.0;

  static MetricStats from(std::vector<double> values);
};

struct IntrinsicFoldResult {
  int fold;
  double dbi;            // on the 2D t-SNE projection
  double dbi_raw;        // supplementary, on the raw embeddings
  double stage_accuracy;
};

struct IntrinsicReport {
  std::string architecture;
  std::vector<IntrinsicFoldResult> folds;
  MetricStats dbi, dbi_raw, stage_accuracy;
};

struct MetricTriple {
  double accuracy = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
};

struct ExtrinsicFoldResult {
  int fold;
  MetricTriple direct;      // end-to-end model probabilities
  MetricTriple downstream;  // logistic regression on embeddings
};

struct ExtrinsicReport {
  std::string architecture;
  std::vector<ExtrinsicFoldResult> folds;
  MetricStats direct_accuracy, direct_auroc, direct_auprc;
  MetricStats downstream_accuracy, downstream_auroc, downstream_auprc;
};

struct FoldEmbeddings {
  std::vector<EmbeddingRecord> train;
  std::vector<EmbeddingRecord> test;
};

struct FoldPredictions {
  std::vector<int> labels;
  std::vector<double> scores;
};

// Per fold: t-SNE on the test-set embeddings, DBI against stage labels, and
// stage accuracy of a logistic regression trained on train-fold embeddings.
IntrinsicReport run_intrinsic(const std::string& architecture,
                              const std::vector<FoldEmbeddings>& folds,
                              double perplexity, int iterations,
                              const Rng& rng, double logreg_l2 = 1e-3,
                              std::vector<Projection2D>* projections = nullptr);

// DownstreamLR: binary logistic regression on train embeddings scored on
// test embeddings. DirectPrediction: the end-to-end model's test
// probabilities scored as-is.
ExtrinsicReport run_extrinsic(const std::string& architecture,
                              const std::vector<FoldEmbeddings>& folds,
                              const std::vector<FoldPredictions>& direct,
                              double logreg_l2 = 1e-3);

// Context line for rendered reports: desk-scale results are not comparable
// to the restricted-cohort reference numbers.
std::string reference_context_line();

std::string render_intrinsic_table(const std::vector<IntrinsicReport>& reports);
std::string render_extrinsic_table(const std::vector<ExtrinsicReport>& reports);

std::string intrinsic_report_json(const std::vector<IntrinsicReport>& reports);
std::string extrinsic_report_json(const std::vector<ExtrinsicReport>& reports);

}  // namespace ckdseq
