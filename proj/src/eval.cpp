#include "ckdseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ckdseq {

using nlohmann::json;

double davies_bouldin(const Matrix& points, const std::vector<int>& labels,
                      std::ostream* warn) {
  const Index n = points.rows();
  if (static_cast<std::size_t>(n) != labels.size())
    throw ArgumentError("davies_bouldin: points/labels length mismatch");

  std::map<int, std::vector<Index>> clusters;
  for (Index i = 0; i < n; ++i) clusters[labels[static_cast<std::size_t>(i)]].push_back(i);
  if (clusters.size() < 2)
    throw ArgumentError("davies_bouldin: need at least two clusters");

  const std::size_t k = clusters.size();
  Matrix centroids(static_cast<Index>(k), points.cols());
  Vector scatter(static_cast<Index>(k));
  Index c = 0;
  for (const auto& [label, members] : clusters) {
    Vector mu = Vector::Zero(points.cols());
    for (Index i : members) mu += points.row(i).transpose();
    mu /= static_cast<double>(members.size());
    centroids.row(c) = mu.transpose();
    double s = 0.0;
    for (Index i : members) s += (points.row(i).transpose() - mu).norm();
    scatter[c] = s / static_cast<double>(members.size());
    ++c;
  }

  double total = 0.0;
  for (Index i = 0; i < static_cast<Index>(k); ++i) {
    double worst = 0.0;
    for (Index j = 0; j < static_cast<Index>(k); ++j) {
      if (i == j) continue;
      const double dist = (centroids.row(i) - centroids.row(j)).norm();
      if (dist == 0.0) {
        if (warn != nullptr)
          *warn << "davies_bouldin: coincident centroids of distinct "
                   "clusters\n";
        return std::numeric_limits<double>::infinity();
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / dist);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

namespace {

struct LogRegObjective {
  const Matrix& x;
  const std::vector<int>& y;
  int classes;
  double l2;

  // Returns the regularized NLL; fills gradients when given.
  double eval(const Matrix& w, const Vector& b, Matrix* gw, Vector* gb) const {
    const Index n = x.rows();
    double nll = 0.0;
    if (gw != nullptr) {
      gw->setZero();
      gb->setZero();
    }
    for (Index i = 0; i < n; ++i) {
      const Vector logits = w * x.row(i).transpose() + b;
      const int label = y[static_cast<std::size_t>(i)];
      if (classes == 2) {
        const double p = sigmoid(logits[0]);
        const double target = static_cast<double>(label);
        nll -= target * std::log(std::max(p, 1e-300)) +
               (1.0 - target) * std::log(std::max(1.0 - p, 1e-300));
        if (gw != nullptr) {
          const double d = p - target;
          gw->row(0) += d * x.row(i);
          (*gb)[0] += d;
        }
      } else {
        const Vector probs = softmax(logits);
        nll -= std::log(std::max(probs[label], 1e-300));
        if (gw != nullptr) {
          Vector d = probs;
          d[label] -= 1.0;
          *gw += d * x.row(i);
          *gb += d;
        }
      }
    }
    nll /= static_cast<double>(n);
    nll += 0.5 * l2 * w.squaredNorm();
    if (gw != nullptr) {
      *gw /= static_cast<double>(n);
      *gb /= static_cast<double>(n);
      *gw += l2 * w;
    }
    return nll;
  }
};

}  // namespace

LogRegModel fit_logreg(const Matrix& x, const std::vector<int>& y,
                       int num_classes, double l2, const LogRegOptions& opts) {
  const Index n = x.rows();
  if (n < 2) throw ArgumentError("fit_logreg: need at least two samples");
  if (static_cast<std::size_t>(n) != y.size())
    throw ArgumentError("fit_logreg: sample/label length mismatch");
  if (num_classes < 2) throw ArgumentError("fit_logreg: need >= 2 classes");
  bool multiple = false;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] != y[0]) {
      multiple = true;
      break;
    }
  if (!multiple)
    throw ArgumentError("fit_logreg: single class present, degenerate fit");
  for (int label : y)
    if (label < 0 || label >= num_classes)
      throw ArgumentError("fit_logreg: label out of range");

  const Index rows = num_classes == 2 ? 1 : num_classes;
  Matrix w = Matrix::Zero(rows, x.cols());
  Vector b = Vector::Zero(rows);
  const LogRegObjective objective{x, y, num_classes, l2};

  Matrix gw(rows, x.cols());
  Vector gb(rows);
  double obj = objective.eval(w, b, &gw, &gb);
  double lr = 1.0;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double gnorm =
        std::sqrt(gw.squaredNorm() + gb.squaredNorm());
    if (gnorm < opts.tol) break;

    bool accepted = false;
    while (lr > 1e-16) {
      const Matrix w_c = w - lr * gw;
      const Vector b_c = b - lr * gb;
      const double obj_c = objective.eval(w_c, b_c, nullptr, nullptr);
      if (obj_c <= obj) {
        w = w_c;
        b = b_c;
        obj = obj_c;
        lr = std::min(lr * 1.1, 1e4);
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) break;  // step underflow: as converged as GD gets
    obj = objective.eval(w, b, &gw, &gb);
  }

  LogRegModel model;
  model.weights = std::move(w);
  model.bias = std::move(b);
  model.num_classes = num_classes;
  model.trained_on = opts.trained_on;
  return model;
}

Matrix logreg_probs(const LogRegModel& m, const Matrix& x) {
  if (x.cols() != m.weights.cols())
    throw ShapeError("logreg_probs: feature dim mismatch");
  Matrix probs(x.rows(), m.num_classes);
  for (Index i = 0; i < x.rows(); ++i) {
    const Vector logits = m.weights * x.row(i).transpose() + m.bias;
    if (m.num_classes == 2) {
      const double p = sigmoid(logits[0]);
      probs(i, 0) = 1.0 - p;
      probs(i, 1) = p;
    } else {
      probs.row(i) = softmax(logits).transpose();
    }
  }
  return probs;
}

std::vector<int> logreg_predict(const LogRegModel& m, const Matrix& x) {
  const Matrix probs = logreg_probs(m, x);
  std::vector<int> labels(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    if (m.num_classes == 2) {
      labels[static_cast<std::size_t>(i)] = probs(i, 1) >= 0.5 ? 1 : 0;
    } else {
      Index best;
      probs.row(i).maxCoeff(&best);
      labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return labels;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw ArgumentError("accuracy: length mismatch or empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

namespace {

void check_binary_inputs(std::span<const double> scores,
                         std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size() || scores.empty())
    throw ArgumentError(std::string(what) + ": length mismatch or empty input");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l == 1)
      pos = true;
    else if (l == 0)
      neg = true;
    else
      throw ArgumentError(std::string(what) + ": labels must be 0/1");
  }
  if (!pos || !neg)
    throw ArgumentError(std::string(what) +
                        ": undefined with a single class present");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_binary_inputs(scores, labels, "auroc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over ties, then the Mann-Whitney identity.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double pos_ranks = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      pos_ranks += rank[k];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  return (pos_ranks -
          0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_binary_inputs(scores, labels, "auprc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l == 1;

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;  // all items tied at this score enter together
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

std::vector<int> threshold_labels(std::span<const double> scores) {
  std::vector<int> labels(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    labels[i] = scores[i] >= 0.5 ? 1 : 0;
  return labels;
}

MetricStats MetricStats::from(std::vector<double> values) {
  MetricStats s;
  s.per_fold = std::move(values);
  s.mean = mean_of(s.per_fold);
  s.sd = sd_of(s.per_fold);
  return s;
}

namespace {

Matrix embedding_matrix(const std::vector<EmbeddingRecord>& records) {
  if (records.empty()) throw ArgumentError("embedding set is empty");
  const Index dim = records.front().values.size();
  Matrix x(static_cast<Index>(records.size()), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].values.size() != dim)
      throw ContractError("embedding set has inconsistent dimensions");
    x.row(static_cast<Index>(i)) = records[i].values.transpose();
  }
  return x;
}

}  // namespace

IntrinsicReport run_intrinsic(const std::string& architecture,
                              const std::vector<FoldEmbeddings>& folds,
                              double perplexity, int iterations,
                              const Rng& rng, double logreg_l2,
                              std::vector<Projection2D>* projections) {
  if (folds.empty()) throw IncompleteInputError("run_intrinsic: no folds");
  IntrinsicReport report;
  report.architecture = architecture;

  std::vector<double> dbis, dbis_raw, accs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const FoldEmbeddings& fold = folds[f];
    std::vector<EmbeddingRecord> train, test;
    for (const EmbeddingRecord& r : fold.train)
      if (r.stage_class >= 0) train.push_back(r);
    for (const EmbeddingRecord& r : fold.test)
      if (r.stage_class >= 0) test.push_back(r);
    if (train.empty() || test.empty())
      throw IncompleteInputError("run_intrinsic: fold " + std::to_string(f) +
                                 " has no stage-labeled embeddings");

    const Matrix x_train = embedding_matrix(train);
    const Matrix x_test = embedding_matrix(test);
    std::vector<int> y_train, y_test;
    for (const EmbeddingRecord& r : train) y_train.push_back(r.stage_class);
    for (const EmbeddingRecord& r : test) y_test.push_back(r.stage_class);

    Rng fold_rng = rng.derive("tsne/" + architecture + "/fold" +
                              std::to_string(f));
    const double perp = std::min(
        perplexity, static_cast<double>(x_test.rows()) / 3.0);
    Projection2D proj =
        tsne_project(x_test, perp, iterations, fold_rng);
    const double dbi = davies_bouldin(proj.points, y_test);
    const double dbi_raw = davies_bouldin(x_test, y_test);

    LogRegOptions lropts;
    lropts.trained_on = architecture + "/fold" + std::to_string(f) + "/stage";
    const LogRegModel lr = fit_logreg(x_train, y_train, 8, logreg_l2, lropts);
    const std::vector<int> predicted = logreg_predict(lr, x_test);
    const double acc = accuracy(predicted, y_test);

    report.folds.push_back({static_cast<int>(f), dbi, dbi_raw, acc});
    dbis.push_back(dbi);
    dbis_raw.push_back(dbi_raw);
    accs.push_back(acc);
    if (projections != nullptr) projections->push_back(std::move(proj));
  }
  report.dbi = MetricStats::from(std::move(dbis));
  report.dbi_raw = MetricStats::from(std::move(dbis_raw));
  report.stage_accuracy = MetricStats::from(std::move(accs));
  return report;
}

namespace {

MetricTriple score_binary(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
  MetricTriple t;
  const std::vector<int> predicted = threshold_labels(scores);
  t.accuracy = accuracy(predicted, labels);
  t.auroc = auroc(scores, labels);
  t.auprc = auprc(scores, labels);
  return t;
}

}  // namespace

ExtrinsicReport run_extrinsic(const std::string& architecture,
                              const std::vector<FoldEmbeddings>& folds,
                              const std::vector<FoldPredictions>& direct,
                              double logreg_l2) {
  if (folds.empty()) throw IncompleteInputError("run_extrinsic: no folds");
  if (folds.size() != direct.size())
    throw IncompleteInputError(
        "run_extrinsic: embedding folds and direct-prediction folds differ "
        "in count");

  ExtrinsicReport report;
  report.architecture = architecture;
  std::vector<double> d_acc, d_roc, d_prc, l_acc, l_roc, l_prc;

  for (std::size_t f = 0; f < folds.size(); ++f) {
    const FoldPredictions& dp = direct[f];
    if (dp.scores.size() != dp.labels.size() || dp.scores.empty())
      throw IncompleteInputError("run_extrinsic: bad direct predictions for "
                                 "fold " + std::to_string(f));
    const MetricTriple direct_metrics = score_binary(dp.scores, dp.labels);

    const Matrix x_train = embedding_matrix(folds[f].train);
    const Matrix x_test = embedding_matrix(folds[f].test);
    std::vector<int> y_train, y_test;
    for (const EmbeddingRecord& r : folds[f].train) y_train.push_back(r.mortality);
    for (const EmbeddingRecord& r : folds[f].test) y_test.push_back(r.mortality);

    LogRegOptions lropts;
    lropts.trained_on =
        architecture + "/fold" + std::to_string(f) + "/mortality";
    const LogRegModel lr = fit_logreg(x_train, y_train, 2, logreg_l2, lropts);
    const Matrix probs = logreg_probs(lr, x_test);
    std::vector<double> scores(static_cast<std::size_t>(probs.rows()));
    for (Index i = 0; i < probs.rows(); ++i)
      scores[static_cast<std::size_t>(i)] = probs(i, 1);
    const MetricTriple downstream_metrics = score_binary(scores, y_test);

    report.folds.push_back(
        {static_cast<int>(f), direct_metrics, downstream_metrics});
    d_acc.push_back(direct_metrics.accuracy);
    d_roc.push_back(direct_metrics.auroc);
    d_prc.push_back(direct_metrics.auprc);
    l_acc.push_back(downstream_metrics.accuracy);
    l_roc.push_back(downstream_metrics.auroc);
    l_prc.push_back(downstream_metrics.auprc);
  }

  report.direct_accuracy = MetricStats::from(std::move(d_acc));
  report.direct_auroc = MetricStats::from(std::move(d_roc));
  report.direct_auprc = MetricStats::from(std::move(d_prc));
  report.downstream_accuracy = MetricStats::from(std::move(l_acc));
  report.downstream_auroc = MetricStats::from(std::move(l_roc));
  report.downstream_auprc = MetricStats::from(std::move(l_prc));
  return report;
}

std::string reference_context_line() {
  return "Reference context (restricted MIMIC-IV CKD cohort, not reproduced "
         "at this scale): T-LSTM DBI 9.91 / stage accuracy 0.74 vs LSTM "
         "15.85 / 0.63 and attention 20.72 / 0.67; mortality accuracy "
         "improves 0.72-0.75 (direct) to 0.82-0.83 (downstream LR).";
}

namespace {

std::string fmt(double v, int precision = 4) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string render_intrinsic_table(
    const std::vector<IntrinsicReport>& reports) {
  std::ostringstream out;
  out << "Intrinsic evaluation: stage clustering (DBI on 2D t-SNE) and "
         "stage classification accuracy\n\n";
  out << "Fold";
  for (const IntrinsicReport& r : reports)
    out << " | " << r.architecture << " DBI | " << r.architecture << " Acc";
  out << "\n";
  const std::size_t folds = reports.empty() ? 0 : reports.front().folds.size();
  for (std::size_t f = 0; f < folds; ++f) {
    out << f;
    for (const IntrinsicReport& r : reports)
      out << " | " << fmt(r.folds[f].dbi) << " | "
          << fmt(r.folds[f].stage_accuracy);
    out << "\n";
  }
  out << "Mean±SD";
  for (const IntrinsicReport& r : reports)
    out << " | " << fmt(r.dbi.mean) << "±" << fmt(r.dbi.sd) << " | "
        << fmt(r.stage_accuracy.mean) << "±" << fmt(r.stage_accuracy.sd);
  out << "\n\n" << reference_context_line() << "\n";
  return out.str();
}

std::string render_extrinsic_table(
    const std::vector<ExtrinsicReport>& reports) {
  std::ostringstream out;
  out << "Extrinsic evaluation: in-ICU mortality prediction (5-fold "
         "mean±SD)\n\n";
  out << "Architecture | Direct AUROC | Direct Acc | Direct AUPRC | "
         "Downstream AUROC | Downstream Acc | Downstream AUPRC\n";
  for (const ExtrinsicReport& r : reports) {
    out << r.architecture << " | " << fmt(r.direct_auroc.mean) << "±"
        << fmt(r.direct_auroc.sd) << " | " << fmt(r.direct_accuracy.mean)
        << "±" << fmt(r.direct_accuracy.sd) << " | "
        << fmt(r.direct_auprc.mean) << "±" << fmt(r.direct_auprc.sd) << " | "
        << fmt(r.downstream_auroc.mean) << "±" << fmt(r.downstream_auroc.sd)
        << " | " << fmt(r.downstream_accuracy.mean) << "±"
        << fmt(r.downstream_accuracy.sd) << " | "
        << fmt(r.downstream_auprc.mean) << "±" << fmt(r.downstream_auprc.sd)
        << "\n";
  }
  out << "\n" << reference_context_line() << "\n";
  return out.str();
}

namespace {

json stats_json(const MetricStats& s) {
  return json{{"per_fold", s.per_fold}, {"mean", s.mean}, {"sd", s.sd}};
}

}  // namespace

std::string intrinsic_report_json(
    const std::vector<IntrinsicReport>& reports) {
  json out = json::array();
  for (const IntrinsicReport& r : reports) {
    json folds = json::array();
    for (const IntrinsicFoldResult& f : r.folds)
      folds.push_back(json{{"fold", f.fold},
                           {"dbi", f.dbi},
                           {"dbi_raw", f.dbi_raw},
                           {"stage_accuracy", f.stage_accuracy}});
    out.push_back(json{{"architecture", r.architecture},
                       {"folds", folds},
                       {"dbi", stats_json(r.dbi)},
                       {"dbi_raw", stats_json(r.dbi_raw)},
                       {"stage_accuracy", stats_json(r.stage_accuracy)},
                       {"reference_context", reference_context_line()}});
  }
  return out.dump(2);
}

std::string extrinsic_report_json(
    const std::vector<ExtrinsicReport>& reports) {
  json out = json::array();
  for (const ExtrinsicReport& r : reports) {
    json folds = json::array();
    for (const ExtrinsicFoldResult& f : r.folds)
      folds.push_back(json{
          {"fold", f.fold},
          {"direct",
           json{{"accuracy", f.direct.accuracy},
                {"auroc", f.direct.auroc},
                {"auprc", f.direct.auprc}}},
          {"downstream",
           json{{"accuracy", f.downstream.accuracy},
                {"auroc", f.downstream.auroc},
                {"auprc", f.downstream.auprc}}}});
    out.push_back(json{
        {"architecture", r.architecture},
        {"folds", folds},
        {"direct",
         json{{"accuracy", stats_json(r.direct_accuracy)},
              {"auroc", stats_json(r.direct_auroc)},
              {"auprc", stats_json(r.direct_auprc)}}},
        {"downstream",
         json{{"accuracy", stats_json(r.downstream_accuracy)},
              {"auroc", stats_json(r.downstream_auroc)},
              {"auprc", stats_json(r.downstream_auprc)}}},
        {"reference_context", reference_context_line()}});
  }
  return out.dump(2);
}

}  // namespace ckdseq
