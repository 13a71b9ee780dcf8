// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier pipeline criteria drive the same library entry points the
// CLI dispatches to.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ckdseq/pipeline.hpp"
#include "oracles.hpp"

using namespace ckdseq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void criterion(int id, const std::string& name,
               const std::function<std::string()>& body) {
  try {
    const std::string detail = body();
    std::printf("[PASS] criterion %d: %s (%s)\n", id, name.c_str(),
                detail.c_str());
  } catch (const std::exception& e) {
    ++g_failures;
    std::printf("[FAIL] criterion %d: %s - %s\n", id, name.c_str(), e.what());
  }
  std::fflush(stdout);
}

void expect(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  expect(static_cast<bool>(in), "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

BucketedSequence random_sequence(Index steps, Index dim, Rng& rng) {
  BucketedSequence seq;
  seq.features = Matrix(steps, dim);
  fill_uniform(seq.features, 1.0, rng);
  seq.raw_mask = MaskMatrix::Zero(steps, 1);
  seq.delta_t = Vector(steps);
  for (Index t = 0; t < steps; ++t)
    seq.delta_t[t] = 1.0 + static_cast<double>(rng.uniform_int(4));
  return seq;
}

// ---------------------------------------------------------------- criterion 1

std::string gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (ArchitectureKind arch :
       {ArchitectureKind::VanillaLstm, ArchitectureKind::AttentionLstm,
        ArchitectureKind::TimeAwareLstm}) {
    for (int classes : {2, 8}) {
      ModelConfig cfg;
      cfg.input_dim = 5;
      cfg.projection_dim = 4;
      cfg.hidden_dim = 6;
      cfg.head_hidden_dim = 6;
      cfg.num_classes = classes;
      cfg.architecture = arch;
      Rng rng(100 + static_cast<int>(arch) * 10 + classes);
      Model m = Model::uniform_init(cfg, rng);
      const BucketedSequence seq = random_sequence(5, 5, rng);
      const int label = classes == 2 ? 1 : 5;

      ModelGrads analytic;
      loss_and_grads(m, seq, label, analytic);
      const auto loss = [&]() {
        return cross_entropy(predict_head(m, encode(m, seq)), label);
      };
      const auto params = param_views(m);
      const auto grads = param_views(analytic);
      for (std::size_t i = 0; i < params.size(); ++i)
        for (Index j = 0; j < params[i].size; ++j) {
          const double fd =
              oracles::fd_derivative(loss, params[i].data + j, 1e-5);
          worst = std::max(worst, oracles::rel_err(fd, grads[i].data[j]));
        }
    }
  }
  const double elapsed = seconds_since(t0);
  expect(worst < 1e-4, "max relative error " + std::to_string(worst));
  expect(elapsed < 10.0, "runtime " + std::to_string(elapsed) + "s over 10s");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max rel err %.2e, %.1fs", worst, elapsed);
  return buf;
}

// ---------------------------------------------------------------- criterion 2

std::string reduction_identity() {
  Rng rng(200);
  for (int trial = 0; trial < 100; ++trial) {
    const LstmParams p = LstmParams::uniform_init(6, 4, rng);
    const DecayParams d = DecayParams::zeros(6);
    Vector x(4), h(6), c(6);
    fill_uniform(x, 2.0, rng);
    fill_uniform(h, 0.9, rng);
    fill_uniform(c, 2.0, rng);
    const CellState prev{h, c};
    const auto [vanilla, t1] = lstm_step(x, prev, p);
    const auto [aware, t2] = tlstm_step(x, prev, rng.uniform(0.0, 48.0), p, d);
    for (Index j = 0; j < 6; ++j) {
      expect(vanilla.h[j] == aware.h[j], "hidden state differs bitwise");
      expect(vanilla.c[j] == aware.c[j], "cell state differs bitwise");
    }
  }
  return "100 random inputs bitwise equal";
}

// ---------------------------------------------------------------- criterion 3

std::string decay_contract() {
  Rng rng(300);
  for (int trial = 0; trial < 10000; ++trial) {
    DecayParams d = DecayParams::zeros(3);
    fill_uniform(d.w_delta, 4.0, rng);
    fill_uniform(d.b_delta, 4.0, rng);
    const Vector gamma = time_decay(rng.uniform(0.0, 100.0), d);
    for (Index j = 0; j < 3; ++j)
      expect(gamma[j] > 0.0 && gamma[j] <= 1.0, "gamma outside (0,1]");
  }
  // delta_t = 0 with zero bias, and clamped pre-activations, give exactly 1.
  DecayParams d = DecayParams::zeros(2);
  d.w_delta << 3.0, 0.7;
  expect(time_decay(0.0, d)[0] == 1.0 && time_decay(0.0, d)[1] == 1.0,
         "gamma != 1 at delta_t = 0");
  d.b_delta << -10.0, -10.0;
  const Vector clamped = time_decay(2.0, d);
  expect(clamped[0] == 1.0 && clamped[1] == 1.0,
         "gamma != 1 with clamped pre-activation");
  return "10000 draws in (0,1], exact 1 at zero/clamped";
}

// ---------------------------------------------------------------- criterion 4

std::string attention_contract() {
  Rng rng(400);
  for (int trial = 0; trial < 200; ++trial) {
    const Index steps = 2 + static_cast<Index>(rng.uniform_int(8));
    std::vector<Vector> hs;
    Vector mean = Vector::Zero(5);
    for (Index t = 0; t < steps; ++t) {
      Vector h(5);
      fill_uniform(h, 2.0, rng);
      hs.push_back(h);
      mean += h;
    }
    mean /= static_cast<double>(steps);

    AttentionParams p = AttentionParams::uniform_init(5, rng);
    const AttentionResult r = attention_context(hs, p);
    expect(std::abs(r.weights.sum() - 1.0) < 1e-12, "weights do not sum to 1");

    const AttentionResult uniform = attention_context(hs, AttentionParams::zeros(5));
    expect((uniform.context - mean).lpNorm<Eigen::Infinity>() < 1e-12,
           "zero scores do not give the mean hidden state");
  }
  return "200 random sequences";
}

// ---------------------------------------------------------------- criterion 5

std::string metric_oracles() {
  Matrix hand(4, 2);
  hand << 0, 0, 0, 2, 10, 0, 10, 2;
  expect(davies_bouldin(hand, {0, 0, 1, 1}) == 0.2, "hand DBI != 0.2");

  const std::vector<double> mixed{0.9, 0.2, 0.8, 0.3};
  const std::vector<int> labels{1, 1, 0, 0};
  expect(auroc(mixed, labels) == 0.5, "hand AUROC != 0.5");

  Rng rng(500);
  int dbi_checked = 0, auroc_checked = 0;
  while (dbi_checked < 100) {
    const Index n = 8 + static_cast<Index>(rng.uniform_int(60));
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    Matrix points(n, 2);
    fill_uniform(points, 10.0, rng);
    std::vector<int> y;
    for (Index i = 0; i < n; ++i)
      y.push_back(static_cast<int>(rng.uniform_int(k)));
    bool all_present = true;
    for (int c = 0; c < k; ++c)
      all_present &= std::count(y.begin(), y.end(), c) > 0;
    if (!all_present) continue;
    expect(std::abs(davies_bouldin(points, y) -
                    oracles::brute_force_dbi(points, y)) < 1e-9,
           "DBI disagrees with brute force");
    ++dbi_checked;
  }
  while (auroc_checked < 100) {
    const std::size_t n = 5 + rng.uniform_int(195);
    std::vector<double> scores;
    std::vector<int> y;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back(std::round(rng.uniform() * 20.0) / 20.0);
      y.push_back(rng.bernoulli(0.35) ? 1 : 0);
      pos += y.back();
    }
    if (pos == 0 || pos == n) continue;
    expect(std::abs(auroc(scores, y) -
                    oracles::brute_force_auroc(scores, y)) < 1e-9,
           "AUROC disagrees with brute force");
    ++auroc_checked;
  }
  return "100 DBI + 100 AUROC instances within 1e-9, hand cases exact";
}

// ---------------------------------------------------------------- criterion 6

std::string tsne_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(600);
  Matrix x(300, 16);
  for (Index i = 0; i < 300; ++i)
    for (Index j = 0; j < 16; ++j)
      x(i, j) = (i < 150 ? 0.0 : 100.0) + rng.normal(0.0, 1.0);

  Rng brng(601);
  const Matrix p = tsne_conditional_p(x, 30.0, brng);
  for (Index i = 0; i < 300; ++i) {
    double h = 0.0;
    for (Index j = 0; j < 300; ++j)
      if (p(i, j) > 0.0) h -= p(i, j) * std::log(p(i, j));
    expect(std::abs(h - std::log(30.0)) < 1e-5,
           "conditional entropy off log(perplexity) at point " +
               std::to_string(i));
  }

  Rng prng(602);
  const Projection2D proj = tsne_project(x, 30.0, 1000, prng);
  for (std::size_t i = 251; i < proj.kl_history.size(); ++i)
    expect(proj.kl_history[i] <= proj.kl_history[i - 1] + 1e-12,
           "KL increased at iteration " + std::to_string(i));

  Eigen::RowVector2d mu_a = proj.points.topRows(150).colwise().mean();
  Eigen::RowVector2d mu_b = proj.points.bottomRows(150).colwise().mean();
  double intra = 0.0;
  for (Index i = 0; i < 300; ++i)
    intra += (proj.points.row(i) - (i < 150 ? mu_a : mu_b)).norm();
  intra /= 300.0;
  const double ratio = (mu_a - mu_b).norm() / intra;
  expect(ratio > 5.0, "separation ratio " + std::to_string(ratio));

  const double elapsed = seconds_since(t0);
  expect(elapsed < 30.0, "runtime " + std::to_string(elapsed) + "s over 30s");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "ratio %.1f, %.1fs", ratio, elapsed);
  return buf;
}

// ------------------------------------------------------- shared pipeline glue

void run_chain(const fs::path& work, const SynthSpec& spec,
               const std::vector<ArchitectureKind>& archs,
               const std::vector<Objective>& objectives, int folds,
               int max_epochs, int patience, Index hidden,
               int tsne_iterations) {
  fs::create_directories(work);
  write_synth_spec((work / "spec.cfg").string(), spec);
  cmd_generate({(work / "spec.cfg").string(), (work / "gen").string(), 7});

  PreprocessArgs pre;
  pre.admissions_path = (work / "gen" / "admissions.jsonl").string();
  pre.schema_path = (work / "gen" / "schema.json").string();
  pre.out_dir = (work / "pre").string();
  cmd_preprocess(pre);

  TrainArgs train;
  train.dataset_path = (work / "pre" / "dataset.bin").string();
  train.out_dir = (work / "runs").string();
  train.architectures = archs;
  train.objectives = objectives;
  train.folds = folds;
  train.seed = 7;
  train.jobs = 2;
  train.model_cfg.projection_dim = hidden / 2;
  train.model_cfg.hidden_dim = hidden;
  train.model_cfg.head_hidden_dim = hidden;
  train.train_cfg.learning_rate = 0.01;
  train.train_cfg.batch_size = 32;
  train.train_cfg.max_epochs = max_epochs;
  train.train_cfg.patience = patience;
  cmd_train(train);

  if (std::find(objectives.begin(), objectives.end(),
                Objective::StageEmbedding) != objectives.end()) {
    EvalIntrinsicArgs ei;
    ei.runs_dir = train.out_dir;
    ei.out_dir = (work / "eval").string();
    ei.architectures = archs;
    ei.folds = folds;
    ei.seed = 7;
    ei.iterations = tsne_iterations;
    cmd_eval_intrinsic(ei);
  }
  if (std::find(objectives.begin(), objectives.end(),
                Objective::MortalityEndToEnd) != objectives.end()) {
    EvalExtrinsicArgs ee;
    ee.runs_dir = train.out_dir;
    ee.dataset_path = train.dataset_path;
    ee.out_dir = (work / "eval").string();
    ee.architectures = archs;
    ee.folds = folds;
    cmd_eval_extrinsic(ee);
  }
}

// ---------------------------------------------------------------- criterion 7

std::string pipeline_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec smoke;
  smoke.cohort_size = 80;
  smoke.continuous_features = 2;
  smoke.occurrence_features = 1;
  smoke.static_features = 1;
  smoke.gap_base_hours = 2.0;
  smoke.gap_jitter = 1.0;
  smoke.mortality_base_rate = 0.4;

  const fs::path base = fs::temp_directory_path() / "ckdseq_acc7";
  fs::remove_all(base);
  std::vector<std::string> eval_files;
  for (const char* leg : {"a", "b"}) {
    const fs::path work = base / leg;
    run_chain(work, smoke, {ArchitectureKind::TimeAwareLstm},
              {Objective::StageEmbedding, Objective::MortalityEndToEnd}, 3, 2,
              2, 4, 300);
    cmd_embed({(work / "runs" / "tlstm" / "fold0" / "stage" / "model.ckpt")
                   .string(),
               (work / "pre" / "dataset.bin").string(),
               (work / "embed").string()});
    cmd_report({(work / "eval").string(), (work / "report.txt").string()});
  }

  for (const char* file :
       {"eval/intrinsic.json", "eval/intrinsic.txt", "eval/extrinsic.json",
        "eval/extrinsic.txt", "eval/tsne_tlstm_fold0.tsv",
        "embed/embeddings.tsv", "report.txt"}) {
    expect(slurp(base / "a" / file) == slurp(base / "b" / file),
           std::string(file) + " differs between identical runs");
  }
  const double elapsed = seconds_since(t0);
  expect(elapsed < 300.0, "runtime " + std::to_string(elapsed) + "s over 5min");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "7 report files byte-identical, %.1fs",
                elapsed);
  return buf;
}

// ------------------------------------------------------------ criteria 8 + 9

fs::path g_sep_work;  // separable cohort artifacts shared by 8a and 9

std::string learnability() {
  // 8a: value signal, zero noise, disjoint per-stage levels.
  SynthSpec separable;
  separable.cohort_size = 500;
  separable.noise_sd = 0.0;
  separable.level_base = 0.2;
  separable.level_step = 0.3;
  separable.occurrence_features = 0;
  separable.gap_base_hours = 2.0;
  separable.gap_jitter = 1.0;

  g_sep_work = fs::temp_directory_path() / "ckdseq_acc8a";
  fs::remove_all(g_sep_work);
  run_chain(g_sep_work, separable,
            {ArchitectureKind::VanillaLstm, ArchitectureKind::AttentionLstm,
             ArchitectureKind::TimeAwareLstm},
            {Objective::StageEmbedding}, 5, 30, 5, 16, 600);

  json intrinsic;
  std::ifstream((g_sep_work / "eval" / "intrinsic.json").string()) >> intrinsic;
  std::string summary;
  for (const json& arch : intrinsic) {
    const double acc = arch["stage_accuracy"]["mean"].get<double>();
    summary += arch["architecture"].get<std::string>() + "=" +
               std::to_string(acc).substr(0, 5) + " ";
    expect(acc >= 0.9, arch["architecture"].get<std::string>() +
                           " intrinsic accuracy " + std::to_string(acc) +
                           " below 0.9");
  }

  // 8b: the stage signal lives only in the sampling gaps.
  SynthSpec gaps;
  gaps.cohort_size = 500;
  gaps.noise_sd = 0.0;
  gaps.level_step = 0.0;
  gaps.occurrence_features = 0;
  gaps.gap_base_hours = 1.0;
  gaps.gap_step_hours = 1.0;
  gaps.gap_jitter = 0.25;

  const fs::path work = fs::temp_directory_path() / "ckdseq_acc8b";
  fs::remove_all(work);
  run_chain(work, gaps,
            {ArchitectureKind::VanillaLstm, ArchitectureKind::TimeAwareLstm},
            {Objective::StageEmbedding}, 5, 60, 8, 16, 600);

  json gap_report;
  std::ifstream((work / "eval" / "intrinsic.json").string()) >> gap_report;
  double lstm_acc = 0.0, tlstm_acc = 0.0;
  for (const json& arch : gap_report) {
    if (arch["architecture"] == "lstm")
      lstm_acc = arch["stage_accuracy"]["mean"].get<double>();
    if (arch["architecture"] == "tlstm")
      tlstm_acc = arch["stage_accuracy"]["mean"].get<double>();
  }
  expect(tlstm_acc - lstm_acc >= 0.05,
         "gap cohort: tlstm " + std::to_string(tlstm_acc) + " vs lstm " +
             std::to_string(lstm_acc) + " margin below 0.05");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "separable %s; gaps tlstm %.3f vs lstm %.3f",
                summary.c_str(), tlstm_acc, lstm_acc);
  return buf;
}

std::string configuration_comparison() {
  expect(!g_sep_work.empty() && fs::exists(g_sep_work / "pre" / "dataset.bin"),
         "separable cohort missing (criterion 8 must run first)");

  // Add the end-to-end mortality runs next to the existing embedding runs.
  TrainArgs train;
  train.dataset_path = (g_sep_work / "pre" / "dataset.bin").string();
  train.out_dir = (g_sep_work / "runs").string();
  train.architectures = {ArchitectureKind::VanillaLstm,
                         ArchitectureKind::AttentionLstm,
                         ArchitectureKind::TimeAwareLstm};
  train.objectives = {Objective::MortalityEndToEnd};
  train.folds = 5;
  train.seed = 7;
  train.jobs = 2;
  train.model_cfg.projection_dim = 8;
  train.model_cfg.hidden_dim = 16;
  train.model_cfg.head_hidden_dim = 16;
  train.train_cfg.learning_rate = 0.01;
  train.train_cfg.batch_size = 32;
  train.train_cfg.max_epochs = 25;
  train.train_cfg.patience = 4;
  cmd_train(train);

  EvalExtrinsicArgs ee;
  ee.runs_dir = train.out_dir;
  ee.dataset_path = train.dataset_path;
  ee.out_dir = (g_sep_work / "eval").string();
  ee.architectures = train.architectures;
  ee.folds = 5;
  cmd_eval_extrinsic(ee);

  json report;
  std::ifstream((g_sep_work / "eval" / "extrinsic.json").string()) >> report;
  expect(report.size() == 3, "extrinsic report missing architectures");
  double direct_acc = 0.0, downstream_acc = 0.0;
  for (const json& arch : report) {
    for (const char* config : {"direct", "downstream"}) {
      expect(arch.contains(config),
             std::string("missing ") + config + " block");
      for (const char* metric : {"accuracy", "auroc", "auprc"}) {
        expect(arch[config].contains(metric),
               std::string("missing ") + config + "/" + metric);
        expect(arch[config][metric]["per_fold"].size() == 5,
               std::string(config) + "/" + metric + " missing fold values");
      }
    }
    expect(arch["folds"].size() == 5, "per-fold rows missing");
    direct_acc += arch["direct"]["accuracy"]["mean"].get<double>() / 3.0;
    downstream_acc += arch["downstream"]["accuracy"]["mean"].get<double>() / 3.0;
  }
  // Directional comparison is reported, not asserted.
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "both triples present; mean acc direct %.3f vs downstream "
                "%.3f (reported)",
                direct_acc, downstream_acc);
  return buf;
}

// --------------------------------------------------------------- criterion 10

std::string data_pipeline() {
  CohortSchema schema;
  schema.dynamic.push_back({"c0", FeatureKind::Continuous, 0.5});
  schema.dynamic.push_back({"c1", FeatureKind::Continuous, -1.0});
  schema.dynamic.push_back({"e0", FeatureKind::Occurrence, 0.0});

  Rng rng(1000);
  const int window = 24;
  for (int trial = 0; trial < 100000; ++trial) {
    AdmissionRecord rec;
    rec.admission_id = "R" + std::to_string(trial);
    const int n_events = static_cast<int>(rng.uniform_int(12));
    for (int e = 0; e < n_events; ++e) {
      TimedEvent ev;
      const std::uint64_t which = rng.uniform_int(3);
      ev.feature_id = which == 0 ? "c0" : which == 1 ? "c1" : "e0";
      ev.offset_hours = rng.uniform(0.0, window * 1.2);  // some past window
      ev.value = rng.uniform(-5.0, 5.0);
      rec.events.push_back(std::move(ev));
    }
    const RawBuckets buckets = bucketize(rec, schema, window, 1);
    const Matrix imputed = impute(buckets, schema);
    expect(imputed.allFinite(),
           "missing value after imputation in trial " + std::to_string(trial));
  }

  MaskMatrix mask = MaskMatrix::Zero(4, 1);
  mask(0, 0) = 1;
  const Vector dt = compute_delta_t(mask);
  expect(dt[0] == 1.0 && dt[1] == 1.0 && dt[2] == 2.0 && dt[3] == 3.0,
         "delta_t hand case != [1,1,2,3]");

  const std::pair<const char*, int> table[] = {
      {"N18.1", 0}, {"N18.2", 1}, {"N18.3", 2}, {"N18.4", 3}, {"N18.5", 4},
      {"N18.6", 5}, {"N18.8", 6}, {"N18.9", 7}, {"585.1", 0}, {"585.2", 1},
      {"585.3", 2}, {"585.4", 3}, {"585.5", 4}, {"585.6", 5}, {"585.9", 7},
  };
  for (const auto& [code, stage] : table) {
    const auto mapped = map_icd_to_stage(code);
    expect(mapped.has_value() && *mapped == stage,
           std::string("wrong mapping for ") + code);
  }
  expect(!map_icd_to_stage("585.8").has_value(), "585.8 must stay unmapped");
  return "100000 imputed admissions, delta_t and all 15 ICD codes exact";
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion(1, "gradient correctness", gradient_correctness);
  criterion(2, "reduction identity", reduction_identity);
  criterion(3, "decay contract", decay_contract);
  criterion(4, "attention contract", attention_contract);
  criterion(5, "metric oracles", metric_oracles);
  criterion(6, "t-SNE properties", tsne_properties);
  criterion(7, "pipeline determinism", pipeline_determinism);
  criterion(8, "learnability", learnability);
  criterion(9, "configuration comparison", configuration_comparison);
  criterion(10, "data pipeline", data_pipeline);
  std::printf("%d/10 criteria passed in %.0fs\n", 10 - g_failures,
              seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
