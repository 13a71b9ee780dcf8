#include "ckdseq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace ckdseq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  KeyValueConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("config: expected key = value at line " +
                          std::to_string(lineno) + " of " + path);
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& dflt) const {
  const auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double dflt) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    std::size_t used = 0;
    const double d = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key);
  }
}

int KeyValueConfig::get_int(const std::string& key, int dflt) const {
  return static_cast<int>(get_double(key, dflt));
}

bool KeyValueConfig::get_bool(const std::string& key, bool dflt) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config: bad boolean value for " + key);
}

void KeyValueConfig::validate_keys(
    const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown key '" + key + "'");
}

std::string KeyValueConfig::canonical() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
  return out.str();
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  json j{{"command", m.command},
         {"config_hash", m.config_hash},
         {"seed", m.seed},
         {"inputs", m.inputs},
         {"outputs", m.outputs},
         {"tool_version", m.tool_version},
         {"wall_clock_seconds", m.wall_clock_seconds}};
  const fs::path tmp = dir / "manifest.json.tmp";
  const fs::path final_path = dir / "manifest.json";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ContractError("manifest: cannot open " + tmp.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, final_path);
}

bool has_manifest(const fs::path& dir) {
  return fs::exists(dir / "manifest.json");
}

void write_embeddings_file(const std::string& path,
                           const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContractError("embeddings: cannot open " + path);
  const Index dim = records.empty() ? 0 : records.front().values.size();
  out << "admission_id\tstage_class\tmortality\tembedding[" << dim << "]\n";
  for (const EmbeddingRecord& r : records) {
    if (r.values.size() != dim)
      throw ContractError("embeddings: inconsistent dimension for " +
                          r.admission_id);
    out << r.admission_id << "\t" << r.stage_class << "\t" << r.mortality;
    for (Index j = 0; j < dim; ++j) out << "\t" << fmt_full(r.values[j]);
    out << "\n";
  }
}

std::vector<EmbeddingRecord> read_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IncompleteInputError("embeddings: cannot open " + path);
  std::string header;
  if (!std::getline(in, header))
    throw ContractError("embeddings: empty file " + path);
  const auto open = header.rfind("embedding[");
  const auto close = header.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ContractError("embeddings: malformed header in " + path);
  const Index dim = std::stoll(header.substr(open + 10, close - open - 10));

  std::vector<EmbeddingRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> parts = split_line(line, '\t');
    if (static_cast<Index>(parts.size()) != 3 + dim)
      throw ContractError("embeddings: bad row in " + path);
    EmbeddingRecord r;
    r.admission_id = parts[0];
    r.stage_class = std::stoi(parts[1]);
    r.mortality = std::stoi(parts[2]);
    r.values.resize(dim);
    for (Index j = 0; j < dim; ++j)
      r.values[j] = std::stod(parts[static_cast<std::size_t>(3 + j)]);
    records.push_back(std::move(r));
  }
  return records;
}

void write_predictions_file(const std::string& path,
                            const std::vector<std::string>& admission_ids,
                            const std::vector<int>& labels,
                            const std::vector<double>& scores) {
  if (admission_ids.size() != labels.size() || labels.size() != scores.size())
    throw ContractError("predictions: length mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContractError("predictions: cannot open " + path);
  out << "admission_id\tmortality\tscore\n";
  for (std::size_t i = 0; i < admission_ids.size(); ++i)
    out << admission_ids[i] << "\t" << labels[i] << "\t"
        << fmt_full(scores[i]) << "\n";
}

FoldPredictions read_predictions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IncompleteInputError("predictions: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  FoldPredictions p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> parts = split_line(line, '\t');
    if (parts.size() != 3)
      throw ContractError("predictions: bad row in " + path);
    p.labels.push_back(std::stoi(parts[1]));
    p.scores.push_back(std::stod(parts[2]));
  }
  return p;
}

void write_projection_file(const std::string& path,
                           const std::vector<EmbeddingRecord>& records,
                           const Matrix& points) {
  if (static_cast<Index>(records.size()) != points.rows())
    throw ContractError("projection: record/point count mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContractError("projection: cannot open " + path);
  out << "admission_id\tstage_class\tx\ty\n";
  for (std::size_t i = 0; i < records.size(); ++i)
    out << records[i].admission_id << "\t" << records[i].stage_class << "\t"
        << fmt_full(points(static_cast<Index>(i), 0)) << "\t"
        << fmt_full(points(static_cast<Index>(i), 1)) << "\n";
}

void cmd_generate(const GenerateArgs& args) {
  const double t0 = now_seconds();
  SynthSpec spec;
  if (!args.spec_path.empty()) spec = parse_synth_spec(args.spec_path);
  spec.validate();
  if (spec.cohort_size == 0) throw ConfigError("generate: empty cohort");
  const std::uint64_t seed = args.seed_explicit || !spec.seed.has_value()
                                 ? args.seed
                                 : *spec.seed;
  spec.seed = seed;  // the resolved copy records what was actually used

  fs::create_directories(args.out_dir);
  Rng rng(seed);
  const std::vector<AdmissionRecord> cohort =
      generate_synthetic_cohort(spec, rng);
  const CohortSchema schema = synth_schema(spec);

  const fs::path out(args.out_dir);
  save_admissions((out / "admissions.jsonl").string(), cohort);
  save_schema((out / "schema.json").string(), schema);
  write_synth_spec((out / "spec_resolved.cfg").string(), spec);

  RunManifest m;
  m.command = "generate";
  std::ifstream spec_in((out / "spec_resolved.cfg").string());
  std::stringstream spec_text;
  spec_text << spec_in.rdbuf();
  m.config_hash = fnv1a(spec_text.str());
  m.seed = seed;
  if (!args.spec_path.empty()) m.inputs.push_back(args.spec_path);
  m.outputs = {"admissions.jsonl", "schema.json", "spec_resolved.cfg"};
  m.wall_clock_seconds = now_seconds() - t0;
  write_manifest(out, m);
}

void cmd_preprocess(const PreprocessArgs& args) {
  const double t0 = now_seconds();
  const CohortSchema schema = load_schema(args.schema_path);
  const std::vector<AdmissionRecord> admissions =
      load_admissions(args.admissions_path);
  if (admissions.empty())
    throw SchemaError("preprocess: no admissions in " + args.admissions_path);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  std::ofstream exclusions(out / "exclusions.log", std::ios::trunc);

  std::set<std::string> seen_ids;
  for (const AdmissionRecord& rec : admissions)
    if (!seen_ids.insert(rec.admission_id).second)
      throw SchemaError("preprocess: duplicate admission_id " +
                        rec.admission_id);

  SequenceDataset ds;
  ds.schema_hash = schema.hash();
  ds.dynamic_count = schema.dynamic_count();
  ds.feature_names = schema.feature_names();

  ImputeOptions iopts;
  iopts.use_median = args.median_impute;
  std::vector<ImputeNote> notes;

  for (const AdmissionRecord& rec : admissions) {
    const RawBuckets buckets =
        bucketize(rec, schema, args.window_hours, args.bucket_hours);
    const Matrix imputed =
        impute(buckets, schema, iopts, &notes, rec.admission_id);
    SequenceRecord sr;
    sr.admission_id = rec.admission_id;
    sr.seq = assemble(rec, imputed, buckets.mask, schema);
    sr.mortality_eligible =
        !(rec.mortality == 1 &&
          rec.mortality_offset_hours < args.mortality_horizon_hours);
    if (sr.seq.stage_class < 0)
      exclusions << rec.admission_id << "\t" << rec.icd_code
                 << "\texcluded from stage task: unmapped ICD code\n";
    if (!sr.mortality_eligible)
      exclusions << rec.admission_id << "\t" << rec.icd_code
                 << "\texcluded from mortality task: death before "
                 << args.mortality_horizon_hours << "h horizon\n";
    ds.records.push_back(std::move(sr));
  }
  for (const ImputeNote& note : notes)
    exclusions << note.admission_id << "\t" << note.feature_id << "\t"
               << note.action << "\n";

  save_dataset((out / "dataset.bin").string(), ds);

  RunManifest m;
  m.command = "preprocess";
  m.config_hash =
      fnv1a(schema.canonical_json() + "|window=" +
            std::to_string(args.window_hours) + "|bucket=" +
            std::to_string(args.bucket_hours) + "|horizon=" +
            std::to_string(args.mortality_horizon_hours) + "|median=" +
            std::to_string(args.median_impute));
  m.inputs = {args.admissions_path, args.schema_path};
  m.outputs = {"dataset.bin", "exclusions.log"};
  m.wall_clock_seconds = now_seconds() - t0;
  write_manifest(out, m);
}

namespace {

struct RunJob {
  ArchitectureKind architecture;
  Objective objective;
  int fold;
};

std::string train_config_snapshot(const TrainArgs& args,
                                  const ModelConfig& mc,
                                  const TrainConfig& tc) {
  std::ostringstream out;
  out << "architecture = " << to_string(mc.architecture) << "\n"
      << "objective = " << to_string(tc.objective) << "\n"
      << "input_dim = " << mc.input_dim << "\n"
      << "projection_dim = " << mc.projection_dim << "\n"
      << "hidden_dim = " << mc.hidden_dim << "\n"
      << "head_hidden_dim = " << mc.head_hidden_dim << "\n"
      << "num_classes = " << mc.num_classes << "\n"
      << "learning_rate = " << tc.learning_rate << "\n"
      << "batch_size = " << tc.batch_size << "\n"
      << "max_epochs = " << tc.max_epochs << "\n"
      << "patience = " << tc.patience << "\n"
      << "min_delta = " << tc.min_delta << "\n"
      << "oversample = " << (tc.oversample ? "true" : "false") << "\n"
      << "grad_clip = " << tc.grad_clip << "\n"
      << "grad_check = " << (tc.grad_check ? "true" : "false") << "\n"
      << "seed = " << tc.seed << "\n"
      << "folds = " << args.folds << "\n"
      << "validation_fraction = " << args.validation_fraction << "\n";
  return out.str();
}

void execute_run(const TrainArgs& args, const SequenceDataset& ds,
                 const CohortSplit& split, const RunJob& job,
                 std::mutex& log_mutex) {
  const fs::path run_dir = fs::path(args.out_dir) /
                           to_string(job.architecture) /
                           ("fold" + std::to_string(job.fold)) /
                           to_string(job.objective);
  if (has_manifest(run_dir)) {
    std::lock_guard<std::mutex> lock(log_mutex);
    std::cout << "train: skipping completed run " << run_dir.string() << "\n";
    return;
  }
  const double t0 = now_seconds();
  if (fs::exists(run_dir)) fs::remove_all(run_dir);  // incomplete leftovers
  fs::create_directories(run_dir);

  ModelConfig mc = args.model_cfg;
  mc.architecture = job.architecture;
  mc.input_dim = ds.feature_dim();
  mc.num_classes = job.objective == Objective::StageEmbedding ? 8 : 2;

  TrainConfig tc = args.train_cfg;
  tc.objective = job.objective;
  const std::string run_tag = to_string(job.architecture) + "/" +
                              to_string(job.objective) + "/fold" +
                              std::to_string(job.fold);
  tc.seed = Rng(args.seed).derive("train/" + run_tag).seed();

  const std::string snapshot = train_config_snapshot(args, mc, tc);
  {
    std::ofstream cfg_out(run_dir / "config.txt", std::ios::trunc);
    cfg_out << snapshot;
  }

  Rng init_rng = Rng(args.seed).derive("init/" + run_tag);
  const Model init = Model::uniform_init(mc, init_rng);
  auto [model, history] = train_fold(init, ds, split, tc);

  {
    std::ofstream metrics(run_dir / "metrics.tsv", std::ios::trunc);
    metrics << "epoch\ttrain_loss\tval_loss\tclipped_batches\tis_best\n";
    for (const EpochRecord& e : history.epochs)
      metrics << e.epoch << "\t" << fmt_full(e.train_loss) << "\t"
              << fmt_full(e.val_loss) << "\t" << e.clipped_batches << "\t"
              << (e.is_best ? 1 : 0) << "\n";
    metrics << "# best_epoch = " << history.best_epoch
            << ", stopped_early = " << (history.stopped_early ? 1 : 0)
            << "\n";
  }

  save_checkpoint((run_dir / "model.ckpt").string(), model);

  write_embeddings_file((run_dir / "embeddings_train.tsv").string(),
                        extract_embeddings(model, split.train, ds));
  write_embeddings_file((run_dir / "embeddings_val.tsv").string(),
                        extract_embeddings(model, split.validation, ds));
  write_embeddings_file((run_dir / "embeddings_test.tsv").string(),
                        extract_embeddings(model, split.test, ds));

  if (job.objective == Objective::MortalityEndToEnd) {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<double> scores;
    for (Index idx : split.test) {
      const SequenceRecord& rec = ds.records[static_cast<std::size_t>(idx)];
      if (!rec.mortality_eligible) continue;
      ids.push_back(rec.admission_id);
      labels.push_back(rec.seq.mortality);
      scores.push_back(predict_head(model, encode(model, rec.seq))[1]);
    }
    write_predictions_file((run_dir / "predictions_test.tsv").string(), ids,
                           labels, scores);
  }

  RunManifest m;
  m.command = "train";
  m.config_hash = fnv1a(snapshot);
  m.seed = tc.seed;
  m.inputs = {args.dataset_path};
  m.outputs = {"config.txt", "metrics.tsv", "model.ckpt",
               "embeddings_train.tsv", "embeddings_val.tsv",
               "embeddings_test.tsv"};
  if (job.objective == Objective::MortalityEndToEnd)
    m.outputs.push_back("predictions_test.tsv");
  m.wall_clock_seconds = now_seconds() - t0;
  write_manifest(run_dir, m);

  std::lock_guard<std::mutex> lock(log_mutex);
  std::cout << "train: " << run_tag << " done, best epoch "
            << history.best_epoch << "/" << history.epochs.size()
            << (history.stopped_early ? " (early stop)" : "") << "\n";
}

}  // namespace

void cmd_train(const TrainArgs& args) {
  if (args.folds < 2) throw ConfigError("train: need at least 2 folds");
  if (args.architectures.empty() || args.objectives.empty())
    throw ConfigError("train: no architectures or objectives selected");
  args.train_cfg.validate();

  const SequenceDataset ds = load_dataset(args.dataset_path);
  if (ds.records.empty()) throw ContractError("train: empty dataset");

  Rng fold_rng = Rng(args.seed).derive("folds");
  const std::vector<CohortSplit> splits =
      kfold_split(static_cast<Index>(ds.records.size()), args.folds,
                  args.validation_fraction, fold_rng);

  std::vector<RunJob> jobs;
  for (ArchitectureKind arch : args.architectures)
    for (Objective obj : args.objectives)
      for (int fold = 0; fold < args.folds; ++fold)
        jobs.push_back({arch, obj, fold});

  std::mutex log_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  const int workers =
      std::max(1, std::min(args.jobs, static_cast<int>(jobs.size())));

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        execute_run(args, ds, splits[static_cast<std::size_t>(jobs[i].fold)],
                    jobs[i], log_mutex);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

void cmd_embed(const EmbedArgs& args) {
  const double t0 = now_seconds();
  const Model model = load_checkpoint(args.checkpoint_path);
  const SequenceDataset ds = load_dataset(args.dataset_path);
  std::vector<Index> all(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    all[i] = static_cast<Index>(i);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  write_embeddings_file((out / "embeddings.tsv").string(),
                        extract_embeddings(model, all, ds));

  RunManifest m;
  m.command = "embed";
  m.config_hash = fnv1a(args.checkpoint_path + "|" + args.dataset_path);
  m.inputs = {args.checkpoint_path, args.dataset_path};
  m.outputs = {"embeddings.tsv"};
  m.wall_clock_seconds = now_seconds() - t0;
  write_manifest(out, m);
}

namespace {

fs::path run_dir_for(const std::string& runs_dir, ArchitectureKind arch,
                     int fold, Objective objective) {
  return fs::path(runs_dir) / to_string(arch) /
         ("fold" + std::to_string(fold)) / to_string(objective);
}

// Collects per-fold run directories, failing with the full list of missing
// folds rather than the first.
std::vector<fs::path> collect_runs(const std::string& runs_dir,
                                   ArchitectureKind arch, int folds,
                                   Objective objective) {
  std::vector<fs::path> dirs;
  std::vector<std::string> missing;
  for (int f = 0; f < folds; ++f) {
    const fs::path dir = run_dir_for(runs_dir, arch, f, objective);
    if (!has_manifest(dir))
      missing.push_back(dir.string());
    else
      dirs.push_back(dir);
  }
  if (!missing.empty()) {
    std::string msg = "missing or incomplete runs:";
    for (const std::string& m : missing) msg += "\n  " + m;
    throw IncompleteInputError(msg);
  }
  return dirs;
}

}  // namespace

void cmd_eval_intrinsic(const EvalIntrinsicArgs& args) {
  const double t0 = now_seconds();
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  std::vector<IntrinsicReport> reports;
  for (ArchitectureKind arch : args.architectures) {
    const std::vector<fs::path> dirs = collect_runs(
        args.runs_dir, arch, args.folds, Objective::StageEmbedding);
    std::vector<FoldEmbeddings> folds;
    for (const fs::path& dir : dirs) {
      FoldEmbeddings fe;
      fe.train = read_embeddings_file((dir / "embeddings_train.tsv").string());
      fe.test = read_embeddings_file((dir / "embeddings_test.tsv").string());
      folds.push_back(std::move(fe));
    }
    std::vector<Projection2D> projections;
    const Rng rng = Rng(args.seed).derive("eval-intrinsic");
    IntrinsicReport report =
        run_intrinsic(to_string(arch), folds, args.perplexity,
                      args.iterations, rng, args.logreg_l2, &projections);
    for (std::size_t f = 0; f < projections.size(); ++f) {
      std::vector<EmbeddingRecord> staged;
      for (const EmbeddingRecord& r : folds[f].test)
        if (r.stage_class >= 0) staged.push_back(r);
      write_projection_file(
          (out / ("tsne_" + to_string(arch) + "_fold" + std::to_string(f) +
                  ".tsv"))
              .string(),
          staged, projections[f].points);
    }
    reports.push_back(std::move(report));
  }

  {
    std::ofstream jf(out / "intrinsic.json", std::ios::trunc);
    jf << intrinsic_report_json(reports) << "\n";
  }
  {
    std::ofstream tf(out / "intrinsic.txt", std::ios::trunc);
    tf << render_intrinsic_table(reports);
  }

  RunManifest m;
  m.command = "eval-intrinsic";
  m.config_hash = fnv1a(args.runs_dir + "|perplexity=" +
                        std::to_string(args.perplexity) + "|iters=" +
                        std::to_string(args.iterations));
  m.seed = args.seed;
  m.inputs = {args.runs_dir};
  m.outputs = {"intrinsic.json", "intrinsic.txt"};
  m.wall_clock_seconds = now_seconds() - t0;
  write_manifest(out, m);
}

void cmd_eval_extrinsic(const EvalExtrinsicArgs& args) {
  const double t0 = now_seconds();
  const SequenceDataset ds = load_dataset(args.dataset_path);
  std::map<std::string, bool> eligible_by_id;
  for (const SequenceRecord& r : ds.records)
    eligible_by_id[r.admission_id] = r.mortality_eligible;

  const auto filter_eligible =
      [&eligible_by_id](const std::vector<EmbeddingRecord>& records) {
        std::vector<EmbeddingRecord> out;
        for (const EmbeddingRecord& r : records) {
          const auto it = eligible_by_id.find(r.admission_id);
          if (it == eligible_by_id.end())
            throw ContractError("eval-extrinsic: admission " +
                                r.admission_id + " not in dataset");
          if (it->second) out.push_back(r);
        }
        return out;
      };

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  std::vector<ExtrinsicReport> reports;
  for (ArchitectureKind arch : args.architectures) {
    const std::vector<fs::path> stage_dirs = collect_runs(
        args.runs_dir, arch, args.folds, Objective::StageEmbedding);
    const std::vector<fs::path> mort_dirs = collect_runs(
        args.runs_dir, arch, args.folds, Objective::MortalityEndToEnd);

    std::vector<FoldEmbeddings> folds;
    std::vector<FoldPredictions> direct;
    for (int f = 0; f < args.folds; ++f) {
      FoldEmbeddings fe;
      fe.train = filter_eligible(read_embeddings_file(
          (stage_dirs[static_cast<std::size_t>(f)] / "embeddings_train.tsv")
              .string()));
      fe.test = filter_eligible(read_embeddings_file(
          (stage_dirs[static_cast<std::size_t>(f)] / "embeddings_test.tsv")
              .string()));
      folds.push_back(std::move(fe));
      direct.push_back(read_predictions_file(
          (mort_dirs[static_cast<std::size_t>(f)] / "predictions_test.tsv")
              .string()));
    }
    reports.push_back(
        run_extrinsic(to_string(arch), folds, direct, args.logreg_l2));
  }

  {
    std::ofstream jf(out / "extrinsic.json", std::ios::trunc);
    jf << extrinsic_report_json(reports) << "\n";
  }
  {
    std::ofstream tf(out / "extrinsic.txt", std::ios::trunc);
    tf << render_extrinsic_table(reports);
  }

  RunManifest m;
  m.command = "eval-extrinsic";
  m.config_hash = fnv1a(args.runs_dir + "|" + args.dataset_path);
  m.inputs = {args.runs_dir, args.dataset_path};
  m.outputs = {"extrinsic.json", "extrinsic.txt"};
  m.wall_clock_seconds = now_seconds() - t0;
  write_manifest(out, m);
}

void cmd_report(const ReportArgs& args) {
  const fs::path dir(args.eval_dir);
  std::ostringstream combined;
  bool any = false;
  for (const char* name : {"intrinsic.txt", "extrinsic.txt"}) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    combined << in.rdbuf() << "\n";
    any = true;
  }
  if (!any)
    throw IncompleteInputError("report: no intrinsic.txt or extrinsic.txt in " +
                               args.eval_dir);
  if (args.out_path.empty()) {
    std::cout << combined.str();
  } else {
    std::ofstream out(args.out_path, std::ios::trunc);
    out << combined.str();
  }
}

}  // namespace ckdseq
