#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ckdseq/eval.hpp"
#include "ckdseq/model.hpp"
#include "ckdseq/synthetic.hpp"
#include "ckdseq/training.hpp"

namespace ckdseq {

// Flat key=value config file. Precedence is CLI flag > file > built-in
// default; commands validate keys against the known set.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  void validate_keys(const std::vector<std::string>& known) const;
  std::string canonical() const;  // sorted key=value lines

 private:
  std::map<std::string, std::string> values_;
};

// Every command drops exactly one manifest into its output directory,
// written atomically as the final act; a directory without one is an
// incomplete run.
struct RunManifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;
  double wall_clock_seconds = 0.0;
};

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
bool has_manifest(const std::filesystem::path& dir);

// Embeddings file: header row carries the dimension count, then one row per
// admission: id, stage class, mortality, embedding values.
void write_embeddings_file(const std::string& path,
                           const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings_file(const std::string& path);

void write_predictions_file(const std::string& path,
                            const std::vector<std::string>& admission_ids,
                            const std::vector<int>& labels,
                            const std::vector<double>& scores);
FoldPredictions read_predictions_file(const std::string& path);

// t-SNE projection output: admission_id, stage_class, x, y.
void write_projection_file(const std::string& path,
                           const std::vector<EmbeddingRecord>& records,
                           const Matrix& points);

struct GenerateArgs {
  std::string spec_path;  // empty: built-in demo spec (500 admissions)
  std::string out_dir;
  std::uint64_t seed = 7;
  bool seed_explicit = true;  // false: a seed in the spec file wins
};
void cmd_generate(const GenerateArgs& args);

struct PreprocessArgs {
  std::string admissions_path;
  std::string schema_path;
  std::string out_dir;
  int window_hours = 72;
  int bucket_hours = 1;
  // Mortality-task horizon: observation window plus the prediction gap.
  // Admissions whose death falls inside it are excluded from the mortality
  // task (kept for the stage task).
  double mortality_horizon_hours = 74.0;
  bool median_impute = false;
};
void cmd_preprocess(const PreprocessArgs& args);

struct TrainArgs {
  std::string dataset_path;
  std::string out_dir;
  std::vector<ArchitectureKind> architectures{ArchitectureKind::VanillaLstm};
  std::vector<Objective> objectives{Objective::StageEmbedding};
  int folds = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;
  int jobs = 1;
  ModelConfig model_cfg;   // input_dim is taken from the dataset
  TrainConfig train_cfg;   // seed/objective are filled per run
};
void cmd_train(const TrainArgs& args);

struct EmbedArgs {
  std::string checkpoint_path;
  std::string dataset_path;
  std::string out_dir;
};
void cmd_embed(const EmbedArgs& args);

struct EvalIntrinsicArgs {
  std::string runs_dir;
  std::string out_dir;
  std::vector<ArchitectureKind> architectures{ArchitectureKind::VanillaLstm};
  int folds = 5;
  std::uint64_t seed = 7;
  double perplexity = 30.0;
  int iterations = 1000;
  double logreg_l2 = 1e-3;
};
void cmd_eval_intrinsic(const EvalIntrinsicArgs& args);

struct EvalExtrinsicArgs {
  std::string runs_dir;
  std::string dataset_path;  // source of mortality-task eligibility
  std::string out_dir;
  std::vector<ArchitectureKind> architectures{ArchitectureKind::VanillaLstm};
  int folds = 5;
  double logreg_l2 = 1e-3;
};
void cmd_eval_extrinsic(const EvalExtrinsicArgs& args);

struct ReportArgs {
  std::string eval_dir;  // directory holding intrinsic.txt / extrinsic.txt
  std::string out_path;  // empty: stdout only
};
void cmd_report(const ReportArgs& args);

}  // namespace ckdseq
