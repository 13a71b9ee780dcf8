#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ckdseq/pipeline.hpp"

namespace {

using namespace ckdseq;

std::vector<ArchitectureKind> expand_architectures(const std::string& name) {
  if (name == "all")
    return {ArchitectureKind::VanillaLstm, ArchitectureKind::AttentionLstm,
            ArchitectureKind::TimeAwareLstm};
  return {parse_architecture(name)};
}

std::vector<Objective> expand_objectives(const std::string& name) {
  if (name == "both")
    return {Objective::StageEmbedding, Objective::MortalityEndToEnd};
  return {parse_objective(name)};
}

const std::vector<std::string> kKnownConfigKeys = {
    "projection_dim", "hidden_dim",      "head_hidden_dim",
    "learning_rate",  "batch_size",      "max_epochs",
    "patience",       "min_delta",       "oversample",
    "grad_check",     "grad_clip",       "validation_fraction",
    "window_hours",   "bucket_hours",    "mortality_horizon_hours",
    "median_impute",  "perplexity",      "tsne_iterations",
    "logreg_l2",
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal embedding models for bucketed clinical sequences"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::uint64_t seed = 7;
  int jobs = 1;
  std::string config_path;
  std::string architecture = "all";
  std::string objective = "both";
  int folds = 5;
  std::vector<std::string> overrides;
  app.add_option("--seed", seed, "Global random seed");
  app.add_option("--jobs", jobs, "Worker threads for fold-level parallelism");
  app.add_option("--config", config_path, "Key=value config file");
  app.add_option("--architecture", architecture,
                 "Architecture: lstm|attn|tlstm|all");
  app.add_option("--objective", objective, "Objective: stage|mortality|both");
  app.add_option("--folds", folds, "Number of cross-validation folds");
  app.add_option("--set", overrides,
                 "Override a config key, e.g. --set hidden_dim=32 "
                 "(precedence: --set > --config > default)");

  auto* generate = app.add_subcommand("generate", "Write a synthetic cohort");
  std::string gen_spec, gen_out;
  generate->add_option("--spec", gen_spec, "Synthetic-cohort spec file");
  generate->add_option("--out", gen_out, "Output directory")->required();

  auto* preprocess =
      app.add_subcommand("preprocess", "Bucket admissions into sequences");
  std::string pre_admissions, pre_schema, pre_out;
  preprocess->add_option("--admissions", pre_admissions, "admissions.jsonl")
      ->required();
  preprocess->add_option("--schema", pre_schema, "schema.json")->required();
  preprocess->add_option("--out", pre_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train folds x objectives");
  std::string train_data, train_out;
  train->add_option("--data", train_data, "dataset.bin")->required();
  train->add_option("--out", train_out, "Runs directory")->required();

  auto* embed = app.add_subcommand("embed", "Extract embeddings");
  std::string embed_ckpt, embed_data, embed_out;
  embed->add_option("--checkpoint", embed_ckpt, "model.ckpt")->required();
  embed->add_option("--data", embed_data, "dataset.bin")->required();
  embed->add_option("--out", embed_out, "Output directory")->required();

  auto* eval_intr =
      app.add_subcommand("eval-intrinsic", "DBI + stage accuracy per fold");
  std::string ei_runs, ei_out;
  eval_intr->add_option("--runs", ei_runs, "Runs directory")->required();
  eval_intr->add_option("--out", ei_out, "Report directory")->required();

  auto* eval_extr = app.add_subcommand(
      "eval-extrinsic", "Mortality metrics, direct vs downstream LR");
  std::string ee_runs, ee_data, ee_out;
  eval_extr->add_option("--runs", ee_runs, "Runs directory")->required();
  eval_extr->add_option("--data", ee_data, "dataset.bin")->required();
  eval_extr->add_option("--out", ee_out, "Report directory")->required();

  auto* report = app.add_subcommand("report", "Render combined report");
  std::string rep_eval, rep_out;
  report->add_option("--eval", rep_eval, "Directory with eval outputs")
      ->required();
  report->add_option("--out", rep_out, "Also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    KeyValueConfig cfg;
    if (!config_path.empty()) cfg = KeyValueConfig::from_file(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate_keys(kKnownConfigKeys);

    if (generate->parsed()) {
      cmd_generate({gen_spec, gen_out, seed, app.count("--seed") > 0});
    } else if (preprocess->parsed()) {
      PreprocessArgs args;
      args.admissions_path = pre_admissions;
      args.schema_path = pre_schema;
      args.out_dir = pre_out;
      args.window_hours = cfg.get_int("window_hours", args.window_hours);
      args.bucket_hours = cfg.get_int("bucket_hours", args.bucket_hours);
      args.mortality_horizon_hours = cfg.get_double(
          "mortality_horizon_hours", args.mortality_horizon_hours);
      args.median_impute = cfg.get_bool("median_impute", args.median_impute);
      cmd_preprocess(args);
    } else if (train->parsed()) {
      TrainArgs args;
      args.dataset_path = train_data;
      args.out_dir = train_out;
      args.architectures = expand_architectures(architecture);
      args.objectives = expand_objectives(objective);
      args.folds = folds;
      args.seed = seed;
      args.jobs = jobs;
      args.validation_fraction =
          cfg.get_double("validation_fraction", args.validation_fraction);
      args.model_cfg.projection_dim =
          cfg.get_int("projection_dim", args.model_cfg.projection_dim);
      args.model_cfg.hidden_dim =
          cfg.get_int("hidden_dim", args.model_cfg.hidden_dim);
      args.model_cfg.head_hidden_dim =
          cfg.get_int("head_hidden_dim", args.model_cfg.head_hidden_dim);
      args.train_cfg.learning_rate =
          cfg.get_double("learning_rate", args.train_cfg.learning_rate);
      args.train_cfg.batch_size =
          cfg.get_int("batch_size", args.train_cfg.batch_size);
      args.train_cfg.max_epochs =
          cfg.get_int("max_epochs", args.train_cfg.max_epochs);
      args.train_cfg.patience =
          cfg.get_int("patience", args.train_cfg.patience);
      args.train_cfg.min_delta =
          cfg.get_double("min_delta", args.train_cfg.min_delta);
      args.train_cfg.oversample =
          cfg.get_bool("oversample", args.train_cfg.oversample);
      args.train_cfg.grad_clip =
          cfg.get_double("grad_clip", args.train_cfg.grad_clip);
      args.train_cfg.grad_check =
          cfg.get_bool("grad_check", args.train_cfg.grad_check);
      cmd_train(args);
    } else if (embed->parsed()) {
      cmd_embed({embed_ckpt, embed_data, embed_out});
    } else if (eval_intr->parsed()) {
      EvalIntrinsicArgs args;
      args.runs_dir = ei_runs;
      args.out_dir = ei_out;
      args.architectures = expand_architectures(architecture);
      args.folds = folds;
      args.seed = seed;
      args.perplexity = cfg.get_double("perplexity", args.perplexity);
      args.iterations = cfg.get_int("tsne_iterations", args.iterations);
      args.logreg_l2 = cfg.get_double("logreg_l2", args.logreg_l2);
      cmd_eval_intrinsic(args);
    } else if (eval_extr->parsed()) {
      EvalExtrinsicArgs args;
      args.runs_dir = ee_runs;
      args.dataset_path = ee_data;
      args.out_dir = ee_out;
      args.architectures = expand_architectures(architecture);
      args.folds = folds;
      args.logreg_l2 = cfg.get_double("logreg_l2", args.logreg_l2);
      cmd_eval_extrinsic(args);
    } else if (report->parsed()) {
      cmd_report({rep_eval, rep_out});
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IncompleteInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {  // shape/schema/contract errors
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
