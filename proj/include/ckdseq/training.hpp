#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ckdseq/model.hpp"

namespace ckdseq {

enum class Objective { StageEmbedding, MortalityEndToEnd };

std::string to_string(Objective o);
Objective parse_objective(const std::string& name);  // stage|mortality

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  double min_delta = 1e-4;
  bool oversample = true;
  std::uint64_t seed = 0;
  Objective objective = Objective::StageEmbedding;
  double grad_clip = 5.0;   // global norm cap
  bool grad_check = false;  // debug-mode finite-difference check before training

  void validate() const;
};

struct EpochRecord {
  int epoch;  // 1-based
  double train_loss;
  double val_loss;
  int clipped_batches;
  bool is_best;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; epoch with minimal validation loss
  bool stopped_early = false;
};

// -log(pred[label]) with a 1e-12 probability floor.
double cross_entropy(const Vector& pred, int label);

// Adam with beta1=0.9, beta2=0.999, eps=1e-8 and bias correction. State
// tensors are keyed by position, so params and grads must come from
// param_views of matching models.
struct AdamState {
  std::vector<Vector> m, v;
  long step = 0;
};

void adam_step(const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads, AdamState& state,
               double lr);

// Patience-based early stopping on validation loss. Epochs are 1-based.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_delta);

  struct Decision {
    bool stop;
    bool improved_best;  // strictly lower than every previous loss
  };
  Decision observe(double val_loss);

  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  double min_delta_;
  int epoch_ = 0;
  int wait_ = 0;
  int best_epoch_ = 0;
  double best_loss_;
  double reference_loss_;
};

bool eligible(const SequenceRecord& rec, Objective objective);
int label_of(const SequenceRecord& rec, Objective objective);

// Mini-batch Adam with oversampling, gradient clipping, early stopping and
// best-epoch checkpoint restore.
std::pair<Model, TrainHistory> train_fold(const Model& init,
                                          const SequenceDataset& data,
                                          const CohortSplit& split,
                                          const TrainConfig& cfg);

struct EmbeddingRecord {
  std::string admission_id;
  int stage_class;
  int mortality;
  Vector values;
};

std::vector<EmbeddingRecord> extract_embeddings(
    const Model& m, const std::vector<Index>& indices,
    const SequenceDataset& data);

// Loss and full analytic gradient for one example; the workhorse of the
// training loop and the gradient checks.
double loss_and_grads(const Model& m, const BucketedSequence& seq, int label,
                      ModelGrads& out);

// Max relative error between analytic gradients and central finite
// differences (eps) over n_probe randomly chosen coordinates (all
// coordinates when n_probe <= 0).
double finite_difference_check(const Model& m, const BucketedSequence& seq,
                               int label, double eps = 1e-5,
                               int n_probe = -1, Rng* rng = nullptr);

}  // namespace ckdseq
