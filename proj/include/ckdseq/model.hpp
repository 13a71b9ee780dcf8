#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ckdseq/cells.hpp"
#include "ckdseq/data.hpp"

namespace ckdseq {

enum class ArchitectureKind { VanillaLstm, AttentionLstm, TimeAwareLstm };

std::string to_string(ArchitectureKind kind);
ArchitectureKind parse_architecture(const std::string& name);  // lstm|attn|tlstm

struct ModelConfig {
  Index input_dim = 0;
  Index projection_dim = 8;
  Index hidden_dim = 16;
  Index head_hidden_dim = 16;
  int num_classes = 2;  // 2 for mortality, 8 for stage
  ArchitectureKind architecture = ArchitectureKind::VanillaLstm;

  Index logit_dim() const { return num_classes == 2 ? 1 : num_classes; }
  void validate() const;
};

// Input projection, one recurrent encoder variant, and a two-layer head.
// Attention params are sized only for AttentionLstm, decay params only for
// TimeAwareLstm; the unused blocks are empty tensors.
struct Model {
  ModelConfig config;
  Matrix proj_w;  // projection_dim x input_dim
  Vector proj_b;
  LstmParams cell;
  AttentionParams attention;
  DecayParams decay;
  Matrix head_w1;  // head_hidden_dim x hidden_dim
  Vector head_b1;
  Matrix head_w2;  // logit_dim x head_hidden_dim
  Vector head_b2;

  static Model zeros(const ModelConfig& cfg);
  static Model uniform_init(const ModelConfig& cfg, Rng& rng);
};

// Gradients of a scalar loss, same tensor layout as Model.
struct ModelGrads {
  Matrix proj_w;
  Vector proj_b;
  LstmParams cell;
  AttentionParams attention;
  DecayParams decay;
  Matrix head_w1;
  Vector head_b1;
  Matrix head_w2;
  Vector head_b2;

  static ModelGrads zeros_like(const Model& m);
  void add(const ModelGrads& other);
  void scale(double factor);
};

struct ModelTape {
  std::vector<Vector> inputs;       // raw x_t
  std::vector<Vector> projected;    // proj_w x_t + proj_b
  std::vector<Vector> hidden;       // h_t
  SequenceTape steps;
  AttentionResult attention;        // only for AttentionLstm
  Vector embedding;                 // z
  Vector head_pre;                  // W1 z + b1
  Vector head_act;                  // relu(head_pre)
  Vector logits;                    // W2 head_act + b2
  Vector probs;                     // num_classes entries
};

// Final hidden state (vanilla / time-aware) or the attention context.
Vector encode(const Model& m, const BucketedSequence& seq);

// Probability vector over num_classes. Binary heads emit a single sigmoid
// probability p expanded to [1-p, p]; the 8-class head is a softmax.
Vector predict_head(const Model& m, const Vector& z);

std::pair<Vector, ModelTape> forward(const Model& m,
                                     const BucketedSequence& seq);

// d_logits: gradient of the loss w.r.t. the pre-sigmoid / pre-softmax logits.
ModelGrads backward(const Model& m, const ModelTape& tape,
                    const Vector& d_logits);

// Flat views over every active parameter tensor, in a fixed canonical order.
// Model and ModelGrads produce views in the same order.
struct ParamView {
  const char* name;
  double* data;
  Index size;
};
std::vector<ParamView> param_views(Model& m);
std::vector<ParamView> param_views(ModelGrads& g);

// Versioned binary checkpoint; save -> load round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace ckdseq
