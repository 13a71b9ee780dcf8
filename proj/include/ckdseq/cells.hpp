#pragma once

#include <utility>
#include <vector>

#include "ckdseq/numerics.hpp"

namespace ckdseq {

struct LstmParams {
  Matrix w_f, w_i, w_o, w_c;  // hidden x input
  Matrix u_f, u_i, u_o, u_c;  // hidden x hidden
  Vector b_f, b_i, b_o, b_c;  // hidden

  Index hidden_size() const { return w_f.rows(); }
  Index input_size() const { return w_f.cols(); }

  static LstmParams zeros(Index hidden, Index input);
  // Uniform in [-1/sqrt(hidden), +1/sqrt(hidden)], fixed draw order.
  static LstmParams uniform_init(Index hidden, Index input, Rng& rng);
};

struct AttentionParams {
  Vector w_a;        // hidden
  double b_a = 0.0;  // scalar score bias

  static AttentionParams zeros(Index hidden);
  static AttentionParams uniform_init(Index hidden, Rng& rng);
};

struct DecayParams {
  Vector w_delta;  // hidden, per-unit decay rate on delta_t
  Vector b_delta;  // hidden

  Index hidden_size() const { return w_delta.size(); }

  static DecayParams zeros(Index hidden);
  static DecayParams uniform_init(Index hidden, Rng& rng);
};

struct CellState {
  Vector h, c;

  static CellState zero(Index hidden);
};

// Everything the backward pass needs about one consumed timestep.
struct StepTape {
  Vector x;           // projected input fed to the gates
  Vector h_prev;
  Vector c_prev;      // cell state before decay
  Vector gamma;       // decay factor applied to c_prev (ones for vanilla)
  Vector decay_pre;   // w_delta * delta_t + b_delta, pre-clamp
  double delta_t = 0.0;
  Vector f, i, o, g;  // gate activations and candidate
  Vector c;           // updated cell state
  Vector tanh_c;
  Vector h;
};

using SequenceTape = std::vector<StepTape>;

// gamma = exp(-max(0, w_delta * delta_t + b_delta)), componentwise in (0, 1].
Vector time_decay(double delta_t_hours, const DecayParams& d);

std::pair<CellState, StepTape> lstm_step(const Vector& x, const CellState& prev,
                                         const LstmParams& p);

// Identical to lstm_step except the cell state entering the forget term is
// first attenuated by time_decay(delta_t). Gates see the undecayed h_prev.
std::pair<CellState, StepTape> tlstm_step(const Vector& x,
                                          const CellState& prev,
                                          double delta_t_hours,
                                          const LstmParams& p,
                                          const DecayParams& d);

struct AttentionResult {
  Vector context;  // hidden
  Vector weights;  // T, sums to 1
  Vector scores;   // T, pre-softmax
};

AttentionResult attention_context(const std::vector<Vector>& hidden_states,
                                  const AttentionParams& p);

// Gradients of a scalar loss w.r.t. cell parameters and inputs, accumulated
// over the whole sequence by backpropagation through time.
struct CellGrads {
  LstmParams lstm;
  DecayParams decay;           // zero-sized when no decay was used
  std::vector<Vector> inputs;  // d loss / d x_t
};

// tape: completed forward pass. dh_upstream: one gradient per timestep
// (zero vectors where the loss does not touch h_t). decay != nullptr marks
// a time-aware pass and enables decay-parameter gradients.
CellGrads lstm_backward(const SequenceTape& tape, const LstmParams& p,
                        const DecayParams* decay,
                        const std::vector<Vector>& dh_upstream);

struct AttentionGrads {
  Vector d_w_a;
  double d_b_a = 0.0;
  std::vector<Vector> d_hidden;  // contribution to each h_t
};

AttentionGrads attention_backward(const std::vector<Vector>& hidden_states,
                                  const AttentionResult& fwd,
                                  const AttentionParams& p,
                                  const Vector& d_context);

}  // namespace ckdseq
