#include "ckdseq/cells.hpp"

namespace ckdseq {

namespace {

void check_dims(const Vector& x, const CellState& prev, const LstmParams& p) {
  const Index hidden = p.hidden_size();
  if (p.w_i.rows() != hidden || p.w_o.rows() != hidden ||
      p.w_c.rows() != hidden || p.u_f.rows() != hidden ||
      p.u_f.cols() != hidden || p.u_i.rows() != hidden ||
      p.u_o.rows() != hidden || p.u_c.rows() != hidden ||
      p.b_f.size() != hidden || p.b_i.size() != hidden ||
      p.b_o.size() != hidden || p.b_c.size() != hidden)
    throw ShapeError("lstm_step: inconsistent gate dimensions");
  if (x.size() != p.input_size())
    throw ShapeError("lstm_step: input size " + std::to_string(x.size()) +
                     " does not match weights (" +
                     std::to_string(p.input_size()) + ")");
  if (prev.h.size() != hidden || prev.c.size() != hidden)
    throw ShapeError("lstm_step: state size does not match hidden size");
}

// Shared step; gamma is the (possibly all-ones) decay applied to c_prev.
std::pair<CellState, StepTape> step_impl(const Vector& x,
                                         const CellState& prev,
                                         const LstmParams& p, Vector gamma,
                                         Vector decay_pre, double delta_t) {
  StepTape t;
  t.x = x;
  t.h_prev = prev.h;
  t.c_prev = prev.c;
  t.gamma = std::move(gamma);
  t.decay_pre = std::move(decay_pre);
  t.delta_t = delta_t;

  const Vector c_eff = t.gamma.cwiseProduct(prev.c);
  t.f = sigmoid(p.w_f * x + p.u_f * prev.h + p.b_f);
  t.i = sigmoid(p.w_i * x + p.u_i * prev.h + p.b_i);
  t.o = sigmoid(p.w_o * x + p.u_o * prev.h + p.b_o);
  t.g = tanh_of(p.w_c * x + p.u_c * prev.h + p.b_c);
  t.c = t.f.cwiseProduct(c_eff) + t.i.cwiseProduct(t.g);
  t.tanh_c = tanh_of(t.c);
  t.h = t.o.cwiseProduct(t.tanh_c);

  CellState next{t.h, t.c};
  return {std::move(next), std::move(t)};
}

}  // namespace

LstmParams LstmParams::zeros(Index hidden, Index input) {
  LstmParams p;
  p.w_f = Matrix::Zero(hidden, input);
  p.w_i = Matrix::Zero(hidden, input);
  p.w_o = Matrix::Zero(hidden, input);
  p.w_c = Matrix::Zero(hidden, input);
  p.u_f = Matrix::Zero(hidden, hidden);
  p.u_i = Matrix::Zero(hidden, hidden);
  p.u_o = Matrix::Zero(hidden, hidden);
  p.u_c = Matrix::Zero(hidden, hidden);
  p.b_f = Vector::Zero(hidden);
  p.b_i = Vector::Zero(hidden);
  p.b_o = Vector::Zero(hidden);
  p.b_c = Vector::Zero(hidden);
  return p;
}

LstmParams LstmParams::uniform_init(Index hidden, Index input, Rng& rng) {
  LstmParams p = zeros(hidden, input);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w_f, bound, rng);
  fill_uniform(p.w_i, bound, rng);
  fill_uniform(p.w_o, bound, rng);
  fill_uniform(p.w_c, bound, rng);
  fill_uniform(p.u_f, bound, rng);
  fill_uniform(p.u_i, bound, rng);
  fill_uniform(p.u_o, bound, rng);
  fill_uniform(p.u_c, bound, rng);
  fill_uniform(p.b_f, bound, rng);
  fill_uniform(p.b_i, bound, rng);
  fill_uniform(p.b_o, bound, rng);
  fill_uniform(p.b_c, bound, rng);
  return p;
}

AttentionParams AttentionParams::zeros(Index hidden) {
  return {Vector::Zero(hidden), 0.0};
}

AttentionParams AttentionParams::uniform_init(Index hidden, Rng& rng) {
  AttentionParams p = zeros(hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w_a, bound, rng);
  p.b_a = rng.uniform(-bound, bound);
  return p;
}

DecayParams DecayParams::zeros(Index hidden) {
  return {Vector::Zero(hidden), Vector::Zero(hidden)};
}

DecayParams DecayParams::uniform_init(Index hidden, Rng& rng) {
  DecayParams p = zeros(hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w_delta, bound, rng);
  fill_uniform(p.b_delta, bound, rng);
  return p;
}

CellState CellState::zero(Index hidden) {
  return {Vector::Zero(hidden), Vector::Zero(hidden)};
}

Vector time_decay(double delta_t_hours, const DecayParams& d) {
  if (delta_t_hours < 0.0)
    throw ArgumentError("time_decay: negative delta_t");
  if (d.w_delta.size() != d.b_delta.size())
    throw ShapeError("time_decay: w_delta/b_delta size mismatch");
  const Vector pre = d.w_delta * delta_t_hours + d.b_delta;
  return pre.unaryExpr([](double s) { return std::exp(-relu(s)); });
}

std::pair<CellState, StepTape> lstm_step(const Vector& x,
                                         const CellState& prev,
                                         const LstmParams& p) {
  check_dims(x, prev, p);
  return step_impl(x, prev, p, Vector::Ones(p.hidden_size()), Vector(), 0.0);
}

std::pair<CellState, StepTape> tlstm_step(const Vector& x,
                                          const CellState& prev,
                                          double delta_t_hours,
                                          const LstmParams& p,
                                          const DecayParams& d) {
  check_dims(x, prev, p);
  if (d.hidden_size() != p.hidden_size())
    throw ShapeError("tlstm_step: decay size does not match hidden size");
  Vector pre = d.w_delta * delta_t_hours + d.b_delta;
  Vector gamma = pre.unaryExpr([](double s) { return std::exp(-relu(s)); });
  return step_impl(x, prev, p, std::move(gamma), std::move(pre),
                   delta_t_hours);
}

AttentionResult attention_context(const std::vector<Vector>& hidden_states,
                                  const AttentionParams& p) {
  if (hidden_states.empty())
    throw ArgumentError("attention_context: empty sequence");
  const Index hidden = p.w_a.size();
  const Index steps = static_cast<Index>(hidden_states.size());
  Vector scores(steps);
  for (Index t = 0; t < steps; ++t) {
    if (hidden_states[t].size() != hidden)
      throw ShapeError("attention_context: hidden size mismatch at step " +
                       std::to_string(t));
    scores[t] = p.w_a.dot(hidden_states[t]) + p.b_a;
  }
  AttentionResult r;
  r.scores = scores;
  r.weights = softmax(scores);
  r.context = Vector::Zero(hidden);
  for (Index t = 0; t < steps; ++t)
    r.context += r.weights[t] * hidden_states[t];
  return r;
}

CellGrads lstm_backward(const SequenceTape& tape, const LstmParams& p,
                        const DecayParams* decay,
                        const std::vector<Vector>& dh_upstream) {
  if (tape.size() != dh_upstream.size())
    throw ContractError("lstm_backward: tape/upstream length mismatch");
  const Index hidden = p.hidden_size();
  const Index input = p.input_size();

  CellGrads g;
  g.lstm = LstmParams::zeros(hidden, input);
  g.decay = DecayParams::zeros(decay != nullptr ? hidden : 0);
  g.inputs.assign(tape.size(), Vector::Zero(input));

  Vector dh = Vector::Zero(hidden);  // carried from step t+1
  Vector dc = Vector::Zero(hidden);

  for (std::ptrdiff_t t = static_cast<std::ptrdiff_t>(tape.size()) - 1; t >= 0;
       --t) {
    const StepTape& s = tape[static_cast<std::size_t>(t)];
    const Vector dh_t = dh + dh_upstream[static_cast<std::size_t>(t)];

    const Vector d_o = dh_t.cwiseProduct(s.tanh_c);
    const Vector da_o =
        d_o.cwiseProduct(s.o).cwiseProduct(Vector::Ones(hidden) - s.o);

    const Vector dc_total =
        dc + dh_t.cwiseProduct(s.o).cwiseProduct(
                 (Vector::Ones(hidden) - s.tanh_c.cwiseProduct(s.tanh_c)));

    const Vector c_eff = s.gamma.cwiseProduct(s.c_prev);
    const Vector d_f = dc_total.cwiseProduct(c_eff);
    const Vector da_f =
        d_f.cwiseProduct(s.f).cwiseProduct(Vector::Ones(hidden) - s.f);
    const Vector d_i = dc_total.cwiseProduct(s.g);
    const Vector da_i =
        d_i.cwiseProduct(s.i).cwiseProduct(Vector::Ones(hidden) - s.i);
    const Vector d_g = dc_total.cwiseProduct(s.i);
    const Vector da_c =
        d_g.cwiseProduct(Vector::Ones(hidden) - s.g.cwiseProduct(s.g));

    const Vector dc_eff = dc_total.cwiseProduct(s.f);
    dc = dc_eff.cwiseProduct(s.gamma);

    if (decay != nullptr && s.decay_pre.size() == hidden) {
      // gamma = exp(-max(0, pre)); d gamma / d pre = -gamma where pre > 0.
      const Vector d_gamma = dc_eff.cwiseProduct(s.c_prev);
      Vector d_pre(hidden);
      for (Index j = 0; j < hidden; ++j)
        d_pre[j] = s.decay_pre[j] > 0.0 ? -d_gamma[j] * s.gamma[j] : 0.0;
      g.decay.w_delta += d_pre * s.delta_t;
      g.decay.b_delta += d_pre;
    }

    g.lstm.w_f += da_f * s.x.transpose();
    g.lstm.w_i += da_i * s.x.transpose();
    g.lstm.w_o += da_o * s.x.transpose();
    g.lstm.w_c += da_c * s.x.transpose();
    g.lstm.u_f += da_f * s.h_prev.transpose();
    g.lstm.u_i += da_i * s.h_prev.transpose();
    g.lstm.u_o += da_o * s.h_prev.transpose();
    g.lstm.u_c += da_c * s.h_prev.transpose();
    g.lstm.b_f += da_f;
    g.lstm.b_i += da_i;
    g.lstm.b_o += da_o;
    g.lstm.b_c += da_c;

    g.inputs[static_cast<std::size_t>(t)] =
        p.w_f.transpose() * da_f + p.w_i.transpose() * da_i +
        p.w_o.transpose() * da_o + p.w_c.transpose() * da_c;

    dh = p.u_f.transpose() * da_f + p.u_i.transpose() * da_i +
         p.u_o.transpose() * da_o + p.u_c.transpose() * da_c;
  }
  return g;
}

AttentionGrads attention_backward(const std::vector<Vector>& hidden_states,
                                  const AttentionResult& fwd,
                                  const AttentionParams& p,
                                  const Vector& d_context) {
  const Index steps = static_cast<Index>(hidden_states.size());
  const Index hidden = p.w_a.size();
  if (fwd.weights.size() != steps)
    throw ContractError("attention_backward: tape/sequence length mismatch");

  AttentionGrads g;
  g.d_w_a = Vector::Zero(hidden);
  g.d_hidden.assign(hidden_states.size(), Vector::Zero(hidden));

  Vector d_alpha(steps);
  for (Index t = 0; t < steps; ++t) {
    d_alpha[t] = d_context.dot(hidden_states[t]);
    g.d_hidden[static_cast<std::size_t>(t)] = fwd.weights[t] * d_context;
  }
  // Softmax backward: de = alpha .* (d_alpha - <alpha, d_alpha>).
  const double inner = fwd.weights.dot(d_alpha);
  const Vector d_scores =
      fwd.weights.cwiseProduct(d_alpha - Vector::Constant(steps, inner));
  for (Index t = 0; t < steps; ++t) {
    g.d_w_a += d_scores[t] * hidden_states[t];
    g.d_b_a += d_scores[t];
    g.d_hidden[static_cast<std::size_t>(t)] += d_scores[t] * p.w_a;
  }
  return g;
}

}  // namespace ckdseq
