#include "ckdseq/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ckdseq {

std::string to_string(Objective o) {
  return o == Objective::StageEmbedding ? "stage" : "mortality";
}

Objective parse_objective(const std::string& name) {
  if (name == "stage") return Objective::StageEmbedding;
  if (name == "mortality") return Objective::MortalityEndToEnd;
  throw ArgumentError("unknown objective '" + name +
                      "' (expected stage|mortality)");
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train config: patience must be >= 1");
  if (min_delta < 0.0) throw ConfigError("train config: min_delta must be >= 0");
  if (grad_clip <= 0.0) throw ConfigError("train config: grad_clip must be > 0");
}

double cross_entropy(const Vector& pred, int label) {
  if (pred.size() == 0) throw ContractError("cross_entropy: empty prediction");
  if (label < 0 || label >= pred.size())
    throw ContractError("cross_entropy: label out of range");
  double sum = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    if (!(pred[i] >= -1e-9) || !std::isfinite(pred[i]))
      throw ContractError("cross_entropy: prediction is not a distribution");
    sum += pred[i];
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw ContractError("cross_entropy: prediction does not sum to 1");
  return -std::log(std::max(pred[label], 1e-12));
}

void adam_step(const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads, AdamState& state,
               double lr) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  if (params.size() != grads.size())
    throw ContractError("adam_step: param/grad tensor count mismatch");
  if (state.m.empty()) {
    for (const ParamView& p : params) {
      state.m.push_back(Vector::Zero(p.size));
      state.v.push_back(Vector::Zero(p.size));
    }
  }
  if (state.m.size() != params.size())
    throw ContractError("adam_step: optimizer state does not match model");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size)
      throw ContractError("adam_step: shape mismatch for tensor " +
                          std::string(params[i].name));
    Eigen::Map<Vector> p(params[i].data, params[i].size);
    Eigen::Map<const Vector> g(grads[i].data, grads[i].size);
    Vector& m = state.m[i];
    Vector& v = state.v[i];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    const Vector m_hat = m / bc1;
    const Vector v_hat = v / bc2;
    p -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
  }
}

EarlyStopper::EarlyStopper(int patience, double min_delta)
    : patience_(patience),
      min_delta_(min_delta),
      best_loss_(std::numeric_limits<double>::infinity()),
      reference_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ArgumentError("EarlyStopper: patience must be >= 1");
}

EarlyStopper::Decision EarlyStopper::observe(double val_loss) {
  ++epoch_;
  Decision d{false, false};
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    d.improved_best = true;
  }
  if (val_loss < reference_loss_ - min_delta_) {
    reference_loss_ = val_loss;
    wait_ = 0;
  } else {
    ++wait_;
    if (wait_ >= patience_) d.stop = true;
  }
  return d;
}

bool eligible(const SequenceRecord& rec, Objective objective) {
  return objective == Objective::StageEmbedding ? rec.seq.stage_class >= 0
                                                : rec.mortality_eligible;
}

int label_of(const SequenceRecord& rec, Objective objective) {
  return objective == Objective::StageEmbedding ? rec.seq.stage_class
                                                : rec.seq.mortality;
}

double loss_and_grads(const Model& m, const BucketedSequence& seq, int label,
                      ModelGrads& out) {
  auto [probs, tape] = forward(m, seq);
  const double loss = cross_entropy(probs, label);
  Vector d_logits;
  if (m.config.num_classes == 2) {
    d_logits = Vector::Constant(1, probs[1] - static_cast<double>(label));
  } else {
    d_logits = probs;
    d_logits[label] -= 1.0;
  }
  out = backward(m, tape, d_logits);
  return loss;
}

double finite_difference_check(const Model& m, const BucketedSequence& seq,
                               int label, double eps, int n_probe, Rng* rng) {
  Model work = m;
  ModelGrads analytic;
  loss_and_grads(work, seq, label, analytic);

  const std::vector<ParamView> params = param_views(work);
  const std::vector<ParamView> grads = param_views(analytic);

  Index total = 0;
  for (const ParamView& p : params) total += p.size;

  std::vector<Index> probes;
  if (n_probe <= 0 || n_probe >= total) {
    probes.resize(static_cast<std::size_t>(total));
    for (Index i = 0; i < total; ++i) probes[static_cast<std::size_t>(i)] = i;
  } else {
    if (rng == nullptr)
      throw ArgumentError("finite_difference_check: sampling requires an rng");
    for (int i = 0; i < n_probe; ++i)
      probes.push_back(static_cast<Index>(
          rng->uniform_int(static_cast<std::uint64_t>(total))));
  }

  double max_rel = 0.0;
  for (Index flat : probes) {
    Index offset = flat;
    std::size_t tensor = 0;
    while (offset >= params[tensor].size) {
      offset -= params[tensor].size;
      ++tensor;
    }
    double* coord = params[tensor].data + offset;
    const double saved = *coord;

    *coord = saved + eps;
    const double up = cross_entropy(predict_head(work, encode(work, seq)), label);
    *coord = saved - eps;
    const double down =
        cross_entropy(predict_head(work, encode(work, seq)), label);
    *coord = saved;

    const double numeric = (up - down) / (2.0 * eps);
    const double exact = grads[tensor].data[offset];
    const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
    if (std::abs(numeric) < 1e-10 && std::abs(exact) < 1e-10) continue;
    max_rel = std::max(max_rel, std::abs(numeric - exact) / denom);
  }
  return max_rel;
}

namespace {

double global_grad_norm(std::vector<ParamView>& grads) {
  double sq = 0.0;
  for (const ParamView& g : grads)
    sq += Eigen::Map<const Vector>(g.data, g.size).squaredNorm();
  return std::sqrt(sq);
}

double mean_loss(const Model& m, const SequenceDataset& data,
                 const std::vector<Index>& indices, Objective objective) {
  double total = 0.0;
  for (Index idx : indices) {
    const SequenceRecord& rec = data.records[static_cast<std::size_t>(idx)];
    total += cross_entropy(predict_head(m, encode(m, rec.seq)),
                           label_of(rec, objective));
  }
  return total / static_cast<double>(indices.size());
}

std::vector<Index> filter_eligible(const std::vector<Index>& indices,
                                   const SequenceDataset& data,
                                   Objective objective) {
  std::vector<Index> out;
  for (Index idx : indices)
    if (eligible(data.records[static_cast<std::size_t>(idx)], objective))
      out.push_back(idx);
  return out;
}

}  // namespace

std::pair<Model, TrainHistory> train_fold(const Model& init,
                                          const SequenceDataset& data,
                                          const CohortSplit& split,
                                          const TrainConfig& cfg) {
  cfg.validate();
  const int expected_classes =
      cfg.objective == Objective::StageEmbedding ? 8 : 2;
  if (init.config.num_classes != expected_classes)
    throw ConfigError("train_fold: model has " +
                      std::to_string(init.config.num_classes) +
                      " classes but objective needs " +
                      std::to_string(expected_classes));

  Rng rng(cfg.seed);
  std::vector<Index> train_idx = filter_eligible(split.train, data, cfg.objective);
  const std::vector<Index> val_idx =
      filter_eligible(split.validation, data, cfg.objective);
  if (train_idx.empty() || val_idx.empty())
    throw ConfigError("train_fold: empty train or validation part after "
                      "eligibility filtering");

  if (cfg.oversample) {
    std::vector<int> labels;
    labels.reserve(train_idx.size());
    for (Index idx : train_idx)
      labels.push_back(
          label_of(data.records[static_cast<std::size_t>(idx)], cfg.objective));
    train_idx = oversample_minority(train_idx, labels, rng);
  }

  Model model = init;
  if (cfg.grad_check) {
    Rng probe_rng = rng.derive("grad-check");
    const SequenceRecord& rec =
        data.records[static_cast<std::size_t>(train_idx.front())];
    const double err = finite_difference_check(
        model, rec.seq, label_of(rec, cfg.objective), 1e-5, 25, &probe_rng);
    if (err >= 1e-4)
      throw ContractError("train_fold: gradient check failed, max relative "
                          "error " + std::to_string(err));
  }

  Model best_model = model;
  AdamState adam;
  EarlyStopper stopper(cfg.patience, cfg.min_delta);
  TrainHistory history;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    int clipped = 0;

    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ModelGrads batch_grads = ModelGrads::zeros_like(model);
      ModelGrads example_grads = ModelGrads::zeros_like(model);
      for (std::size_t i = start; i < end; ++i) {
        const SequenceRecord& rec =
            data.records[static_cast<std::size_t>(train_idx[i])];
        epoch_loss += loss_and_grads(model, rec.seq,
                                     label_of(rec, cfg.objective),
                                     example_grads);
        batch_grads.add(example_grads);
      }
      batch_grads.scale(1.0 / static_cast<double>(end - start));

      std::vector<ParamView> gviews = param_views(batch_grads);
      const double norm = global_grad_norm(gviews);
      if (norm > cfg.grad_clip) {
        batch_grads.scale(cfg.grad_clip / norm);
        ++clipped;
      }
      adam_step(param_views(model), param_views(batch_grads), adam,
                cfg.learning_rate);
    }

    const double train_loss =
        epoch_loss / static_cast<double>(train_idx.size());
    const double val_loss = mean_loss(model, data, val_idx, cfg.objective);
    const EarlyStopper::Decision decision = stopper.observe(val_loss);
    if (decision.improved_best) best_model = model;
    history.epochs.push_back(
        {epoch, train_loss, val_loss, clipped, decision.improved_best});
    if (decision.stop) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  return {std::move(best_model), std::move(history)};
}

std::vector<EmbeddingRecord> extract_embeddings(
    const Model& m, const std::vector<Index>& indices,
    const SequenceDataset& data) {
  std::vector<EmbeddingRecord> out;
  out.reserve(indices.size());
  for (Index idx : indices) {
    if (idx < 0 || idx >= static_cast<Index>(data.records.size()))
      throw ContractError("extract_embeddings: index out of range");
    const SequenceRecord& rec = data.records[static_cast<std::size_t>(idx)];
    out.push_back({rec.admission_id, rec.seq.stage_class, rec.seq.mortality,
                   encode(m, rec.seq)});
  }
  return out;
}

}  // namespace ckdseq
