#include "ckdseq/model.hpp"

#include <cstring>
#include <fstream>

namespace ckdseq {

std::string to_string(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::VanillaLstm:
      return "lstm";
    case ArchitectureKind::AttentionLstm:
      return "attn";
    case ArchitectureKind::TimeAwareLstm:
      return "tlstm";
  }
  throw ArgumentError("unknown architecture kind");
}

ArchitectureKind parse_architecture(const std::string& name) {
  if (name == "lstm") return ArchitectureKind::VanillaLstm;
  if (name == "attn") return ArchitectureKind::AttentionLstm;
  if (name == "tlstm") return ArchitectureKind::TimeAwareLstm;
  throw ArgumentError("unknown architecture '" + name +
                      "' (expected lstm|attn|tlstm)");
}

void ModelConfig::validate() const {
  if (input_dim < 1 || projection_dim < 1 || hidden_dim < 1 ||
      head_hidden_dim < 1)
    throw ConfigError("model config: all dimensions must be >= 1");
  if (num_classes != 2 && num_classes != 8)
    throw ConfigError("model config: num_classes must be 2 or 8");
}

Model Model::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.proj_w = Matrix::Zero(cfg.projection_dim, cfg.input_dim);
  m.proj_b = Vector::Zero(cfg.projection_dim);
  m.cell = LstmParams::zeros(cfg.hidden_dim, cfg.projection_dim);
  m.attention = AttentionParams::zeros(
      cfg.architecture == ArchitectureKind::AttentionLstm ? cfg.hidden_dim
                                                          : 0);
  m.decay = DecayParams::zeros(
      cfg.architecture == ArchitectureKind::TimeAwareLstm ? cfg.hidden_dim
                                                          : 0);
  m.head_w1 = Matrix::Zero(cfg.head_hidden_dim, cfg.hidden_dim);
  m.head_b1 = Vector::Zero(cfg.head_hidden_dim);
  m.head_w2 = Matrix::Zero(cfg.logit_dim(), cfg.head_hidden_dim);
  m.head_b2 = Vector::Zero(cfg.logit_dim());
  return m;
}

Model Model::uniform_init(const ModelConfig& cfg, Rng& rng) {
  Model m = zeros(cfg);
  const auto bound = [](Index fan_in) {
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
  };
  fill_uniform(m.proj_w, bound(cfg.input_dim), rng);
  fill_uniform(m.proj_b, bound(cfg.input_dim), rng);
  m.cell = LstmParams::uniform_init(cfg.hidden_dim, cfg.projection_dim, rng);
  if (cfg.architecture == ArchitectureKind::AttentionLstm)
    m.attention = AttentionParams::uniform_init(cfg.hidden_dim, rng);
  if (cfg.architecture == ArchitectureKind::TimeAwareLstm)
    m.decay = DecayParams::uniform_init(cfg.hidden_dim, rng);
  fill_uniform(m.head_w1, bound(cfg.hidden_dim), rng);
  fill_uniform(m.head_b1, bound(cfg.hidden_dim), rng);
  fill_uniform(m.head_w2, bound(cfg.head_hidden_dim), rng);
  fill_uniform(m.head_b2, bound(cfg.head_hidden_dim), rng);
  return m;
}

ModelGrads ModelGrads::zeros_like(const Model& m) {
  ModelGrads g;
  g.proj_w = Matrix::Zero(m.proj_w.rows(), m.proj_w.cols());
  g.proj_b = Vector::Zero(m.proj_b.size());
  g.cell = LstmParams::zeros(m.cell.hidden_size(), m.cell.input_size());
  g.attention = AttentionParams::zeros(m.attention.w_a.size());
  g.decay = DecayParams::zeros(m.decay.hidden_size());
  g.head_w1 = Matrix::Zero(m.head_w1.rows(), m.head_w1.cols());
  g.head_b1 = Vector::Zero(m.head_b1.size());
  g.head_w2 = Matrix::Zero(m.head_w2.rows(), m.head_w2.cols());
  g.head_b2 = Vector::Zero(m.head_b2.size());
  return g;
}

void ModelGrads::add(const ModelGrads& o) {
  proj_w += o.proj_w;
  proj_b += o.proj_b;
  cell.w_f += o.cell.w_f;
  cell.w_i += o.cell.w_i;
  cell.w_o += o.cell.w_o;
  cell.w_c += o.cell.w_c;
  cell.u_f += o.cell.u_f;
  cell.u_i += o.cell.u_i;
  cell.u_o += o.cell.u_o;
  cell.u_c += o.cell.u_c;
  cell.b_f += o.cell.b_f;
  cell.b_i += o.cell.b_i;
  cell.b_o += o.cell.b_o;
  cell.b_c += o.cell.b_c;
  attention.w_a += o.attention.w_a;
  attention.b_a += o.attention.b_a;
  decay.w_delta += o.decay.w_delta;
  decay.b_delta += o.decay.b_delta;
  head_w1 += o.head_w1;
  head_b1 += o.head_b1;
  head_w2 += o.head_w2;
  head_b2 += o.head_b2;
}

void ModelGrads::scale(double factor) {
  for (const ParamView& v : param_views(*this))
    Eigen::Map<Vector>(v.data, v.size) *= factor;
}

namespace {

void check_sequence(const Model& m, const BucketedSequence& seq) {
  if (seq.features.rows() == 0)
    throw ArgumentError("encode: empty sequence");
  if (seq.features.cols() != m.config.input_dim)
    throw ShapeError("encode: sequence feature dim " +
                     std::to_string(seq.features.cols()) +
                     " does not match model input dim " +
                     std::to_string(m.config.input_dim));
  if (m.config.architecture == ArchitectureKind::TimeAwareLstm &&
      seq.delta_t.size() != seq.features.rows())
    throw ShapeError("encode: delta_t length does not match sequence length");
}

// Runs projection + recurrence, filling the tape when given.
Vector run_encoder(const Model& m, const BucketedSequence& seq,
                   ModelTape* tape) {
  const Index steps = seq.features.rows();
  CellState state = CellState::zero(m.config.hidden_dim);
  std::vector<Vector> hidden;
  hidden.reserve(static_cast<std::size_t>(steps));

  for (Index t = 0; t < steps; ++t) {
    const Vector x = seq.features.row(t).transpose();
    const Vector projected = m.proj_w * x + m.proj_b;
    std::pair<CellState, StepTape> stepped =
        m.config.architecture == ArchitectureKind::TimeAwareLstm
            ? tlstm_step(projected, state, seq.delta_t[t], m.cell, m.decay)
            : lstm_step(projected, state, m.cell);
    state = std::move(stepped.first);
    hidden.push_back(state.h);
    if (tape != nullptr) {
      tape->inputs.push_back(x);
      tape->projected.push_back(projected);
      tape->steps.push_back(std::move(stepped.second));
    }
  }

  Vector z;
  if (m.config.architecture == ArchitectureKind::AttentionLstm) {
    AttentionResult att = attention_context(hidden, m.attention);
    z = att.context;
    if (tape != nullptr) tape->attention = std::move(att);
  } else {
    z = state.h;
  }
  if (tape != nullptr) {
    tape->hidden = std::move(hidden);
    tape->embedding = z;
  }
  return z;
}

}  // namespace

Vector encode(const Model& m, const BucketedSequence& seq) {
  check_sequence(m, seq);
  return run_encoder(m, seq, nullptr);
}

Vector predict_head(const Model& m, const Vector& z) {
  if (z.size() != m.config.hidden_dim)
    throw ShapeError("predict_head: embedding size mismatch");
  const Vector u = relu_of(m.head_w1 * z + m.head_b1);
  const Vector v = m.head_w2 * u + m.head_b2;
  if (m.config.num_classes == 2) {
    const double p = sigmoid(v[0]);
    Vector probs(2);
    probs << 1.0 - p, p;
    return probs;
  }
  return softmax(v);
}

std::pair<Vector, ModelTape> forward(const Model& m,
                                     const BucketedSequence& seq) {
  check_sequence(m, seq);
  ModelTape tape;
  const Index steps = seq.features.rows();
  tape.inputs.reserve(static_cast<std::size_t>(steps));
  tape.projected.reserve(static_cast<std::size_t>(steps));
  tape.steps.reserve(static_cast<std::size_t>(steps));

  run_encoder(m, seq, &tape);
  tape.head_pre = m.head_w1 * tape.embedding + m.head_b1;
  tape.head_act = relu_of(tape.head_pre);
  tape.logits = m.head_w2 * tape.head_act + m.head_b2;
  if (m.config.num_classes == 2) {
    const double p = sigmoid(tape.logits[0]);
    tape.probs = Vector(2);
    tape.probs << 1.0 - p, p;
  } else {
    tape.probs = softmax(tape.logits);
  }
  return {tape.probs, std::move(tape)};
}

ModelGrads backward(const Model& m, const ModelTape& tape,
                    const Vector& d_logits) {
  if (d_logits.size() != m.config.logit_dim())
    throw ShapeError("backward: d_logits size mismatch");
  ModelGrads g = ModelGrads::zeros_like(m);

  // Head.
  g.head_w2 = d_logits * tape.head_act.transpose();
  g.head_b2 = d_logits;
  const Vector d_act = m.head_w2.transpose() * d_logits;
  Vector d_pre(d_act.size());
  for (Index j = 0; j < d_act.size(); ++j)
    d_pre[j] = tape.head_pre[j] > 0.0 ? d_act[j] : 0.0;
  g.head_w1 = d_pre * tape.embedding.transpose();
  g.head_b1 = d_pre;
  const Vector d_z = m.head_w1.transpose() * d_pre;

  // Encoder.
  std::vector<Vector> dh(tape.steps.size(),
                         Vector::Zero(m.config.hidden_dim));
  if (m.config.architecture == ArchitectureKind::AttentionLstm) {
    AttentionGrads ag =
        attention_backward(tape.hidden, tape.attention, m.attention, d_z);
    g.attention.w_a = std::move(ag.d_w_a);
    g.attention.b_a = ag.d_b_a;
    dh = std::move(ag.d_hidden);
  } else {
    dh.back() = d_z;
  }

  const DecayParams* decay =
      m.config.architecture == ArchitectureKind::TimeAwareLstm ? &m.decay
                                                               : nullptr;
  CellGrads cg = lstm_backward(tape.steps, m.cell, decay, dh);
  g.cell = std::move(cg.lstm);
  if (decay != nullptr) g.decay = std::move(cg.decay);

  // Projection.
  for (std::size_t t = 0; t < cg.inputs.size(); ++t) {
    g.proj_w += cg.inputs[t] * tape.inputs[t].transpose();
    g.proj_b += cg.inputs[t];
  }
  return g;
}

namespace {

template <typename ModelLike>
std::vector<ParamView> views_impl(ModelLike& m) {
  std::vector<ParamView> v;
  const auto push = [&v](const char* name, auto& tensor) {
    if (tensor.size() > 0) v.push_back({name, tensor.data(), tensor.size()});
  };
  push("proj_w", m.proj_w);
  push("proj_b", m.proj_b);
  push("w_f", m.cell.w_f);
  push("w_i", m.cell.w_i);
  push("w_o", m.cell.w_o);
  push("w_c", m.cell.w_c);
  push("u_f", m.cell.u_f);
  push("u_i", m.cell.u_i);
  push("u_o", m.cell.u_o);
  push("u_c", m.cell.u_c);
  push("b_f", m.cell.b_f);
  push("b_i", m.cell.b_i);
  push("b_o", m.cell.b_o);
  push("b_c", m.cell.b_c);
  if (m.attention.w_a.size() > 0) {
    v.push_back({"w_a", m.attention.w_a.data(), m.attention.w_a.size()});
    v.push_back({"b_a", &m.attention.b_a, 1});
  }
  push("w_delta", m.decay.w_delta);
  push("b_delta", m.decay.b_delta);
  push("head_w1", m.head_w1);
  push("head_b1", m.head_b1);
  push("head_w2", m.head_w2);
  push("head_b2", m.head_b2);
  return v;
}

constexpr char kCheckpointMagic[4] = {'C', 'K', 'D', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw ContractError("checkpoint: truncated file");
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  read_bytes(in, &v, sizeof(T));
  return v;
}

}  // namespace

std::vector<ParamView> param_views(Model& m) { return views_impl(m); }
std::vector<ParamView> param_views(ModelGrads& g) { return views_impl(g); }

void save_checkpoint(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractError("checkpoint: cannot open " + path);
  write_bytes(out, kCheckpointMagic, 4);
  write_pod(out, kCheckpointVersion);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(m.config.architecture));
  write_pod<std::int32_t>(out, m.config.num_classes);
  write_pod<std::int64_t>(out, m.config.input_dim);
  write_pod<std::int64_t>(out, m.config.projection_dim);
  write_pod<std::int64_t>(out, m.config.hidden_dim);
  write_pod<std::int64_t>(out, m.config.head_hidden_dim);

  Model& mutable_m = const_cast<Model&>(m);
  const std::vector<ParamView> views = param_views(mutable_m);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(views.size()));
  for (const ParamView& v : views) {
    const std::uint8_t len = static_cast<std::uint8_t>(std::strlen(v.name));
    write_pod(out, len);
    write_bytes(out, v.name, len);
    write_pod<std::int64_t>(out, v.size);
    write_bytes(out, v.data, static_cast<std::size_t>(v.size) * sizeof(double));
  }
  if (!out) throw ContractError("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("checkpoint: cannot open " + path);
  char magic[4];
  read_bytes(in, magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ContractError("checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion)
    throw ContractError("checkpoint: unsupported version in " + path);

  ModelConfig cfg;
  cfg.architecture = static_cast<ArchitectureKind>(read_pod<std::uint8_t>(in));
  cfg.num_classes = read_pod<std::int32_t>(in);
  cfg.input_dim = read_pod<std::int64_t>(in);
  cfg.projection_dim = read_pod<std::int64_t>(in);
  cfg.hidden_dim = read_pod<std::int64_t>(in);
  cfg.head_hidden_dim = read_pod<std::int64_t>(in);
  Model m = Model::zeros(cfg);

  const std::vector<ParamView> views = param_views(m);
  const std::uint32_t count = read_pod<std::uint32_t>(in);
  if (count != views.size())
    throw ContractError("checkpoint: tensor count mismatch in " + path);
  for (const ParamView& v : views) {
    const std::uint8_t len = read_pod<std::uint8_t>(in);
    std::string name(len, '\0');
    read_bytes(in, name.data(), len);
    if (name != v.name)
      throw ContractError("checkpoint: tensor order mismatch (" + name +
                          " vs " + v.name + ")");
    const std::int64_t size = read_pod<std::int64_t>(in);
    if (size != v.size)
      throw ContractError("checkpoint: tensor size mismatch for " + name);
    read_bytes(in, v.data, static_cast<std::size_t>(size) * sizeof(double));
  }
  return m;
}

}  // namespace ckdseq
