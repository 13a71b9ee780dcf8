#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ckdseq/model.hpp"
#include "ckdseq/training.hpp"
#include "oracles.hpp"

using namespace ckdseq;

namespace {

BucketedSequence random_sequence(Index steps, Index dim, std::uint64_t seed) {
  Rng rng(seed);
  BucketedSequence seq;
  seq.features = Matrix(steps, dim);
  fill_uniform(seq.features, 1.0, rng);
  seq.raw_mask = MaskMatrix::Zero(steps, 1);
  seq.delta_t = Vector(steps);
  for (Index t = 0; t < steps; ++t)
    seq.delta_t[t] = 1.0 + static_cast<double>(rng.uniform_int(4));
  seq.stage_class = static_cast<int>(rng.uniform_int(8));
  seq.mortality = rng.bernoulli(0.3) ? 1 : 0;
  return seq;
}

ModelConfig small_config(ArchitectureKind arch, int classes) {
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.projection_dim = 3;
  cfg.hidden_dim = 4;
  cfg.head_hidden_dim = 4;
  cfg.num_classes = classes;
  cfg.architecture = arch;
  return cfg;
}

}  // namespace

TEST_CASE("encode: all-zero parameters give the zero embedding") {
  for (ArchitectureKind arch :
       {ArchitectureKind::VanillaLstm, ArchitectureKind::AttentionLstm,
        ArchitectureKind::TimeAwareLstm}) {
    const Model m = Model::zeros(small_config(arch, 8));
    const Vector z = encode(m, random_sequence(6, 5, 1));
    CHECK(z.isZero(0.0));
  }
}

TEST_CASE("encode: attention on a length-1 sequence returns h1") {
  Rng rng(2);
  const Model m =
      Model::uniform_init(small_config(ArchitectureKind::AttentionLstm, 8), rng);
  const BucketedSequence seq = random_sequence(1, 5, 3);
  auto [probs, tape] = forward(m, seq);
  CHECK(tape.attention.weights[0] == 1.0);
  CHECK((tape.embedding - tape.hidden[0]).norm() == 0.0);
}

TEST_CASE("encode: deterministic and independent of head parameters") {
  Rng rng(4);
  Model m =
      Model::uniform_init(small_config(ArchitectureKind::TimeAwareLstm, 8), rng);
  const BucketedSequence seq = random_sequence(5, 5, 5);
  const Vector z1 = encode(m, seq);
  const Vector z2 = encode(m, seq);
  CHECK((z1 - z2).norm() == 0.0);

  m.head_w1.setConstant(3.0);
  m.head_b2.setConstant(-1.0);
  const Vector z3 = encode(m, seq);
  CHECK((z1 - z3).norm() == 0.0);
}

TEST_CASE("encode rejects bad sequences") {
  const Model m = Model::zeros(small_config(ArchitectureKind::VanillaLstm, 8));
  CHECK_THROWS_AS(encode(m, random_sequence(4, 7, 6)), ShapeError);
  BucketedSequence empty;
  empty.features = Matrix(0, 5);
  CHECK_THROWS_AS(encode(m, empty), ArgumentError);
}

TEST_CASE("predict_head: zero weights give maximum-entropy outputs") {
  const Model binary = Model::zeros(small_config(ArchitectureKind::VanillaLstm, 2));
  const Vector p2 = predict_head(binary, Vector::Zero(4));
  CHECK(p2[0] == 0.5);
  CHECK(p2[1] == 0.5);

  const Model stage = Model::zeros(small_config(ArchitectureKind::VanillaLstm, 8));
  const Vector p8 = predict_head(stage, Vector::Zero(4));
  for (Index k = 0; k < 8; ++k) CHECK(p8[k] == 0.125);
}

TEST_CASE("predict_head outputs valid distributions for random weights") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Model m = Model::uniform_init(
        small_config(ArchitectureKind::VanillaLstm, trial % 2 ? 2 : 8), rng);
    Vector z(4);
    fill_uniform(z, 5.0, rng);
    const Vector p = predict_head(m, z);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("attention embedding is a convex combination of hidden states") {
  Rng rng(10);
  const Model m =
      Model::uniform_init(small_config(ArchitectureKind::AttentionLstm, 8), rng);
  const BucketedSequence seq = random_sequence(7, 5, 11);
  auto [probs, tape] = forward(m, seq);
  for (Index dim = 0; dim < 4; ++dim) {
    double lo = tape.hidden[0][dim], hi = tape.hidden[0][dim];
    for (const Vector& h : tape.hidden) {
      lo = std::min(lo, h[dim]);
      hi = std::max(hi, h[dim]);
    }
    CHECK(tape.embedding[dim] >= lo - 1e-12);
    CHECK(tape.embedding[dim] <= hi + 1e-12);
  }
}

TEST_CASE("binary and 8-class heads share the encoder output") {
  Rng rng(12);
  const Model stage =
      Model::uniform_init(small_config(ArchitectureKind::VanillaLstm, 8), rng);
  Model binary = Model::zeros(small_config(ArchitectureKind::VanillaLstm, 2));
  binary.proj_w = stage.proj_w;
  binary.proj_b = stage.proj_b;
  binary.cell = stage.cell;
  const BucketedSequence seq = random_sequence(5, 5, 13);
  CHECK((encode(stage, seq) - encode(binary, seq)).norm() == 0.0);
}

TEST_CASE("backward: zero upstream logit gradient zeroes every tensor") {
  Rng rng(14);
  const Model m =
      Model::uniform_init(small_config(ArchitectureKind::TimeAwareLstm, 8), rng);
  auto [probs, tape] = forward(m, random_sequence(4, 5, 15));
  ModelGrads g = backward(m, tape, Vector::Zero(8));
  for (const ParamView& v : param_views(g))
    for (Index i = 0; i < v.size; ++i) CHECK(v.data[i] == 0.0);
}

TEST_CASE("composed model gradients match finite differences") {
  for (ArchitectureKind arch :
       {ArchitectureKind::VanillaLstm, ArchitectureKind::AttentionLstm,
        ArchitectureKind::TimeAwareLstm}) {
    for (const int classes : {2, 8}) {
      Rng rng(16 + static_cast<int>(arch));
      Model m = Model::uniform_init(small_config(arch, classes), rng);
      const BucketedSequence seq = random_sequence(4, 5, 17);
      const int label = classes == 2 ? seq.mortality : seq.stage_class;

      ModelGrads analytic;
      loss_and_grads(m, seq, label, analytic);

      // Forward-only loss for the oracle.
      const auto loss = [&]() {
        return cross_entropy(predict_head(m, encode(m, seq)), label);
      };
      const std::vector<ParamView> params = param_views(m);
      const std::vector<ParamView> grads = param_views(analytic);
      REQUIRE(params.size() == grads.size());
      double max_rel = 0.0;
      for (std::size_t i = 0; i < params.size(); ++i)
        for (Index j = 0; j < params[i].size; ++j) {
          const double fd =
              oracles::fd_derivative(loss, params[i].data + j, 1e-5);
          max_rel = std::max(max_rel, oracles::rel_err(fd, grads[i].data[j]));
        }
      CHECK(max_rel < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  namespace fs = std::filesystem;
  Rng rng(20);
  for (ArchitectureKind arch :
       {ArchitectureKind::VanillaLstm, ArchitectureKind::AttentionLstm,
        ArchitectureKind::TimeAwareLstm}) {
    Model m = Model::uniform_init(small_config(arch, 8), rng);
    const fs::path path =
        fs::temp_directory_path() / ("ckdseq_ckpt_" + to_string(arch) + ".bin");
    save_checkpoint(path.string(), m);
    Model loaded = load_checkpoint(path.string());
    CHECK(loaded.config.architecture == arch);
    const std::vector<ParamView> a = param_views(m);
    const std::vector<ParamView> b = param_views(loaded);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].size == b[i].size);
      for (Index j = 0; j < a[i].size; ++j)
        CHECK(a[i].data[j] == b[i].data[j]);
    }
    fs::remove(path);
  }
}

TEST_CASE("load_checkpoint rejects corrupted files") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "ckdseq_ckpt_bad.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), ContractError);
  fs::remove(path);
}
