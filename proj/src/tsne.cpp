#include <algorithm>
#include <cmath>
#include <limits>

#include "ckdseq/eval.hpp"

namespace ckdseq {

namespace {

Matrix squared_distances(const Matrix& x) {
  const Vector sq = x.rowwise().squaredNorm();
  Matrix d = (-2.0 * x * x.transpose());
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

// Entropy (nats) and conditional row for one point at inverse bandwidth beta.
double row_entropy(const Matrix& d2, Index i, double beta, Vector& p_row) {
  const Index n = d2.rows();
  double sum = 0.0;
  for (Index j = 0; j < n; ++j) {
    p_row[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
    sum += p_row[j];
  }
  if (sum <= 0.0) {
    // All neighbours underflowed; spread mass uniformly.
    p_row.setConstant(1.0 / static_cast<double>(n - 1));
    p_row[i] = 0.0;
    return std::log(static_cast<double>(n - 1));
  }
  double h = 0.0;  // H = log(sum) + beta * E[d2]
  double weighted = 0.0;
  for (Index j = 0; j < n; ++j) {
    p_row[j] /= sum;
    if (j != i) weighted += p_row[j] * d2(i, j);
  }
  h = std::log(sum) + beta * weighted;
  return h;
}

Matrix conditional_p(const Matrix& d2, double perplexity) {
  const Index n = d2.rows();
  const double target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);
  Vector row(n);

  for (Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double h = row_entropy(d2, i, beta, row);
    for (int iter = 0; iter < 200 && std::abs(h - target) > 1e-7; ++iter) {
      if (h > target) {  // too spread out: sharpen
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = lo > 0.0 ? 0.5 * (beta + lo) : beta * 0.5;
      }
      h = row_entropy(d2, i, beta, row);
    }
    p.row(i) = row.transpose();
  }
  return p;
}

double kl_divergence(const Matrix& p, const Matrix& q) {
  double kl = 0.0;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      kl += p(i, j) * std::log(p(i, j) / q(i, j));
    }
  return kl;
}

// Student-t affinities and their normalized form.
void compute_q(const Matrix& y, Matrix& w, Matrix& q) {
  const Matrix d2 = squared_distances(y);
  w = (1.0 + d2.array()).inverse().matrix();
  w.diagonal().setZero();
  const double total = w.sum();
  q = (w / total).cwiseMax(1e-12);
}

Matrix tsne_gradient(const Matrix& p_eff, const Matrix& q, const Matrix& w,
                     const Matrix& y) {
  const Index n = y.rows();
  Matrix grad = Matrix::Zero(n, 2);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double coef = 4.0 * (p_eff(i, j) - q(i, j)) * w(i, j);
      grad.row(i) += coef * (y.row(i) - y.row(j));
    }
  }
  return grad;
}

void center_rows(Matrix& y) { y.rowwise() -= y.colwise().mean(); }

}  // namespace

Matrix tsne_conditional_p(const Matrix& embeddings, double perplexity,
                          Rng& rng, std::ostream* warn) {
  const Index n = embeddings.rows();
  if (n < 3) throw ArgumentError("tsne: need at least 3 points");
  if (perplexity <= 0.0 || static_cast<double>(n) < 3.0 * perplexity)
    throw ArgumentError("tsne: perplexity too large for " +
                        std::to_string(n) + " points");

  Matrix x = embeddings;
  Matrix d2 = squared_distances(x);
  bool degenerate = false;
  for (Index i = 0; i < n && !degenerate; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (d2(i, j) == 0.0) {
        degenerate = true;
        break;
      }
  if (degenerate) {
    if (warn != nullptr)
      *warn << "tsne: duplicate points detected; applying 1e-10 jitter\n";
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j)
        x(i, j) += rng.uniform(-1e-10, 1e-10);
    d2 = squared_distances(x);
  }
  return conditional_p(d2, perplexity);
}

Projection2D tsne_project(const Matrix& embeddings, double perplexity,
                          int iterations, Rng& rng, const TsneOptions& opts,
                          std::ostream* warn) {
  if (iterations < 1) throw ArgumentError("tsne: iterations must be >= 1");
  const Index n = embeddings.rows();

  const Matrix p_cond = tsne_conditional_p(embeddings, perplexity, rng, warn);
  Matrix p = ((p_cond + p_cond.transpose()) /
              (2.0 * static_cast<double>(n))).cwiseMax(1e-12);

  Matrix y(n, 2);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < 2; ++j) y(i, j) = 1e-4 * rng.normal();

  Matrix velocity = Matrix::Zero(n, 2);
  Matrix w, q;
  Projection2D out;
  out.kl_history.reserve(static_cast<std::size_t>(iterations));

  double step = opts.learning_rate;
  double last_kl = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < iterations; ++iter) {
    const bool exaggerating = iter < opts.exaggeration_iters;
    const double momentum =
        exaggerating ? opts.momentum_early : opts.momentum_late;

    compute_q(y, w, q);
    const Matrix p_eff = exaggerating ? (opts.exaggeration * p).eval() : p;
    const Matrix grad = tsne_gradient(p_eff, q, w, y);

    if (exaggerating) {
      velocity = momentum * velocity - step * grad;
      y += velocity;
      center_rows(y);
      compute_q(y, w, q);
      last_kl = kl_divergence(p, q);
      out.kl_history.push_back(last_kl);
      continue;
    }

    // Monotone phase: halve the step until KL does not increase.
    Matrix vel_c = momentum * velocity - step * grad;
    Matrix y_c = y + vel_c;
    center_rows(y_c);
    Matrix w_c, q_c;
    compute_q(y_c, w_c, q_c);
    double kl_c = kl_divergence(p, q_c);
    int halvings = 0;
    while (kl_c > last_kl && halvings < 50) {
      step *= 0.5;
      ++halvings;
      vel_c = -step * grad;  // momentum dropped on retry
      y_c = y + vel_c;
      center_rows(y_c);
      compute_q(y_c, w_c, q_c);
      kl_c = kl_divergence(p, q_c);
    }
    if (kl_c > last_kl) {
      velocity.setZero();  // stuck; keep the current layout
      out.kl_history.push_back(last_kl);
      continue;
    }
    y = y_c;
    velocity = vel_c;
    last_kl = kl_c;
    step = std::min(step * 1.02, opts.learning_rate);
    out.kl_history.push_back(last_kl);
  }

  if (!y.allFinite()) throw ContractError("tsne: non-finite layout");
  out.points = y;
  return out;
}

}  // namespace ckdseq
