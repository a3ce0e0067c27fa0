// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jorge/errors.hpp"
#include "jorge/matrix.hpp"
#include "jorge/rng.hpp"

namespace jorge {

enum class MetricKind { accuracy, neg_loss };

inline std::string to_string(MetricKind k) {
  return k == MetricKind::accuracy ? "accuracy" : "neg_loss";
}

// A desk-scale training problem with analytic gradients. Everything is a pure
// function of the parameter list; the captured data is immutable after
// construction, so loss/grad/metric may be called concurrently.
struct Problem {
  std::string name;
  std::vector<std::vector<std::size_t>> layer_shapes;
  std::size_t train_samples = 1;
  MetricKind metric_kind = MetricKind::neg_loss;

  std::function<std::vector<DenseMatrix>()> initial_params;
  std::function<double(const std::vector<DenseMatrix>&, std::span<const std::size_t>)> loss;
  std::function<std::vector<DenseMatrix>(const std::vector<DenseMatrix>&,
                                         std::span<const std::size_t>)> grad;
  std::function<double(const std::vector<DenseMatrix>&)> metric;           // higher is better
  std::function<double(const std::vector<DenseMatrix>&)> full_train_loss;  // whole train set
};

struct DatasetSpec {
  std::string kind;  // quadratic | logreg | mlp
  int dim = 2;
  double cond = 1.0;
  int classes = 2;
  int samples = 128;
  int batch_size = 32;
  int hidden = 16;
  int in_dim = 8;
  std::uint64_t seed = 1;
};

// f(theta) = 1/2 sum_i d_i theta_i^2 with log-uniform spectrum spanning
// [1, cond] (endpoints pinned, sorted ascending). The one-sample "dataset"
// makes an epoch a single full gradient step. Parameters are presented as the
// most-square rows x cols matrix dim factors into, so both preconditioner
// factors carry curvature; prime dims fall back to a single row.
inline Problem make_quadratic(int dim, double cond, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("make_quadratic: dim must be >= 2");
  if (!(cond >= 1.0)) throw ConfigError("make_quadratic: cond must be >= 1");

  auto diag = std::make_shared<std::vector<double>>(static_cast<std::size_t>(dim));
  {
    Rng rng(mix_seed(seed, 0x71ad));
    std::vector<double> expo(static_cast<std::size_t>(dim));
    expo.front() = 0.0;
    expo.back() = 1.0;
    for (int i = 1; i + 1 < dim; ++i) expo[static_cast<std::size_t>(i)] = rng.uniform();
    std::sort(expo.begin(), expo.end());
    for (int i = 0; i < dim; ++i)
      (*diag)[static_cast<std::size_t>(i)] = std::pow(cond, expo[static_cast<std::size_t>(i)]);
  }

  std::size_t rows = 1;
  for (std::size_t m = 1; m * m <= static_cast<std::size_t>(dim); ++m)
    if (static_cast<std::size_t>(dim) % m == 0) rows = m;
  const std::size_t cols = static_cast<std::size_t>(dim) / rows;

  auto loss_of = [diag](const std::vector<DenseMatrix>& params) {
    const DenseMatrix& th = params.at(0);
    double f = 0.0;
    for (std::size_t i = 0; i < th.data().size(); ++i)
      f += 0.5 * (*diag)[i] * th.data()[i] * th.data()[i];
    return f;
  };

  Problem p;
  p.name = "quadratic";
  p.layer_shapes = {rows > 1 ? std::vector<std::size_t>{rows, cols}
                             : std::vector<std::size_t>{cols}};
  p.train_samples = 1;
  p.metric_kind = MetricKind::neg_loss;
  p.initial_params = [shape = p.layer_shapes[0], dim] {
    std::vector<double> ones(static_cast<std::size_t>(dim), 1.0);
    return std::vector<DenseMatrix>{collapse_to_matrix(shape, std::move(ones))};
  };
  p.loss = [loss_of](const std::vector<DenseMatrix>& params, std::span<const std::size_t>) {
    return loss_of(params);
  };
  p.grad = [diag](const std::vector<DenseMatrix>& params, std::span<const std::size_t>) {
    const DenseMatrix& th = params.at(0);
    DenseMatrix g(th.rows(), th.cols());
    for (std::size_t i = 0; i < th.data().size(); ++i) g.data()[i] = (*diag)[i] * th.data()[i];
    return std::vector<DenseMatrix>{std::move(g)};
  };
  p.metric = [loss_of](const std::vector<DenseMatrix>& params) { return -loss_of(params); };
  p.full_train_loss = loss_of;
  return p;
}

namespace detail {

struct LogregData {
  std::size_t dim;
  std::vector<double> x;       // train, samples x dim row-major
  std::vector<double> y;       // labels in {-1, +1}
  std::vector<double> eval_x;  // held-out
  std::vector<double> eval_y;
};

inline double logistic_loss(const LogregData& d, const DenseMatrix& theta,
                            std::span<const std::size_t> idx) {
  double total = 0.0;
  for (std::size_t s : idx) {
    double score = 0.0;
    for (std::size_t j = 0; j < d.dim; ++j) score += theta.data()[j] * d.x[s * d.dim + j];
    const double z = -d.y[s] * score;
    // log(1 + e^z), stable for large |z|
    total += z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace detail

// Two synthetic Gaussian blobs with a planted separator through the origin:
// labels come from the separator, and every point is pushed a fixed margin
// along it, so the classes are perfectly separable. Feature scales are spread
// log-uniformly over [1, 10] (sorted ascending), which makes the loss
// ill-conditioned the way unnormalized real features are.
inline Problem make_logreg(int samples, int dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("make_logreg: dim must be >= 1");
  if (samples < dim) throw ConfigError("make_logreg: need at least dim samples");

  auto data = std::make_shared<detail::LogregData>();
  data->dim = static_cast<std::size_t>(dim);
  {
    Rng rng(mix_seed(seed, 0x109));
    std::vector<double> scales(data->dim, 1.0);
    if (dim > 1) {
      std::vector<double> expo(data->dim);
      expo.front() = 0.0;
      expo.back() = 1.0;
      for (int j = 1; j + 1 < dim; ++j) expo[static_cast<std::size_t>(j)] = rng.uniform();
      std::sort(expo.begin(), expo.end());
      for (int j = 0; j < dim; ++j)
        scales[static_cast<std::size_t>(j)] = std::pow(100.0, expo[static_cast<std::size_t>(j)]);
    }
    // separator weighted inversely to feature scale: the class signal lives
    // in the small-scale features, so the ill-conditioned directions matter
    std::vector<double> sep(data->dim);
    double norm = 0.0;
    for (std::size_t j = 0; j < data->dim; ++j) {
      sep[j] = rng.normal() / scales[j];
      norm += sep[j] * sep[j];
    }
    norm = std::sqrt(norm);
    for (double& v : sep) v /= norm;

    const double margin = 1.0;
    auto draw = [&](std::size_t count, std::vector<double>& xs, std::vector<double>& ys) {
      xs.resize(count * data->dim);
      ys.resize(count);
      for (std::size_t s = 0; s < count; ++s) {
        double score = 0.0;
        for (std::size_t j = 0; j < data->dim; ++j) {
          xs[s * data->dim + j] = scales[j] * rng.normal();
          score += sep[j] * xs[s * data->dim + j];
        }
        const double label = score >= 0.0 ? 1.0 : -1.0;
        ys[s] = label;
        for (std::size_t j = 0; j < data->dim; ++j) xs[s * data->dim + j] += label * margin * sep[j];
      }
    };
    draw(static_cast<std::size_t>(samples), data->x, data->y);
    draw(std::max<std::size_t>(128, static_cast<std::size_t>(samples) / 4), data->eval_x,
         data->eval_y);
  }

  Problem p;
  p.name = "logreg";
  p.layer_shapes = {{static_cast<std::size_t>(dim)}};
  p.train_samples = static_cast<std::size_t>(samples);
  p.metric_kind = MetricKind::accuracy;
  p.initial_params = [dim] {
    return std::vector<DenseMatrix>{DenseMatrix(1, static_cast<std::size_t>(dim))};
  };
  p.loss = [data](const std::vector<DenseMatrix>& params, std::span<const std::size_t> idx) {
    return detail::logistic_loss(*data, params.at(0), idx);
  };
  p.grad = [data](const std::vector<DenseMatrix>& params, std::span<const std::size_t> idx) {
    const DenseMatrix& th = params.at(0);
    DenseMatrix g(1, data->dim);
    for (std::size_t s : idx) {
      double score = 0.0;
      for (std::size_t j = 0; j < data->dim; ++j) score += th.data()[j] * data->x[s * data->dim + j];
      // d/ds log(1+e^{-ys}) = -y * sigmoid(-ys)
      const double z = -data->y[s] * score;
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double coeff = -data->y[s] * sig;
      for (std::size_t j = 0; j < data->dim; ++j) g.data()[j] += coeff * data->x[s * data->dim + j];
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (double& v : g.data()) v *= inv;
    return std::vector<DenseMatrix>{std::move(g)};
  };
  p.metric = [data](const std::vector<DenseMatrix>& params) {
    const DenseMatrix& th = params.at(0);
    const std::size_t count = data->eval_y.size();
    std::size_t hits = 0;
    for (std::size_t s = 0; s < count; ++s) {
      double score = 0.0;
      for (std::size_t j = 0; j < data->dim; ++j)
        score += th.data()[j] * data->eval_x[s * data->dim + j];
      if ((score >= 0.0 ? 1.0 : -1.0) == data->eval_y[s]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(count);
  };
  p.full_train_loss = [data, samples](const std::vector<DenseMatrix>& params) {
    std::vector<std::size_t> all(static_cast<std::size_t>(samples));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return detail::logistic_loss(*data, params.at(0), all);
  };
  return p;
}

namespace detail {

struct MlpData {
  std::size_t in_dim, hidden, classes;
  std::vector<double> x;  // samples x in_dim
  std::vector<int> y;     // class indices
  std::vector<double> eval_x;
  std::vector<int> eval_y;
};

struct MlpForward {
  std::vector<double> h;      // batch x hidden, tanh activations
  std::vector<double> probs;  // batch x classes
  double loss = 0.0;
};

// One hidden tanh layer, softmax cross-entropy. Parameters:
//   [0] W1 (in x hidden), [1] b1 (1 x hidden), [2] W2 (hidden x classes),
//   [3] b2 (1 x classes)
inline MlpForward mlp_forward(const MlpData& d, const std::vector<DenseMatrix>& params,
                              const std::vector<double>& xs, const std::vector<int>& ys,
                              std::span<const std::size_t> idx) {
  const DenseMatrix& w1 = params.at(0);
  const DenseMatrix& b1 = params.at(1);
  const DenseMatrix& w2 = params.at(2);
  const DenseMatrix& b2 = params.at(3);
  const std::size_t batch = idx.size();

  MlpForward f;
  f.h.assign(batch * d.hidden, 0.0);
  f.probs.assign(batch * d.classes, 0.0);

  for (std::size_t b = 0; b < batch; ++b) {
    const double* xrow = &xs[idx[b] * d.in_dim];
    for (std::size_t j = 0; j < d.hidden; ++j) {
      double z = b1.data()[j];
      for (std::size_t i = 0; i < d.in_dim; ++i) z += xrow[i] * w1(i, j);
      f.h[b * d.hidden + j] = std::tanh(z);
    }
    double zmax = -1e300;
    std::vector<double> logits(d.classes);
    for (std::size_t c = 0; c < d.classes; ++c) {
      double z = b2.data()[c];
      for (std::size_t j = 0; j < d.hidden; ++j) z += f.h[b * d.hidden + j] * w2(j, c);
      logits[c] = z;
      zmax = std::max(zmax, z);
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < d.classes; ++c) denom += std::exp(logits[c] - zmax);
    for (std::size_t c = 0; c < d.classes; ++c)
      f.probs[b * d.classes + c] = std::exp(logits[c] - zmax) / denom;
    f.loss -= std::log(std::max(f.probs[b * d.classes + static_cast<std::size_t>(ys[idx[b]])],
                                1e-300));
  }
  f.loss /= static_cast<double>(batch);
  return f;
}

}  // namespace detail

// Two-layer tanh MLP on synthetic data labelled by a random teacher network.
// Backprop is written out by hand; biases are carried as 1 x n matrices so
// every parameter goes through the same matrix-shaped optimizer path.
inline Problem make_mlp(int in_dim, int hidden, int classes, int samples, std::uint64_t seed) {
  if (hidden < 2) throw ConfigError("make_mlp: hidden must be >= 2");
  if (in_dim < 1 || classes < 2) throw ConfigError("make_mlp: bad dimensions");
  if (samples < 1) throw ConfigError("make_mlp: samples must be positive");

  auto data = std::make_shared<detail::MlpData>();
  data->in_dim = static_cast<std::size_t>(in_dim);
  data->hidden = static_cast<std::size_t>(hidden);
  data->classes = static_cast<std::size_t>(classes);
  {
    Rng rng(mix_seed(seed, 0x317));
    // teacher net assigning labels
    std::vector<double> tw1(data->in_dim * data->hidden), tw2(data->hidden * data->classes);
    for (double& v : tw1) v = rng.normal();
    for (double& v : tw2) v = rng.normal();
    auto draw = [&](std::size_t count, std::vector<double>& xs, std::vector<int>& ys) {
      xs.resize(count * data->in_dim);
      ys.resize(count);
      std::vector<double> th(data->hidden), logits(data->classes);
      for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t i = 0; i < data->in_dim; ++i) xs[s * data->in_dim + i] = rng.normal();
        for (std::size_t j = 0; j < data->hidden; ++j) {
          double z = 0.0;
          for (std::size_t i = 0; i < data->in_dim; ++i)
            z += xs[s * data->in_dim + i] * tw1[i * data->hidden + j];
          th[j] = std::tanh(z);
        }
        std::size_t best = 0;
        for (std::size_t c = 0; c < data->classes; ++c) {
          double z = 0.0;
          for (std::size_t j = 0; j < data->hidden; ++j) z += th[j] * tw2[j * data->classes + c];
          logits[c] = z;
          if (z > logits[best]) best = c;
        }
        ys[s] = static_cast<int>(best);
      }
    };
    draw(static_cast<std::size_t>(samples), data->x, data->y);
    draw(std::max<std::size_t>(128, static_cast<std::size_t>(samples) / 4), data->eval_x,
         data->eval_y);
  }

  const std::uint64_t init_seed = mix_seed(seed, 0x571);
  Problem p;
  p.name = "mlp";
  p.layer_shapes = {{static_cast<std::size_t>(in_dim), static_cast<std::size_t>(hidden)},
                    {static_cast<std::size_t>(hidden)},
                    {static_cast<std::size_t>(hidden), static_cast<std::size_t>(classes)},
                    {static_cast<std::size_t>(classes)}};
  p.train_samples = static_cast<std::size_t>(samples);
  p.metric_kind = MetricKind::accuracy;

  p.initial_params = [data, init_seed, shapes = p.layer_shapes] {
    Rng rng(init_seed);
    std::vector<DenseMatrix> params;
    for (const auto& shape : shapes) {
      std::size_t total = 1;
      for (std::size_t s : shape) total *= s;
      std::vector<double> vals(total, 0.0);
      if (shape.size() > 1) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(shape[0]));
        for (double& v : vals) v = sd * rng.normal();
      }
      params.push_back(collapse_to_matrix(shape, std::move(vals)));
    }
    return params;
  };

  p.loss = [data](const std::vector<DenseMatrix>& params, std::span<const std::size_t> idx) {
    return detail::mlp_forward(*data, params, data->x, data->y, idx).loss;
  };

  p.grad = [data](const std::vector<DenseMatrix>& params, std::span<const std::size_t> idx) {
    const detail::MlpForward f = detail::mlp_forward(*data, params, data->x, data->y, idx);
    const DenseMatrix& w2 = params.at(2);
    const std::size_t batch = idx.size();
    const double inv = 1.0 / static_cast<double>(batch);

    DenseMatrix dw1(data->in_dim, data->hidden);
    DenseMatrix db1(1, data->hidden);
    DenseMatrix dw2(data->hidden, data->classes);
    DenseMatrix db2(1, data->classes);

    std::vector<double> dz2(data->classes), dz1(data->hidden);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xrow = &data->x[idx[b] * data->in_dim];
      const double* hrow = &f.h[b * data->hidden];
      for (std::size_t c = 0; c < data->classes; ++c) {
        dz2[c] = f.probs[b * data->classes + c];
        if (c == static_cast<std::size_t>(data->y[idx[b]])) dz2[c] -= 1.0;
        dz2[c] *= inv;
      }
      for (std::size_t c = 0; c < data->classes; ++c) {
        db2.data()[c] += dz2[c];
        for (std::size_t j = 0; j < data->hidden; ++j) dw2(j, c) += hrow[j] * dz2[c];
      }
      for (std::size_t j = 0; j < data->hidden; ++j) {
        double dh = 0.0;
        for (std::size_t c = 0; c < data->classes; ++c) dh += dz2[c] * w2(j, c);
        dz1[j] = dh * (1.0 - hrow[j] * hrow[j]);  // tanh'
        db1.data()[j] += dz1[j];
        for (std::size_t i = 0; i < data->in_dim; ++i) dw1(i, j) += xrow[i] * dz1[j];
      }
    }
    return std::vector<DenseMatrix>{std::move(dw1), std::move(db1), std::move(dw2),
                                    std::move(db2)};
  };

  p.metric = [data](const std::vector<DenseMatrix>& params) {
    const std::size_t count = data->eval_y.size();
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    const detail::MlpForward f =
        detail::mlp_forward(*data, params, data->eval_x, data->eval_y, idx);
    std::size_t hits = 0;
    for (std::size_t b = 0; b < count; ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < data->classes; ++c)
        if (f.probs[b * data->classes + c] > f.probs[b * data->classes + best]) best = c;
      if (best == static_cast<std::size_t>(data->eval_y[b])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(count);
  };

  p.full_train_loss = [data, samples](const std::vector<DenseMatrix>& params) {
    std::vector<std::size_t> all(static_cast<std::size_t>(samples));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return detail::mlp_forward(*data, params, data->x, data->y, all).loss;
  };
  return p;
}

inline Problem make_problem(const DatasetSpec& spec) {
  if (spec.kind == "quadratic") return make_quadratic(spec.dim, spec.cond, spec.seed);
  if (spec.kind == "logreg") return make_logreg(spec.samples, spec.dim, spec.seed);
  if (spec.kind == "mlp")
    return make_mlp(spec.in_dim, spec.hidden, spec.classes, spec.samples, spec.seed);
  throw ConfigError("make_problem: unknown problem kind '" + spec.kind + "'");
}

}  // namespace jorge
