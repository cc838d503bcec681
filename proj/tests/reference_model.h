// Copyright 2026 The dprel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPREL_TESTS_REFERENCE_MODEL_H_
#define DPREL_TESTS_REFERENCE_MODEL_H_

// Loop-level re-implementation of the encoder, the tuple losses and the
// training update. Shares no arithmetic with the library beyond reading
// parameter values, so agreement with it is evidence rather than tautology.

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "dprel/encoder.h"
#include "dprel/graph_store.h"
#include "dprel/objective.h"
#include "dprel/sampler.h"

namespace dprel::testing {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

struct RefBlock {
  Mat w, a, b;  // w: p x d, a: r x d, b: p x r
  Vec bias;
};

struct RefModel {
  bool adapter = false;
  double scale = 0.0;
  Mat embed;
  std::vector<RefBlock> blocks;
};

inline Mat ToMat(const RowMatrix& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

inline RowMatrix FromMat(const Mat& m) {
  RowMatrix out(m.size(), m.empty() ? 0 : m[0].size());
  for (size_t i = 0; i < m.size(); ++i) {
    for (size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
  }
  return out;
}

inline RefModel ToRef(const EncoderParams& p) {
  RefModel r;
  r.adapter = p.config().mode == TrainMode::kAdapter;
  r.scale = r.adapter ? p.config().alpha / p.config().rank : 0.0;
  r.embed = ToMat(p.embed());
  for (const DenseBlock& b : p.blocks()) {
    RefBlock rb;
    rb.w = ToMat(b.weight);
    rb.bias.assign(b.bias.data(), b.bias.data() + b.bias.size());
    if (r.adapter) {
      rb.a = ToMat(b.down);
      rb.b = ToMat(b.up);
    }
    r.blocks.push_back(std::move(rb));
  }
  return r;
}

// Trainable groups in library order, each as a matrix.
inline std::vector<Mat> Trainables(const RefModel& m) {
  std::vector<Mat> out;
  if (!m.adapter) out.push_back(m.embed);
  for (const RefBlock& b : m.blocks) {
    if (m.adapter) {
      out.push_back(b.a);
      out.push_back(b.b);
    } else {
      out.push_back(b.w);
      out.push_back(Mat{b.bias});
    }
  }
  return out;
}

inline void SetTrainables(RefModel& m, const std::vector<Mat>& groups) {
  size_t k = 0;
  if (!m.adapter) m.embed = groups[k++];
  for (RefBlock& b : m.blocks) {
    if (m.adapter) {
      b.a = groups[k++];
      b.b = groups[k++];
    } else {
      b.w = groups[k++];
      b.bias = groups[k++][0];
    }
  }
}

inline double EffW(const RefModel& m, const RefBlock& b, size_t i, size_t j) {
  double w = b.w[i][j];
  if (m.adapter) {
    for (size_t k = 0; k < b.a.size(); ++k) w += m.scale * b.b[i][k] * b.a[k][j];
  }
  return w;
}

// Per-token activations: xs[l] is the input of block l, xs.back() the output.
inline std::vector<Vec> TokenForward(const RefModel& m, TokenId tok) {
  std::vector<Vec> xs{m.embed[tok]};
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    const RefBlock& b = m.blocks[l];
    const Vec& x = xs.back();
    Vec o(b.w.size());
    for (size_t i = 0; i < o.size(); ++i) {
      double s = b.bias[i];
      for (size_t j = 0; j < x.size(); ++j) s += EffW(m, b, i, j) * x[j];
      o[i] = l + 1 < m.blocks.size() ? std::tanh(s) : s;
    }
    xs.push_back(std::move(o));
  }
  return xs;
}

inline Vec RefEncode(const RefModel& m, std::span<const TokenId> tokens) {
  Vec h;
  for (TokenId t : tokens) {
    const Vec out = TokenForward(m, t).back();
    if (h.empty()) h.assign(out.size(), 0.0);
    for (size_t i = 0; i < out.size(); ++i) h[i] += out[i];
  }
  for (double& x : h) x /= static_cast<double>(tokens.size());
  return h;
}

inline double Dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Loss value and d loss / d z with the positive first.
inline std::pair<double, Vec> RefLoss(const Vec& z, const LossConfig& cfg) {
  Vec dz(z.size(), 0.0);
  if (cfg.kind == LossKind::kInfoNce) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp((v - mx) / cfg.temperature);
    const double loss =
        -((z[0] - mx) / cfg.temperature - std::log(sum));
    for (size_t i = 0; i < z.size(); ++i) {
      dz[i] = std::exp((z[i] - mx) / cfg.temperature) / sum / cfg.temperature;
    }
    dz[0] -= 1.0 / cfg.temperature;
    return {loss, dz};
  }
  double loss = 0.0;
  for (size_t j = 1; j < z.size(); ++j) {
    const double v = cfg.margin + z[j] - z[0];
    if (v > 0) {
      loss += v;
      dz[j] += 1.0;
      dz[0] -= 1.0;
    }
  }
  return {loss, dz};
}

inline double RefTupleLoss(const RefModel& m, const TextAttributedGraph& g,
                           const RelationTuple& t, const LossConfig& cfg) {
  const Vec ha = RefEncode(m, g.attributes(t.anchor()).real());
  Vec z{Dot(ha, RefEncode(m, g.attributes(t.partner()).real()))};
  for (EntityId v : t.negatives) {
    z.push_back(Dot(ha, RefEncode(m, g.attributes(v).real())));
  }
  return RefLoss(z, cfg).first;
}

inline std::vector<Mat> ZerosLike(const std::vector<Mat>& groups) {
  std::vector<Mat> out;
  for (const Mat& g : groups) out.emplace_back(g.size(), Vec(g[0].size(), 0.0));
  return out;
}

// Backpropagates `dh` (gradient wrt the pooled embedding) into `grads`.
inline void RefBackwardEntity(const RefModel& m,
                              std::span<const TokenId> tokens, const Vec& dh,
                              std::vector<Mat>& grads) {
  const size_t nb = m.blocks.size();
  for (TokenId tok : tokens) {
    const std::vector<Vec> xs = TokenForward(m, tok);
    Vec d(dh.size());
    for (size_t i = 0; i < d.size(); ++i) {
      d[i] = dh[i] / static_cast<double>(tokens.size());
    }
    for (size_t l = nb; l-- > 0;) {
      const RefBlock& b = m.blocks[l];
      const Vec& x = xs[l];
      const Vec& y = xs[l + 1];
      Vec dpre(d.size());
      for (size_t i = 0; i < d.size(); ++i) {
        dpre[i] = l + 1 < nb ? d[i] * (1.0 - y[i] * y[i]) : d[i];
      }
      const size_t g0 = m.adapter ? 2 * l : 1 + 2 * l;
      if (m.adapter) {
        const size_t r = b.a.size();
        Vec u(r, 0.0), du(r, 0.0);
        for (size_t k = 0; k < r; ++k) {
          for (size_t j = 0; j < x.size(); ++j) u[k] += b.a[k][j] * x[j];
        }
        for (size_t i = 0; i < dpre.size(); ++i) {
          for (size_t k = 0; k < r; ++k) {
            grads[g0 + 1][i][k] += m.scale * dpre[i] * u[k];
            du[k] += m.scale * b.b[i][k] * dpre[i];
          }
        }
        for (size_t k = 0; k < r; ++k) {
          for (size_t j = 0; j < x.size(); ++j) grads[g0][k][j] += du[k] * x[j];
        }
      } else {
        for (size_t i = 0; i < dpre.size(); ++i) {
          for (size_t j = 0; j < x.size(); ++j) {
            grads[g0][i][j] += dpre[i] * x[j];
          }
          grads[g0 + 1][0][i] += dpre[i];
        }
      }
      Vec dx(x.size(), 0.0);
      for (size_t j = 0; j < x.size(); ++j) {
        for (size_t i = 0; i < dpre.size(); ++i) {
          dx[j] += EffW(m, b, i, j) * dpre[i];
        }
      }
      d = std::move(dx);
    }
    if (!m.adapter) {
      for (size_t j = 0; j < d.size(); ++j) grads[0][tok][j] += d[j];
    }
  }
}

// Tuple gradient with every relation's endpoints treated as separate slots:
// the anchor is backpropagated once per relation it takes part in.
inline std::vector<Mat> RefTupleGrad(const RefModel& m,
                                     const TextAttributedGraph& g,
                                     const RelationTuple& t,
                                     const LossConfig& cfg,
                                     double* loss = nullptr) {
  const auto anchor = g.attributes(t.anchor()).real();
  const Vec ha = RefEncode(m, anchor);
  std::vector<EntityId> others{t.partner()};
  others.insert(others.end(), t.negatives.begin(), t.negatives.end());
  std::vector<Vec> hs;
  Vec z;
  for (EntityId e : others) {
    hs.push_back(RefEncode(m, g.attributes(e).real()));
    z.push_back(Dot(ha, hs.back()));
  }
  auto [value, dz] = RefLoss(z, cfg);
  if (loss) *loss = value;
  std::vector<Mat> grads = ZerosLike(Trainables(m));
  for (size_t i = 0; i < others.size(); ++i) {
    Vec da(ha.size()), dother(ha.size());
    for (size_t j = 0; j < ha.size(); ++j) {
      da[j] = dz[i] * hs[i][j];
      dother[j] = dz[i] * ha[j];
    }
    RefBackwardEntity(m, anchor, da, grads);
    RefBackwardEntity(m, g.attributes(others[i]).real(), dother, grads);
  }
  return grads;
}

inline double SquaredNorm(const std::vector<Mat>& groups) {
  double s = 0.0;
  for (const Mat& g : groups) {
    for (const Vec& row : g) {
      for (double x : row) s += x * x;
    }
  }
  return s;
}

struct RefTrainOptions {
  double clip = INFINITY;
  int expected_batch = 1;
  bool adam = true;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain (noise-free) loop: mean of clipped tuple gradients with divisor b,
// then SGD or Adam. `batches[t]` is the batch of step t + 1.
inline RefModel RefTrain(RefModel m, const TextAttributedGraph& g,
                         const std::vector<Batch>& batches,
                         const LossConfig& cfg, const RefTrainOptions& opt) {
  std::vector<Mat> mom = ZerosLike(Trainables(m));
  std::vector<Mat> vel = ZerosLike(Trainables(m));
  for (size_t t = 0; t < batches.size(); ++t) {
    std::vector<Mat> sum = ZerosLike(Trainables(m));
    for (const RelationTuple& tuple : batches[t].tuples) {
      std::vector<Mat> gt = RefTupleGrad(m, g, tuple, cfg);
      const double norm = std::sqrt(SquaredNorm(gt));
      const double f = norm > opt.clip ? opt.clip / norm : 1.0;
      for (size_t k = 0; k < gt.size(); ++k) {
        for (size_t i = 0; i < gt[k].size(); ++i) {
          for (size_t j = 0; j < gt[k][i].size(); ++j) {
            sum[k][i][j] += f * gt[k][i][j];
          }
        }
      }
    }
    std::vector<Mat> theta = Trainables(m);
    const double step = static_cast<double>(t + 1);
    for (size_t k = 0; k < theta.size(); ++k) {
      for (size_t i = 0; i < theta[k].size(); ++i) {
        for (size_t j = 0; j < theta[k][i].size(); ++j) {
          const double gr = sum[k][i][j] / opt.expected_batch;
          if (!opt.adam) {
            theta[k][i][j] -= opt.lr * gr;
            continue;
          }
          double& mm = mom[k][i][j];
          double& vv = vel[k][i][j];
          mm = opt.beta1 * mm + (1 - opt.beta1) * gr;
          vv = opt.beta2 * vv + (1 - opt.beta2) * gr * gr;
          const double mh = mm / (1 - std::pow(opt.beta1, step));
          const double vh = vv / (1 - std::pow(opt.beta2, step));
          theta[k][i][j] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
        }
      }
    }
    SetTrainables(m, theta);
  }
  return m;
}

}  // namespace dprel::testing

#endif  // DPREL_TESTS_REFERENCE_MODEL_H_
