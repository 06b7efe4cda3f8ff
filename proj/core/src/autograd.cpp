#include "mmcse/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "mmcse/error.hpp"
#include "mmcse/kernels.hpp"

namespace mmcse {

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape()) {}

void Parameter::accumulate_grad(const Tensor& g) {
  if (g.shape() != value_.shape()) {
    throw DimensionError("gradient " + shape_string(g.shape()) + " for parameter '" + name_ + "' of shape " +
                         shape_string(value_.shape()));
  }
  auto dst = grad_.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  has_grad_ = true;
}

void Parameter::zero_grad() {
  grad_.fill(0.0);
  has_grad_ = false;
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

namespace ag {

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make_op(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
  }
  return Var(std::move(node));
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.value().shape() != b.value().shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.value().shape()) + " and " +
                         shape_string(b.value().shape()));
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

}  // namespace

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var param(Parameter& p) {
  if (!g_grad_enabled) return constant(p.value());
  auto node = std::make_shared<Node>();
  node->value = p.value();
  node->parameter = &p;
  node->requires_grad = true;
  return Var(std::move(node));
}

std::vector<Parameter*> backward(const Var& loss) {
  if (!loss.defined() || !loss.requires_grad()) {
    throw NoGraphError("backward() called on a value that does not depend on any parameter");
  }
  if (loss.value().size() != 1) {
    throw DimensionError("backward() needs a scalar, got " + shape_string(loss.value().shape()));
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad = Tensor();
  loss.node()->grad_buffer()[0] = 1.0;

  std::vector<Parameter*> reached;
  std::unordered_set<Parameter*> seen;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.empty()) n->grad_buffer();
    if (n->backprop) n->backprop(*n);
    if (n->parameter) {
      n->parameter->accumulate_grad(n->grad);
      if (seen.insert(n->parameter).second) reached.push_back(n->parameter);
    }
  }
  for (Node* n : order) n->grad = Tensor();
  return reached;
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = mmcse::matmul(a.value(), b.value());
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) gemm(self.grad, false, bn->value, true, an->grad_buffer(), true);
    if (bn->requires_grad) gemm(an->value, true, self.grad, false, bn->grad_buffer(), true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tensor out = mmcse::matmul_nt(a.value(), b.value());
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) gemm(self.grad, false, bn->value, false, an->grad_buffer(), true);
    if (bn->requires_grad) gemm(self.grad, true, an->value, false, bn->grad_buffer(), true);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  add_into(out, b.value());
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) add_into(an->grad_buffer(), self.grad);
    if (bn->requires_grad) add_into(bn->grad_buffer(), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) add_into(an->grad_buffer(), self.grad);
    if (bn->requires_grad) {
      auto g = bn->grad_buffer().values();
      auto s = self.grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s[i];
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {an, bn}, [an, bn](Node& self) {
    auto s = self.grad.values();
    if (an->requires_grad) {
      auto g = an->grad_buffer().values();
      auto bv = bn->value.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * bv[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer().values();
      auto av = an->value.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  auto an = a.node();
  return make_op(std::move(out), {an}, [an, factor](Node& self) {
    auto g = an->grad_buffer().values();
    auto s = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * s[i];
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require_matrix(x.value(), "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.value().shape()) + " for rows of width " +
                         std::to_string(n));
  }
  Tensor out = x.value();
  const auto& b = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < n; ++c) row[c] += b[c];
  }
  auto xn = x.node(), bn = bias.node();
  return make_op(std::move(out), {xn, bn}, [xn, bn, m, n](Node& self) {
    if (xn->requires_grad) add_into(xn->grad_buffer(), self.grad);
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        auto s = self.grad.row(r);
        for (std::size_t c = 0; c < n; ++c) g[c] += s[c];
      }
    }
  });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = mmcse::gelu(v);
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn](Node& self) {
    auto g = xn->grad_buffer().values();
    auto in = xn->value.values();
    auto s = self.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * gelu_derivative(in[i]);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t m = xv.rows(), h = xv.cols();
  if (h < 2) throw DimensionError("layer_norm needs at least 2 features");
  if (gain.value().size() != h || bias.value().size() != h) {
    throw DimensionError("layer_norm: gain/bias size does not match width " + std::to_string(h));
  }
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(m);
  Tensor out(xv.shape());
  const auto& g = gain.value();
  const auto& b = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(h);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto nrow = normalized.row(r);
    auto orow = out.row(r);
    for (std::size_t c = 0; c < h; ++c) {
      nrow[c] = (in[c] - mean) * inv_std[r];
      orow[c] = nrow[c] * g[c] + b[c];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_op(std::move(out), {xn, gn, bn},
                 [xn, gn, bn, normalized = std::move(normalized), inv_std = std::move(inv_std), m, h](Node& self) {
                   const auto& gv = gn->value;
                   std::vector<double> dxhat(h);
                   for (std::size_t r = 0; r < m; ++r) {
                     auto s = self.grad.row(r);
                     auto xh = normalized.row(r);
                     if (gn->requires_grad) {
                       auto& gg = gn->grad_buffer();
                       for (std::size_t c = 0; c < h; ++c) gg[c] += s[c] * xh[c];
                     }
                     if (bn->requires_grad) {
                       auto& bg = bn->grad_buffer();
                       for (std::size_t c = 0; c < h; ++c) bg[c] += s[c];
                     }
                     if (xn->requires_grad) {
                       double mean_d = 0.0, mean_dx = 0.0;
                       for (std::size_t c = 0; c < h; ++c) {
                         dxhat[c] = s[c] * gv[c];
                         mean_d += dxhat[c];
                         mean_dx += dxhat[c] * xh[c];
                       }
                       mean_d /= static_cast<double>(h);
                       mean_dx /= static_cast<double>(h);
                       auto dx = xn->grad_buffer().row(r);
                       for (std::size_t c = 0; c < h; ++c) {
                         dx[c] += inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                       }
                     }
                   }
                 });
}

Var softmax_rows(const Var& x) {
  Tensor out = mmcse::softmax_rows(x.value());
  auto xn = x.node();
  return make_op(out, {xn}, [xn, out](Node& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto p = out.row(r);
      auto s = self.grad.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * s[c];
      auto d = g.row(r);
      for (std::size_t c = 0; c < p.size(); ++c) d[c] += p[c] * (s[c] - dot);
    }
  });
}

Var dropout(const Var& x, const Tensor& mask) {
  if (mask.shape() != x.value().shape()) {
    throw DimensionError("dropout mask " + shape_string(mask.shape()) + " for input " +
                         shape_string(x.value().shape()));
  }
  return hadamard(x, constant(mask));
}

Var gather_rows(const Var& x, std::vector<std::size_t> index) {
  const Tensor& xv = x.value();
  require_matrix(xv, "gather_rows");
  const std::size_t n = xv.cols();
  for (auto i : index) {
    if (i >= xv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " +
                           std::to_string(xv.rows()) + " rows");
    }
  }
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  Tensor out({index.size(), n});
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(xv.data() + index[r] * n, n, out.data() + r * n);
  }
  auto xn = x.node();
  return make_op(std::move(out), {xn}, [xn, index = std::move(index), n](Node& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < index.size(); ++r) {
      double* dst = g.data() + index[r] * n;
      const double* src = self.grad.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
    }
  });
}

Var concat_rows(const Var& a, const Var& b) {
  require_matrix(a.value(), "concat_rows");
  require_matrix(b.value(), "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: widths " + std::to_string(a.cols()) + " and " + std::to_string(b.cols()));
  }
  const std::size_t ra = a.rows(), rb = b.rows(), n = a.cols();
  std::vector<double> data;
  data.reserve((ra + rb) * n);
  data.insert(data.end(), a.value().storage().begin(), a.value().storage().end());
  data.insert(data.end(), b.value().storage().begin(), b.value().storage().end());
  auto an = a.node(), bn = b.node();
  return make_op(Tensor({ra + rb, n}, std::move(data)), {an, bn}, [an, bn, ra, rb, n](Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer().values();
      for (std::size_t i = 0; i < ra * n; ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer().values();
      for (std::size_t i = 0; i < rb * n; ++i) g[i] += self.grad[ra * n + i];
    }
  });
}

Var l2_normalize_rows(const Var& x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "l2_normalize_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    auto in = xv.row(r);
    double sq = 0.0;
    for (double v : in) sq += v * v;
    if (sq == 0.0) throw DegenerateInputError("zero-norm representation row " + std::to_string(r));
    norms[r] = std::sqrt(sq);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) o[c] = in[c] / norms[r];
  }
  auto xn = x.node();
  return make_op(out, {xn}, [xn, out, norms = std::move(norms), m, n](Node& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      auto y = out.row(r);
      auto s = self.grad.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * s[c];
      auto d = g.row(r);
      for (std::size_t c = 0; c < n; ++c) d[c] += (s[c] - y[c] * dot) / norms[r];
    }
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  auto xn = x.node();
  return make_op(Tensor::scalar(total), {xn}, [xn](Node& self) {
    const double s = self.grad[0];
    for (auto& g : xn->grad_buffer().values()) g += s;
  });
}

Var self_attention(const Var& qkv, const AttentionLayout& layout, const std::optional<Tensor>& prob_mask) {
  const Tensor& in = qkv.value();
  require_matrix(in, "self_attention");
  const std::size_t B = layout.batch, L = layout.seq_len, H = layout.heads;
  if (in.rows() != B * L || in.cols() % 3 != 0) {
    throw DimensionError("self_attention: packed input " + shape_string(in.shape()) + " for batch " +
                         std::to_string(B) + " x seq " + std::to_string(L));
  }
  const std::size_t h = in.cols() / 3;
  if (H == 0 || h % H != 0) throw DimensionError("self_attention: width not divisible by head count");
  if (layout.lengths.size() != B) throw DimensionError("self_attention: lengths do not match batch");
  for (auto len : layout.lengths) {
    if (len == 0 || len > L) throw DimensionError("self_attention: invalid sequence length");
  }
  if (prob_mask && (prob_mask->rank() != 2 || prob_mask->rows() != B * H * L || prob_mask->cols() != L)) {
    throw DimensionError("self_attention: probability mask has shape " + shape_string(prob_mask->shape()));
  }
  const std::size_t d = h / H;
  const std::size_t stride = 3 * h;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor probs({B * H * L, L});
  Tensor out({B * L, h});
  std::vector<double> scores(L);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = layout.lengths[b];
    const double* base = in.data() + b * L * stride;
    for (std::size_t hd = 0; hd < H; ++hd) {
      const std::size_t qo = hd * d, ko = h + hd * d, vo = 2 * h + hd * d;
      for (std::size_t i = 0; i < L; ++i) {
        const double* q = base + i * stride + qo;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          const double* k = base + j * stride + ko;
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += q[c] * k[c];
          scores[j] = s * scale_factor;
          mx = std::max(mx, scores[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          total += scores[j];
        }
        const std::size_t prow = (b * H + hd) * L + i;
        double* p = probs.data() + prow * L;
        const double* mrow = prob_mask ? prob_mask->data() + prow * L : nullptr;
        double* o = out.data() + (b * L + i) * h + hd * d;
        for (std::size_t j = 0; j < len; ++j) {
          p[j] = scores[j] / total;
          const double w = mrow ? p[j] * mrow[j] : p[j];
          if (w == 0.0) continue;
          const double* v = base + j * stride + vo;
          for (std::size_t c = 0; c < d; ++c) o[c] += w * v[c];
        }
      }
    }
  }

  auto xn = qkv.node();
  std::optional<Tensor> mask = prob_mask;
  return make_op(std::move(out), {xn},
                 [xn, probs = std::move(probs), mask = std::move(mask), lengths = layout.lengths, B, L, H, h, d,
                  stride, scale_factor](Node& self) {
                   const Tensor& in = xn->value;
                   Tensor& g = xn->grad_buffer();
                   std::vector<double> dp(L);
                   for (std::size_t b = 0; b < B; ++b) {
                     const std::size_t len = lengths[b];
                     const double* base = in.data() + b * L * stride;
                     double* gbase = g.data() + b * L * stride;
                     for (std::size_t hd = 0; hd < H; ++hd) {
                       const std::size_t qo = hd * d, ko = h + hd * d, vo = 2 * h + hd * d;
                       for (std::size_t i = 0; i < L; ++i) {
                         const std::size_t prow = (b * H + hd) * L + i;
                         const double* p = probs.data() + prow * L;
                         const double* mrow = mask ? mask->data() + prow * L : nullptr;
                         const double* dout = self.grad.data() + (b * L + i) * h + hd * d;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < len; ++j) {
                           const double* v = base + j * stride + vo;
                           double dpj = 0.0;
                           for (std::size_t c = 0; c < d; ++c) dpj += dout[c] * v[c];
                           const double m = mrow ? mrow[j] : 1.0;
                           const double w = p[j] * m;
                           if (w != 0.0) {
                             double* dv = gbase + j * stride + vo;
                             for (std::size_t c = 0; c < d; ++c) dv[c] += w * dout[c];
                           }
                           dp[j] = dpj * m;
                           dot += p[j] * dp[j];
                         }
                         const double* q = base + i * stride + qo;
                         double* dq = gbase + i * stride + qo;
                         for (std::size_t j = 0; j < len; ++j) {
                           const double ds = p[j] * (dp[j] - dot) * scale_factor;
                           if (ds == 0.0) continue;
                           const double* k = base + j * stride + ko;
                           double* dk = gbase + j * stride + ko;
                           for (std::size_t c = 0; c < d; ++c) {
                             dq[c] += ds * k[c];
                             dk[c] += ds * q[c];
                           }
                         }
                       }
                     }
                   }
                 });
}

Var contrastive_log_ratio(const Var& logits, std::vector<unsigned char> numerator_mask,
                          std::vector<unsigned char> denominator_mask) {
  const Tensor& z = logits.value();
  require_matrix(z, "contrastive_log_ratio");
  const std::size_t N = z.rows(), M = z.cols();
  if (numerator_mask.size() != N * M || denominator_mask.size() != N * M) {
    throw DimensionError("contrastive_log_ratio: mask size does not match logits " + shape_string(z.shape()));
  }
  // Softmax weights over each set, kept for the backward pass.
  Tensor num_w({N, M});
  Tensor den_w({N, M});
  Tensor out({N});
  auto masked_lse = [&](std::size_t r, const std::vector<unsigned char>& mask, Tensor& weights) {
    auto zr = z.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < M; ++j) {
      if (mask[r * M + j]) {
        mx = std::max(mx, zr[j]);
        any = true;
      }
    }
    if (!any) throw EmptyDenominatorError("contrastive row " + std::to_string(r) + " has an empty term set");
    double total = 0.0;
    auto w = weights.row(r);
    for (std::size_t j = 0; j < M; ++j) {
      if (mask[r * M + j]) {
        w[j] = std::exp(zr[j] - mx);
        total += w[j];
      }
    }
    for (std::size_t j = 0; j < M; ++j) w[j] /= total;
    return mx + std::log(total);
  };
  for (std::size_t r = 0; r < N; ++r) {
    const double den = masked_lse(r, denominator_mask, den_w);
    const double num = masked_lse(r, numerator_mask, num_w);
    out[r] = den - num;
  }
  auto zn = logits.node();
  return make_op(std::move(out), {zn},
                 [zn, num_w = std::move(num_w), den_w = std::move(den_w), N, M](Node& self) {
                   auto& g = zn->grad_buffer();
                   for (std::size_t r = 0; r < N; ++r) {
                     const double s = self.grad[r];
                     auto gr = g.row(r);
                     auto nw = num_w.row(r);
                     auto dw = den_w.row(r);
                     for (std::size_t j = 0; j < M; ++j) gr[j] += s * (dw[j] - nw[j]);
                   }
                 });
}

}  // namespace ag
}  // namespace mmcse
