#include "umd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace umd::ad {

namespace {

bool any_grad(const std::vector<Var>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

// Shapes must match, or one side is a scalar that broadcasts.
void check_binary(const Var& a, const Var& b, const char* op) {
  if (a->val.numel() == 1 || b->val.numel() == 1) return;
  UMD_REQUIRE(a->val.same_shape(b->val),
              std::string(op) + ": shape mismatch");
}

double bval(const Tensor& t, size_t i) { return t.numel() == 1 ? t[0] : t[i]; }

// Accumulates g into p's grad, reducing over the broadcast if p is scalar.
void scatter(Node& p, const Tensor& g) {
  if (!p.requires_grad) return;
  Tensor& pg = p.ensure_grad();
  if (pg.numel() == 1 && g.numel() > 1) {
    double s = 0.0;
    for (size_t i = 0; i < g.numel(); ++i) s += g[i];
    pg[0] += s;
  } else {
    for (size_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
  }
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->requires_grad = requires_grad;
  n->op = "leaf";
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }
Var constant(double scalar) { return leaf(Tensor::scalar(scalar), false); }

Var detach(const Var& x) { return constant(x->val); }

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backfn, const char* op) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->requires_grad = any_grad(parents);
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  n->op = op;
  return n;
}

void backward(const Var& root) {
  UMD_REQUIRE(root->val.numel() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;
  // Post-order DFS, then reverse for the accumulation sweep.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  std::unordered_set<Node*> seen;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior grads are per-sweep scratch; only leaves accumulate across
  // backward calls (e.g. two loss graphs sharing parameters).
  for (Node* n : order)
    if (n->backfn) n->grad = Tensor();
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backfn && !n->grad.empty()) n->backfn(*n);
  }
}

void zero_grad(const std::vector<Var>& leaves) {
  for (const auto& v : leaves) v->grad = Tensor();
}

// Elementwise -----------------------------------------------------------------

namespace {

Var binary(const Var& a, const Var& b, const char* op,
           double (*fwd)(double, double),
           void (*bwd)(double x, double y, double g, double& dx, double& dy)) {
  check_binary(a, b, op);
  const Tensor& av = a->val;
  const Tensor& bv = b->val;
  Tensor out(av.numel() >= bv.numel() ? av.shape() : bv.shape());
  for (size_t i = 0; i < out.numel(); ++i)
    out[i] = fwd(bval(av, i), bval(bv, i));
  return make_node(
      std::move(out), {a, b},
      [bwd](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        Tensor ga(n.grad.shape()), gb(n.grad.shape());
        for (size_t i = 0; i < n.grad.numel(); ++i) {
          double dx = 0, dy = 0;
          bwd(bval(pa.val, i), bval(pb.val, i), n.grad[i], dx, dy);
          ga[i] = dx;
          gb[i] = dy;
        }
        scatter(pa, ga);
        scatter(pb, gb);
      },
      op);
}

Var unary(const Var& a, const char* op, double (*fwd)(double),
          double (*dfdx)(double x, double y)) {
  Tensor out(a->val.shape());
  for (size_t i = 0; i < out.numel(); ++i) out[i] = fwd(a->val[i]);
  return make_node(
      std::move(out), {a},
      [dfdx](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < n.grad.numel(); ++i)
          pg[i] += n.grad[i] * dfdx(p.val[i], n.val[i]);
      },
      op);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double, double g, double& dx, double& dy) {
                  dx = g;
                  dy = g;
                });
}
Var sub(const Var& a, const Var& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double, double g, double& dx, double& dy) {
                  dx = g;
                  dy = -g;
                });
}
Var mul(const Var& a, const Var& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double x, double y, double g, double& dx, double& dy) {
                  dx = g * y;
                  dy = g * x;
                });
}
Var div(const Var& a, const Var& b) {
  return binary(a, b, "div", [](double x, double y) { return x / y; },
                [](double x, double y, double g, double& dx, double& dy) {
                  dx = g / y;
                  dy = -g * x / (y * y);
                });
}

Var neg(const Var& a) {
  return unary(a, "neg", [](double x) { return -x; },
               [](double, double) { return -1.0; });
}
Var abs(const Var& a) {
  return unary(a, "abs", [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
Var log(const Var& a) {
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}
Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}
Var sqrt(const Var& a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}
Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}
Var sigmoid(const Var& a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}
Var relu(const Var& a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor out(a->val.shape());
  for (size_t i = 0; i < out.numel(); ++i)
    out[i] = std::min(hi, std::max(lo, a->val[i]));
  return make_node(
      std::move(out), {a},
      [lo, hi](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < n.grad.numel(); ++i)
          if (p.val[i] >= lo && p.val[i] <= hi) pg[i] += n.grad[i];
      },
      "clamp");
}

Var cmin(const Var& a, const Var& b) {
  return binary(a, b, "cmin", [](double x, double y) { return x <= y ? x : y; },
                [](double x, double y, double g, double& dx, double& dy) {
                  (x <= y ? dx : dy) = g;
                });
}
Var cmax(const Var& a, const Var& b) {
  return binary(a, b, "cmax", [](double x, double y) { return x >= y ? x : y; },
                [](double x, double y, double g, double& dx, double& dy) {
                  (x >= y ? dx : dy) = g;
                });
}

Var select(const Tensor& mask, const Var& a, const Var& b) {
  UMD_REQUIRE(mask.same_shape(a->val) && mask.same_shape(b->val),
              "select: shape mismatch");
  Tensor out(mask.shape());
  for (size_t i = 0; i < out.numel(); ++i)
    out[i] = mask[i] != 0.0 ? a->val[i] : b->val[i];
  Tensor m = mask;
  return make_node(
      std::move(out), {a, b},
      [m](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
          Tensor& g = pa.ensure_grad();
          for (size_t i = 0; i < n.grad.numel(); ++i)
            if (m[i] != 0.0) g[i] += n.grad[i];
        }
        if (pb.requires_grad) {
          Tensor& g = pb.ensure_grad();
          for (size_t i = 0; i < n.grad.numel(); ++i)
            if (m[i] == 0.0) g[i] += n.grad[i];
        }
      },
      "select");
}

// Reductions and shape --------------------------------------------------------

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a->val.sum());
  return make_node(
      std::move(out), {a},
      [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[0];
      },
      "sum");
}

Var mean(const Var& a) {
  double inv = 1.0 / double(a->val.numel());
  Tensor out = Tensor::scalar(a->val.sum() * inv);
  return make_node(
      std::move(out), {a},
      [inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[0] * inv;
      },
      "mean");
}

Var sum_lastdim(const Var& a) {
  const Shape& s = a->val.shape();
  UMD_REQUIRE(s.size() >= 2, "sum_lastdim: rank must be >= 2");
  int c = s.back();
  Shape os(s.begin(), s.end() - 1);
  Tensor out(os);
  for (size_t i = 0; i < out.numel(); ++i) {
    double acc = 0;
    for (int k = 0; k < c; ++k) acc += a->val[i * c + k];
    out[i] = acc;
  }
  return make_node(
      std::move(out), {a},
      [c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < n.grad.numel(); ++i)
          for (int k = 0; k < c; ++k) pg[i * c + k] += n.grad[i];
      },
      "sum_lastdim");
}

Var expand_lastdim(const Var& a, int c) {
  Shape os = a->val.shape();
  os.push_back(c);
  Tensor out(os);
  for (size_t i = 0; i < a->val.numel(); ++i)
    for (int k = 0; k < c; ++k) out[i * c + k] = a->val[i];
  return make_node(
      std::move(out), {a},
      [c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < pg.numel(); ++i) {
          double acc = 0;
          for (int k = 0; k < c; ++k) acc += n.grad[i * c + k];
          pg[i] += acc;
        }
      },
      "expand_lastdim");
}

Var concat_lastdim(const std::vector<Var>& parts) {
  UMD_REQUIRE(!parts.empty(), "concat_lastdim: empty input");
  Shape base = parts[0]->val.shape();
  int ctot = 0;
  std::vector<int> cs;
  for (const auto& p : parts) {
    const Shape& s = p->val.shape();
    UMD_REQUIRE(s.size() == base.size(), "concat_lastdim: rank mismatch");
    for (size_t d = 0; d + 1 < s.size(); ++d)
      UMD_REQUIRE(s[d] == base[d], "concat_lastdim: leading dims mismatch");
    cs.push_back(s.back());
    ctot += s.back();
  }
  Shape os = base;
  os.back() = ctot;
  Tensor out(os);
  size_t rows = out.numel() / ctot;
  for (size_t r = 0; r < rows; ++r) {
    int off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const Tensor& pv = parts[pi]->val;
      for (int k = 0; k < cs[pi]; ++k)
        out[r * ctot + off + k] = pv[r * cs[pi] + k];
      off += cs[pi];
    }
  }
  return make_node(
      std::move(out), std::vector<Var>(parts),
      [cs, ctot, rows](Node& n) {
        int off = 0;
        for (size_t pi = 0; pi < n.parents.size(); ++pi) {
          Node& p = *n.parents[pi];
          if (p.requires_grad) {
            Tensor& pg = p.ensure_grad();
            for (size_t r = 0; r < rows; ++r)
              for (int k = 0; k < cs[pi]; ++k)
                pg[r * cs[pi] + k] += n.grad[r * ctot + off + k];
          }
          off += cs[pi];
        }
      },
      "concat_lastdim");
}

Var slice_lastdim(const Var& a, int from, int to) {
  const Shape& s = a->val.shape();
  int c = s.back();
  UMD_REQUIRE(0 <= from && from < to && to <= c, "slice_lastdim: bad range");
  Shape os = s;
  os.back() = to - from;
  Tensor out(os);
  size_t rows = a->val.numel() / c;
  int w = to - from;
  for (size_t r = 0; r < rows; ++r)
    for (int k = 0; k < w; ++k) out[r * w + k] = a->val[r * c + from + k];
  return make_node(
      std::move(out), {a},
      [from, c, w, rows](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t r = 0; r < rows; ++r)
          for (int k = 0; k < w; ++k) pg[r * c + from + k] += n.grad[r * w + k];
      },
      "slice_lastdim");
}

Var index(const Var& a, size_t i) {
  UMD_REQUIRE(i < a->val.numel(), "index: out of range");
  Tensor out = Tensor::scalar(a->val[i]);
  return make_node(
      std::move(out), {a},
      [i](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad()[i] += n.grad[0];
      },
      "index");
}

Var reshape(const Var& a, Shape shape) {
  Tensor out(shape);
  UMD_REQUIRE(out.numel() == a->val.numel(), "reshape: numel mismatch");
  for (size_t i = 0; i < out.numel(); ++i) out[i] = a->val[i];
  return make_node(
      std::move(out), {a},
      [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[i];
      },
      "reshape");
}

Var tensordot_lastdim(const Var& p, const Var& w) {
  const Shape& s = p->val.shape();
  int c = s.back();
  UMD_REQUIRE(w->val.ndim() == 1 && w->val.dim(0) == c,
              "tensordot_lastdim: weight length mismatch");
  Shape os(s.begin(), s.end() - 1);
  Tensor out(os);
  for (size_t r = 0; r < out.numel(); ++r) {
    double acc = 0;
    for (int k = 0; k < c; ++k) acc += p->val[r * c + k] * w->val[k];
    out[r] = acc;
  }
  return make_node(
      std::move(out), {p, w},
      [c](Node& n) {
        Node& pp = *n.parents[0];
        Node& pw = *n.parents[1];
        if (pp.requires_grad) {
          Tensor& g = pp.ensure_grad();
          for (size_t r = 0; r < n.grad.numel(); ++r)
            for (int k = 0; k < c; ++k) g[r * c + k] += n.grad[r] * pw.val[k];
        }
        if (pw.requires_grad) {
          Tensor& g = pw.ensure_grad();
          for (size_t r = 0; r < n.grad.numel(); ++r)
            for (int k = 0; k < c; ++k) g[k] += n.grad[r] * pp.val[r * c + k];
        }
      },
      "tensordot_lastdim");
}

// Spatial ---------------------------------------------------------------------

namespace {
inline int clampi(int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); }
}  // namespace

Var shift2d(const Var& a, int dy, int dx) {
  const Shape& s = a->val.shape();
  UMD_REQUIRE(s.size() == 2 || s.size() == 3, "shift2d: rank must be 2 or 3");
  int h = s[0], w = s[1], c = s.size() == 3 ? s[2] : 1;
  Tensor out(s);
  for (int y = 0; y < h; ++y) {
    int sy = clampi(y + dy, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      int sx = clampi(x + dx, 0, w - 1);
      for (int k = 0; k < c; ++k)
        out[(size_t(y) * w + x) * c + k] = a->val[(size_t(sy) * w + sx) * c + k];
    }
  }
  return make_node(
      std::move(out), {a},
      [h, w, c, dy, dx](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (int y = 0; y < h; ++y) {
          int sy = clampi(y + dy, 0, h - 1);
          for (int x = 0; x < w; ++x) {
            int sx = clampi(x + dx, 0, w - 1);
            for (int k = 0; k < c; ++k)
              pg[(size_t(sy) * w + sx) * c + k] +=
                  n.grad[(size_t(y) * w + x) * c + k];
          }
        }
      },
      "shift2d");
}

Var box_filter(const Var& a, int window) {
  UMD_REQUIRE(window >= 1 && window % 2 == 1, "box_filter: window must be odd");
  const Shape& s = a->val.shape();
  UMD_REQUIRE(s.size() == 2 || s.size() == 3, "box_filter: rank must be 2 or 3");
  int h = s[0], w = s[1], c = s.size() == 3 ? s[2] : 1;
  int r = window / 2;
  double inv = 1.0 / double(window * window);
  Tensor out(s);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        double acc = 0;
        for (int oy = -r; oy <= r; ++oy) {
          int sy = clampi(y + oy, 0, h - 1);
          for (int ox = -r; ox <= r; ++ox) {
            int sx = clampi(x + ox, 0, w - 1);
            acc += a->val[(size_t(sy) * w + sx) * c + k];
          }
        }
        out[(size_t(y) * w + x) * c + k] = acc * inv;
      }
  return make_node(
      std::move(out), {a},
      [h, w, c, r, inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k) {
              double g = n.grad[(size_t(y) * w + x) * c + k] * inv;
              for (int oy = -r; oy <= r; ++oy) {
                int sy = clampi(y + oy, 0, h - 1);
                for (int ox = -r; ox <= r; ++ox) {
                  int sx = clampi(x + ox, 0, w - 1);
                  pg[(size_t(sy) * w + sx) * c + k] += g;
                }
              }
            }
      },
      "box_filter");
}

Var softmax_lastdim(const Var& a) {
  const Shape& s = a->val.shape();
  int c = s.back();
  Tensor out(s);
  size_t rows = a->val.numel() / c;
  for (size_t r = 0; r < rows; ++r) {
    double mx = a->val[r * c];
    for (int k = 1; k < c; ++k) mx = std::max(mx, a->val[r * c + k]);
    double z = 0;
    for (int k = 0; k < c; ++k) {
      double e = std::exp(a->val[r * c + k] - mx);
      out[r * c + k] = e;
      z += e;
    }
    for (int k = 0; k < c; ++k) out[r * c + k] /= z;
  }
  return make_node(
      std::move(out), {a},
      [c, rows](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
          double dot = 0;
          for (int k = 0; k < c; ++k)
            dot += n.grad[r * c + k] * n.val[r * c + k];
          for (int k = 0; k < c; ++k)
            pg[r * c + k] += n.val[r * c + k] * (n.grad[r * c + k] - dot);
        }
      },
      "softmax_lastdim");
}

Var global_mean_hw(const Var& a) {
  const Shape& s = a->val.shape();
  UMD_REQUIRE(s.size() == 3, "global_mean_hw: expects H x W x C");
  int h = s[0], w = s[1], c = s[2];
  double inv = 1.0 / double(size_t(h) * w);
  Tensor out({c});
  for (size_t i = 0; i < size_t(h) * w; ++i)
    for (int k = 0; k < c; ++k) out[k] += a->val[i * c + k];
  for (int k = 0; k < c; ++k) out[k] *= inv;
  return make_node(
      std::move(out), {a},
      [h, w, c, inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < size_t(h) * w; ++i)
          for (int k = 0; k < c; ++k) pg[i * c + k] += n.grad[k] * inv;
      },
      "global_mean_hw");
}

Var broadcast_hw(const Var& a, int h, int w) {
  UMD_REQUIRE(a->val.ndim() == 1, "broadcast_hw: expects a channel vector");
  int c = a->val.dim(0);
  Tensor out({h, w, c});
  for (size_t i = 0; i < size_t(h) * w; ++i)
    for (int k = 0; k < c; ++k) out[i * c + k] = a->val[k];
  return make_node(
      std::move(out), {a},
      [h, w, c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        for (size_t i = 0; i < size_t(h) * w; ++i)
          for (int k = 0; k < c; ++k) pg[k] += n.grad[i * c + k];
      },
      "broadcast_hw");
}

Var matvec(const Var& w, const Var& x, const Var& b) {
  UMD_REQUIRE(w->val.ndim() == 2, "matvec: weight must be In x Out");
  int in = w->val.dim(0), out_c = w->val.dim(1);
  UMD_REQUIRE(x->val.numel() == size_t(in), "matvec: input length mismatch");
  UMD_REQUIRE(b->val.numel() == size_t(out_c), "matvec: bias length mismatch");
  Tensor out({out_c});
  for (int o = 0; o < out_c; ++o) out[o] = b->val[o];
  for (int i = 0; i < in; ++i) {
    double xi = x->val[i];
    for (int o = 0; o < out_c; ++o) out[o] += xi * w->val[size_t(i) * out_c + o];
  }
  return make_node(
      std::move(out), {w, x, b},
      [in, out_c](Node& n) {
        Node& pw = *n.parents[0];
        Node& px = *n.parents[1];
        Node& pb = *n.parents[2];
        if (pw.requires_grad) {
          Tensor& g = pw.ensure_grad();
          for (int i = 0; i < in; ++i)
            for (int o = 0; o < out_c; ++o)
              g[size_t(i) * out_c + o] += px.val[i] * n.grad[o];
        }
        if (px.requires_grad) {
          Tensor& g = px.ensure_grad();
          for (int i = 0; i < in; ++i) {
            double acc = 0;
            for (int o = 0; o < out_c; ++o)
              acc += pw.val[size_t(i) * out_c + o] * n.grad[o];
            g[i] += acc;
          }
        }
        if (pb.requires_grad) {
          Tensor& g = pb.ensure_grad();
          for (int o = 0; o < out_c; ++o) g[o] += n.grad[o];
        }
      },
      "matvec");
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride) {
  const Shape& xs = x->val.shape();
  const Shape& ws = w->val.shape();
  UMD_REQUIRE(xs.size() == 3 && ws.size() == 4, "conv2d: bad ranks");
  int h = xs[0], wd = xs[1], ci = xs[2];
  int kh = ws[0], kw = ws[1];
  UMD_REQUIRE(ws[2] == ci, "conv2d: input channel mismatch");
  int co = ws[3];
  UMD_REQUIRE(b->val.numel() == size_t(co), "conv2d: bias length mismatch");
  UMD_REQUIRE(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel must be odd");
  UMD_REQUIRE(stride >= 1, "conv2d: bad stride");
  int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  int ho = (h + 2 * ph - kh) / stride + 1;
  int wo = (wd + 2 * pw - kw) / stride + 1;
  Tensor out({ho, wo, co});
  const double* xd = x->val.data();
  const double* wdt = w->val.data();
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      double* orow = out.data() + (size_t(oy) * wo + ox) * co;
      for (int o = 0; o < co; ++o) orow[o] = b->val[o];
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride + ky - ph;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride + kx - pw;
          if (ix < 0 || ix >= wd) continue;
          const double* irow = xd + (size_t(iy) * wd + ix) * ci;
          const double* wrow = wdt + (size_t(ky) * kw + kx) * ci * co;
          for (int icn = 0; icn < ci; ++icn) {
            double v = irow[icn];
            const double* wr = wrow + size_t(icn) * co;
            for (int o = 0; o < co; ++o) orow[o] += v * wr[o];
          }
        }
      }
    }
  return make_node(
      std::move(out), {x, w, b},
      [h, wd, ci, kh, kw, co, stride, ph, pw, ho, wo](Node& n) {
        Node& px = *n.parents[0];
        Node& pw_ = *n.parents[1];
        Node& pb = *n.parents[2];
        const double* xd = px.val.data();
        const double* wdt = pw_.val.data();
        double* gx = nullptr;
        double* gw = nullptr;
        if (px.requires_grad) gx = px.ensure_grad().data();
        if (pw_.requires_grad) gw = pw_.ensure_grad().data();
        if (pb.requires_grad) {
          Tensor& gb = pb.ensure_grad();
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              const double* gy = n.grad.data() + (size_t(oy) * wo + ox) * co;
              for (int o = 0; o < co; ++o) gb[o] += gy[o];
            }
        }
        if (!gx && !gw) return;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const double* gy = n.grad.data() + (size_t(oy) * wo + ox) * co;
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy * stride + ky - ph;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox * stride + kx - pw;
                if (ix < 0 || ix >= wd) continue;
                size_t ioff = (size_t(iy) * wd + ix) * ci;
                size_t woff = (size_t(ky) * kw + kx) * ci * co;
                if (gx) {
                  for (int icn = 0; icn < ci; ++icn) {
                    const double* wr = wdt + woff + size_t(icn) * co;
                    double acc = 0;
                    for (int o = 0; o < co; ++o) acc += gy[o] * wr[o];
                    gx[ioff + icn] += acc;
                  }
                }
                if (gw) {
                  for (int icn = 0; icn < ci; ++icn) {
                    double v = xd[ioff + icn];
                    double* wr = gw + woff + size_t(icn) * co;
                    for (int o = 0; o < co; ++o) wr[o] += v * gy[o];
                  }
                }
              }
            }
          }
      },
      "conv2d");
}

namespace {

struct Taps {
  int x0, x1, y0, y1;
  double fu, fv;
  bool cu, cv;  // coordinate was clamped to the border
};

// Coordinates a hair off an integer (round-off from projective round trips)
// snap onto it so identity warps reproduce pixels exactly.
inline double snap_int(double x) {
  double r = std::round(x);
  return std::fabs(x - r) < 1e-9 ? r : x;
}

inline Taps sample_taps(double uu, double vv, int h, int w) {
  Taps t;
  t.cu = t.cv = false;
  double uc = snap_int(uu), vc = snap_int(vv);
  if (uc < 0) { uc = 0; t.cu = true; }
  else if (uc > w - 1) { uc = w - 1; t.cu = true; }
  if (vc < 0) { vc = 0; t.cv = true; }
  else if (vc > h - 1) { vc = h - 1; t.cv = true; }
  int x0 = int(std::floor(uc));
  if (x0 > w - 2) x0 = std::max(w - 2, 0);
  int y0 = int(std::floor(vc));
  if (y0 > h - 2) y0 = std::max(h - 2, 0);
  t.x0 = x0;
  t.x1 = std::min(x0 + 1, w - 1);
  t.y0 = y0;
  t.y1 = std::min(y0 + 1, h - 1);
  t.fu = uc - x0;
  t.fv = vc - y0;
  return t;
}

}  // namespace

Var bilinear_sample(const Var& img, const Var& u, const Var& v) {
  const Shape& is = img->val.shape();
  UMD_REQUIRE(is.size() == 3, "bilinear_sample: image must be H x W x C");
  UMD_REQUIRE(u->val.same_shape(v->val), "bilinear_sample: u/v shape mismatch");
  UMD_REQUIRE(u->val.ndim() == 2, "bilinear_sample: coords must be H x W");
  int h = is[0], w = is[1], c = is[2];
  int ho = u->val.dim(0), wo = u->val.dim(1);
  Tensor out({ho, wo, c});
  const double* id = img->val.data();
  for (size_t i = 0; i < size_t(ho) * wo; ++i) {
    Taps t = sample_taps(u->val[i], v->val[i], h, w);
    const double* p00 = id + (size_t(t.y0) * w + t.x0) * c;
    const double* p01 = id + (size_t(t.y0) * w + t.x1) * c;
    const double* p10 = id + (size_t(t.y1) * w + t.x0) * c;
    const double* p11 = id + (size_t(t.y1) * w + t.x1) * c;
    double w00 = (1 - t.fv) * (1 - t.fu), w01 = (1 - t.fv) * t.fu;
    double w10 = t.fv * (1 - t.fu), w11 = t.fv * t.fu;
    for (int k = 0; k < c; ++k)
      out[i * c + k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
  }
  return make_node(
      std::move(out), {img, u, v},
      [h, w, c, ho, wo](Node& n) {
        Node& pi = *n.parents[0];
        Node& pu = *n.parents[1];
        Node& pv = *n.parents[2];
        const double* id = pi.val.data();
        double* gi = pi.requires_grad ? pi.ensure_grad().data() : nullptr;
        double* gu = pu.requires_grad ? pu.ensure_grad().data() : nullptr;
        double* gv = pv.requires_grad ? pv.ensure_grad().data() : nullptr;
        for (size_t i = 0; i < size_t(ho) * wo; ++i) {
          Taps t = sample_taps(pu.val[i], pv.val[i], h, w);
          size_t i00 = (size_t(t.y0) * w + t.x0) * c;
          size_t i01 = (size_t(t.y0) * w + t.x1) * c;
          size_t i10 = (size_t(t.y1) * w + t.x0) * c;
          size_t i11 = (size_t(t.y1) * w + t.x1) * c;
          double w00 = (1 - t.fv) * (1 - t.fu), w01 = (1 - t.fv) * t.fu;
          double w10 = t.fv * (1 - t.fu), w11 = t.fv * t.fu;
          double du = 0, dv = 0;
          for (int k = 0; k < c; ++k) {
            double g = n.grad[i * c + k];
            if (g == 0.0) continue;
            if (gi) {
              gi[i00 + k] += g * w00;
              gi[i01 + k] += g * w01;
              gi[i10 + k] += g * w10;
              gi[i11 + k] += g * w11;
            }
            du += g * ((1 - t.fv) * (id[i01 + k] - id[i00 + k]) +
                       t.fv * (id[i11 + k] - id[i10 + k]));
            dv += g * ((1 - t.fu) * (id[i10 + k] - id[i00 + k]) +
                       t.fu * (id[i11 + k] - id[i01 + k]));
          }
          if (gu && !t.cu) gu[i] += du;
          if (gv && !t.cv) gv[i] += dv;
        }
      },
      "bilinear_sample");
}

Var resize_bilinear(const Var& img, int out_h, int out_w) {
  const Shape& is = img->val.shape();
  UMD_REQUIRE(is.size() == 3, "resize_bilinear: image must be H x W x C");
  double sy = double(is[0]) / out_h, sx = double(is[1]) / out_w;
  Tensor u({out_h, out_w}), v({out_h, out_w});
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      u.at(y, x) = (x + 0.5) * sx - 0.5;
      v.at(y, x) = (y + 0.5) * sy - 0.5;
    }
  return bilinear_sample(img, constant(std::move(u)), constant(std::move(v)));
}

// Axis-angle to rotation matrix -----------------------------------------------

namespace {

struct RotCoef {
  double a, b;          // sin(t)/t, (1-cos(t))/t^2
  double da_t, db_t;    // A'(t)/t, B'(t)/t
};

RotCoef rot_coef(double t) {
  RotCoef c;
  double t2 = t * t;
  if (t < 1e-4) {
    c.a = 1.0 - t2 / 6.0;
    c.b = 0.5 - t2 / 24.0;
    c.da_t = -1.0 / 3.0 + t2 / 30.0;
    c.db_t = -1.0 / 12.0 + t2 / 180.0;
  } else {
    double s = std::sin(t), co = std::cos(t);
    c.a = s / t;
    c.b = (1.0 - co) / t2;
    c.da_t = (t * co - s) / (t2 * t);
    c.db_t = (t * s - 2.0 * (1.0 - co)) / (t2 * t2);
  }
  return c;
}

void skew(const double* w, double* m) {
  m[0] = 0;      m[1] = -w[2]; m[2] = w[1];
  m[3] = w[2];   m[4] = 0;     m[5] = -w[0];
  m[6] = -w[1];  m[7] = w[0];  m[8] = 0;
}

void matmul3(const double* a, const double* b, double* c) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = acc;
    }
}

}  // namespace

Var rodrigues(const Var& w3) {
  UMD_REQUIRE(w3->val.numel() == 3, "rodrigues: expects a 3-vector");
  const double* w = w3->val.data();
  double t = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  RotCoef c = rot_coef(t);
  double wx[9], wx2[9];
  skew(w, wx);
  matmul3(wx, wx, wx2);
  Tensor out({9});
  for (int i = 0; i < 9; ++i) out[i] = c.a * wx[i] + c.b * wx2[i];
  out[0] += 1.0;
  out[4] += 1.0;
  out[8] += 1.0;
  return make_node(
      std::move(out), {w3},
      [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        const double* w = p.val.data();
        double t = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
        RotCoef c = rot_coef(t);
        double wx[9], wx2[9];
        skew(w, wx);
        matmul3(wx, wx, wx2);
        const double* g = n.grad.data();
        double g_wx = 0, g_wx2 = 0;  // <G, W>, <G, W^2>
        for (int i = 0; i < 9; ++i) {
          g_wx += g[i] * wx[i];
          g_wx2 += g[i] * wx2[i];
        }
        Tensor& pg = p.ensure_grad();
        for (int k = 0; k < 3; ++k) {
          double ek[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
          double unit[3] = {0, 0, 0};
          unit[k] = 1.0;
          skew(unit, ek);
          double ekw[9], wek[9];
          matmul3(ek, wx, ekw);
          matmul3(wx, ek, wek);
          double g_ek = 0, g_mix = 0;
          for (int i = 0; i < 9; ++i) {
            g_ek += g[i] * ek[i];
            g_mix += g[i] * (ekw[i] + wek[i]);
          }
          pg[k] += c.da_t * w[k] * g_wx + c.a * g_ek + c.db_t * w[k] * g_wx2 +
                   c.b * g_mix;
        }
      },
      "rodrigues");
}

}  // namespace umd::ad
