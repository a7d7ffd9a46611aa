#ifndef UMD_AUTODIFF_HPP_
#define UMD_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "umd/tensor.hpp"

namespace umd::ad {

// Reverse-mode automatic differentiation on Tensor values. Graphs are built
// define-by-run: every op returns a new node holding its value and a closure
// that scatters the node's gradient into its parents. backward() walks the
// graph once in reverse topological order. Graphs are DAGs (shared subtrees
// are fine) and are freed when the last Var handle dies.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily; same shape as val once touched
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backfn;  // pulls this->grad, pushes to parents
  const char* op = "";

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(val.shape());
    return grad;
  }
};

// Node construction -----------------------------------------------------------

Var leaf(Tensor value, bool requires_grad = true);
Var constant(Tensor value);
Var constant(double scalar);
Var detach(const Var& x);

// Escape hatch for fused ops defined outside this file: value plus a custom
// backward closure over the given parents.
Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backfn, const char* op);

// Runs reverse accumulation from a scalar root. Gradients accumulate (+=)
// into every node with requires_grad set; call zero_grad on leaves between
// optimizer steps.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& leaves);

inline double value0(const Var& v) { return v->val[0]; }

// Elementwise ops. Binary ops require equal shapes or one scalar operand
// (which broadcasts).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var abs(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var clamp(const Var& a, double lo, double hi);  // zero grad where clamped
Var cmin(const Var& a, const Var& b);           // elementwise min, ties -> a
Var cmax(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double s) { return add(a, constant(s)); }
inline Var operator+(double s, const Var& a) { return add(constant(s), a); }
inline Var operator-(const Var& a, double s) { return sub(a, constant(s)); }
inline Var operator-(double s, const Var& a) { return sub(constant(s), a); }
inline Var operator*(const Var& a, double s) { return mul(a, constant(s)); }
inline Var operator*(double s, const Var& a) { return mul(constant(s), a); }
inline Var operator/(const Var& a, double s) { return div(a, constant(s)); }
inline Var operator/(double s, const Var& a) { return div(constant(s), a); }

// Selection by a constant 0/1 mask: mask ? a : b, gradient routed per branch.
Var select(const Tensor& mask, const Var& a, const Var& b);

// Reductions and shape ops.
Var sum(const Var& a);   // -> scalar
Var mean(const Var& a);  // -> scalar
Var sum_lastdim(const Var& a);            // H x W x C -> H x W
Var expand_lastdim(const Var& a, int c);  // H x W -> H x W x C (repeat)
Var concat_lastdim(const std::vector<Var>& parts);
Var slice_lastdim(const Var& a, int from, int to);
Var index(const Var& a, size_t i);  // -> scalar node
Var reshape(const Var& a, Shape shape);
// sum_i p[..., i] * w[i]; p is (..., N), w is (N)
Var tensordot_lastdim(const Var& p, const Var& w);

// Spatial ops (images stored H x W x C, loops row-major, deterministic).
Var shift2d(const Var& a, int dy, int dx);           // replicate border
Var box_filter(const Var& a, int window);            // mean, replicate border
Var softmax_lastdim(const Var& a);
Var global_mean_hw(const Var& a);                    // H x W x C -> C
Var broadcast_hw(const Var& a, int h, int w);        // C -> H x W x C
Var matvec(const Var& w, const Var& x, const Var& b);  // w: In x Out, x: In
Var conv2d(const Var& x, const Var& w, const Var& b, int stride);
// img: H x W x C sampled at real pixel coords (u right, v down), clamped to
// the border; gradient flows to img and to the coordinate fields.
Var bilinear_sample(const Var& img, const Var& u, const Var& v);
Var resize_bilinear(const Var& img, int out_h, int out_w);

// 3-vector axis-angle -> rotation matrix entries as a 9-vector (row-major).
// Stable at small angles; gradient verified against finite differences.
Var rodrigues(const Var& w3);

}  // namespace umd::ad

#endif  // UMD_AUTODIFF_HPP_
