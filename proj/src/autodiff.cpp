#include "gpldla/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gpldla/errors.hpp"

namespace gpldla {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<Var::NodePtr> parents;
  Var::BackwardFn backward;
};

}  // namespace detail

using detail::Node;

Var::Var() : node_(std::make_shared<Node>()) {}

Var Var::parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::make(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents.reserve(parents.size());
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node_);
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return Var(std::move(n));
}

const Tensor& Var::value() const { return node_->value; }

bool Var::requires_grad() const { return node_->requires_grad; }

Tensor Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor(node_->value.shape());
}

void accumulate_grad(const Var::NodePtr& node, const Tensor& g) {
  if (!node->requires_grad) return;
  if (g.size() != node->value.size()) {
    throw DimensionError("gradient " + shape_string(g.shape()) + " for value " +
                         shape_string(node->value.shape()));
  }
  if (!node->has_grad) {
    node->grad = Tensor(node->value.shape(), std::vector<double>(g.data().begin(), g.data().end()));
    node->has_grad = true;
    return;
  }
  auto dst = node->grad.data();
  const auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void backward(const Var& root) {
  if (root.size() != 1) {
    throw ContractError("backward() needs a scalar root, got " + shape_string(root.shape()));
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* r = root.node().get();
  if (!r->requires_grad) return;
  stack.emplace_back(r, 0);
  seen.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  for (Node* n : order) {
    n->has_grad = false;
    n->grad = Tensor();
  }
  r->grad = Tensor(r->value.shape(), 1.0);
  r->has_grad = true;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->has_grad || !n->backward) continue;
    n->backward(n->grad, n->value, n->parents);
  }
}

namespace {

const Tensor& val(const Var::NodePtr& p) { return p->value; }

bool tracked(const Var::NodePtr& p) { return p->requires_grad; }

Tensor map(const Tensor& a, auto&& f) {
  Tensor out = a;
  for (double& x : out.data()) x = f(x);
  return out;
}

// Sum of all elements, reshaped to `like` (used to reduce a broadcast scalar).
Tensor reduce_to_scalar(const Tensor& g, const Shape& like) {
  double s = 0.0;
  for (double x : g.data()) s += x;
  return Tensor(like, std::vector<double>{s});
}

enum class Bin { add, sub, mul, div };

Var binary(const Var& a, const Var& b, Bin op) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape() || (av.size() == bv.size() && av.size() == 1);
  const bool a_scalar = !same && av.size() == 1;
  const bool b_scalar = !same && bv.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError("elementwise shape mismatch: " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()));
  }
  const Shape out_shape = a_scalar ? bv.shape() : av.shape();
  const std::size_t n = element_count(out_shape);
  Tensor out(out_shape);
  auto od = out.data();
  const auto ad = av.data();
  const auto bd = bv.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[a_scalar ? 0 : i];
    const double y = bd[b_scalar ? 0 : i];
    switch (op) {
      case Bin::add: od[i] = x + y; break;
      case Bin::sub: od[i] = x - y; break;
      case Bin::mul: od[i] = x * y; break;
      case Bin::div: od[i] = x / y; break;
    }
  }
  return Var::make(std::move(out), {a, b},
                   [op, a_scalar, b_scalar](const Tensor& g, const Tensor& outv,
                                            std::span<const Var::NodePtr> ps) {
                     const Tensor& x = val(ps[0]);
                     const Tensor& y = val(ps[1]);
                     const std::size_t n = g.size();
                     auto xi = [&](std::size_t i) { return x[a_scalar ? 0 : i]; };
                     auto yi = [&](std::size_t i) { return y[b_scalar ? 0 : i]; };
                     if (tracked(ps[0])) {
                       Tensor ga(outv.shape());
                       for (std::size_t i = 0; i < n; ++i) {
                         switch (op) {
                           case Bin::add:
                           case Bin::sub: ga[i] = g[i]; break;
                           case Bin::mul: ga[i] = g[i] * yi(i); break;
                           case Bin::div: ga[i] = g[i] / yi(i); break;
                         }
                       }
                       accumulate_grad(ps[0], a_scalar ? reduce_to_scalar(ga, x.shape()) : ga);
                     }
                     if (tracked(ps[1])) {
                       Tensor gb(outv.shape());
                       for (std::size_t i = 0; i < n; ++i) {
                         switch (op) {
                           case Bin::add: gb[i] = g[i]; break;
                           case Bin::sub: gb[i] = -g[i]; break;
                           case Bin::mul: gb[i] = g[i] * xi(i); break;
                           case Bin::div: gb[i] = -g[i] * outv[i] / yi(i); break;
                         }
                       }
                       accumulate_grad(ps[1], b_scalar ? reduce_to_scalar(gb, y.shape()) : gb);
                     }
                   });
}

// Elementwise unary op given f(x) and df/dx expressed through (x, f(x)).
template <class F, class D>
Var unary(const Var& a, F f, D df) {
  Tensor out = map(a.value(), f);
  return Var::make(std::move(out), {a},
                   [df](const Tensor& g, const Tensor& outv, std::span<const Var::NodePtr> ps) {
                     const Tensor& x = val(ps[0]);
                     Tensor ga(x.shape());
                     for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * df(x[i], outv[i]);
                     accumulate_grad(ps[0], ga);
                   });
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " needs a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(a, b, Bin::add); }
Var operator-(const Var& a, const Var& b) { return binary(a, b, Bin::sub); }
Var operator*(const Var& a, const Var& b) { return binary(a, b, Bin::mul); }
Var operator/(const Var& a, const Var& b) { return binary(a, b, Bin::div); }

Var operator-(const Var& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator+(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) {
  return unary(a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}
Var operator*(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Var operator*(double s, const Var& a) { return a * s; }
Var operator/(const Var& a, double s) { return a * (1.0 / s); }

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  return Var::make(std::move(out), {a, b},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     if (tracked(ps[0])) accumulate_grad(ps[0], matmul(g, transpose(val(ps[1]))));
                     if (tracked(ps[1])) accumulate_grad(ps[1], matmul(transpose(val(ps[0])), g));
                   });
}

Var transpose(const Var& a) {
  Tensor out = transpose(a.value());
  return Var::make(std::move(out), {a},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     accumulate_grad(ps[0], transpose(g));
                   });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var reciprocal(const Var& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp_min(const Var& a, double floor) {
  return unary(a, [floor](double x) { return std::max(x, floor); },
               [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return Var::make(Tensor::scalar(s), {a},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     accumulate_grad(ps[0], Tensor(val(ps[0]).shape(), g.item()));
                   });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw DomainError("mean of an empty tensor");
  return sum(a) * (1.0 / static_cast<double>(a.size()));
}

Var sum_rows(const Var& m) {
  const Tensor& mv = m.value();
  require_matrix(mv, "sum_rows");
  Tensor out(Shape{mv.rows()});
  for (std::size_t i = 0; i < mv.rows(); ++i)
    for (double x : mv.row(i)) out[i] += x;
  return Var::make(std::move(out), {m},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     Tensor gm(val(ps[0]).shape());
                     for (std::size_t i = 0; i < gm.rows(); ++i)
                       for (double& x : gm.row(i)) x = g[i];
                     accumulate_grad(ps[0], gm);
                   });
}

Var sum_cols(const Var& m) {
  const Tensor& mv = m.value();
  require_matrix(mv, "sum_cols");
  Tensor out(Shape{mv.cols()});
  for (std::size_t i = 0; i < mv.rows(); ++i)
    for (std::size_t j = 0; j < mv.cols(); ++j) out[j] += mv(i, j);
  return Var::make(std::move(out), {m},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     Tensor gm(val(ps[0]).shape());
                     for (std::size_t i = 0; i < gm.rows(); ++i)
                       for (std::size_t j = 0; j < gm.cols(); ++j) gm(i, j) = g[j];
                     accumulate_grad(ps[0], gm);
                   });
}

Var add_row(const Var& m, const Var& r) {
  const Tensor& mv = m.value();
  require_matrix(mv, "add_row");
  if (r.size() != mv.cols()) {
    throw DimensionError("add_row: " + shape_string(r.shape()) + " onto " + shape_string(mv.shape()));
  }
  Tensor out = mv;
  const auto rv = r.value().data();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  return Var::make(std::move(out), {m, r},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     accumulate_grad(ps[0], g);
                     if (tracked(ps[1])) {
                       Tensor gr(val(ps[1]).shape());
                       for (std::size_t i = 0; i < g.rows(); ++i)
                         for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
                       accumulate_grad(ps[1], gr);
                     }
                   });
}

Var add_col(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  require_matrix(mv, "add_col");
  if (v.size() != mv.rows()) {
    throw DimensionError("add_col: " + shape_string(v.shape()) + " onto " + shape_string(mv.shape()));
  }
  Tensor out = mv;
  const auto vv = v.value().data();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& x : out.row(i)) x += vv[i];
  return Var::make(std::move(out), {m, v},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     accumulate_grad(ps[0], g);
                     if (tracked(ps[1])) {
                       Tensor gv(val(ps[1]).shape());
                       for (std::size_t i = 0; i < g.rows(); ++i)
                         for (double x : g.row(i)) gv[i] += x;
                       accumulate_grad(ps[1], gv);
                     }
                   });
}

Var div_col(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  require_matrix(mv, "div_col");
  if (v.size() != mv.rows()) {
    throw DimensionError("div_col: " + shape_string(v.shape()) + " into " + shape_string(mv.shape()));
  }
  Tensor out = mv;
  const auto vv = v.value().data();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& x : out.row(i)) x /= vv[i];
  return Var::make(std::move(out), {m, v},
                   [](const Tensor& g, const Tensor& outv, std::span<const Var::NodePtr> ps) {
                     const auto vv = val(ps[1]).data();
                     if (tracked(ps[0])) {
                       Tensor gm = g;
                       for (std::size_t i = 0; i < gm.rows(); ++i)
                         for (double& x : gm.row(i)) x /= vv[i];
                       accumulate_grad(ps[0], gm);
                     }
                     if (tracked(ps[1])) {
                       Tensor gv(val(ps[1]).shape());
                       for (std::size_t i = 0; i < g.rows(); ++i) {
                         double s = 0.0;
                         for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * outv(i, j);
                         gv[i] = -s / vv[i];
                       }
                       accumulate_grad(ps[1], gv);
                     }
                   });
}

Var softmax(const Var& v) {
  Tensor out = softmax(v.value());
  return Var::make(std::move(out), {v},
                   [](const Tensor& g, const Tensor& p, std::span<const Var::NodePtr> ps) {
                     Tensor gv(p.shape());
                     for (std::size_t i = 0; i < p.rows(); ++i) {
                       const auto pr = p.row(i);
                       const auto gr = g.row(i);
                       double dot = 0.0;
                       for (std::size_t j = 0; j < pr.size(); ++j) dot += gr[j] * pr[j];
                       auto out = gv.row(i);
                       for (std::size_t j = 0; j < pr.size(); ++j) out[j] = pr[j] * (gr[j] - dot);
                     }
                     accumulate_grad(ps[0], gv);
                   });
}

Var log_sum_exp(const Var& v) {
  const double lse = log_sum_exp(v.value());
  return Var::make(Tensor::scalar(lse), {v},
                   [](const Tensor& g, const Tensor& outv, std::span<const Var::NodePtr> ps) {
                     const Tensor& x = val(ps[0]);
                     Tensor gv(x.shape());
                     for (std::size_t i = 0; i < x.size(); ++i)
                       gv[i] = g.item() * std::exp(x[i] - outv.item());
                     accumulate_grad(ps[0], gv);
                   });
}

Var log_sum_exp_rows(const Var& m) {
  const Tensor& mv = m.value();
  require_matrix(mv, "log_sum_exp_rows");
  Tensor out(Shape{mv.rows()});
  for (std::size_t i = 0; i < mv.rows(); ++i) out[i] = log_sum_exp(mv.row(i));
  return Var::make(std::move(out), {m},
                   [](const Tensor& g, const Tensor& outv, std::span<const Var::NodePtr> ps) {
                     const Tensor& x = val(ps[0]);
                     Tensor gm(x.shape());
                     for (std::size_t i = 0; i < x.rows(); ++i)
                       for (std::size_t j = 0; j < x.cols(); ++j)
                         gm(i, j) = g[i] * std::exp(x(i, j) - outv[i]);
                     accumulate_grad(ps[0], gm);
                   });
}

Var pick(const Var& m, std::span<const std::size_t> index) {
  const Tensor& mv = m.value();
  require_matrix(mv, "pick");
  if (index.size() != mv.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " +
                         shape_string(mv.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out(Shape{mv.rows()});
  for (std::size_t i = 0; i < mv.rows(); ++i) {
    if (idx[i] >= mv.cols()) throw DimensionError("pick: column index out of range");
    out[i] = mv(i, idx[i]);
  }
  return Var::make(std::move(out), {m},
                   [idx = std::move(idx)](const Tensor& g, const Tensor&,
                                          std::span<const Var::NodePtr> ps) {
                     Tensor gm(val(ps[0]).shape());
                     for (std::size_t i = 0; i < idx.size(); ++i) gm(i, idx[i]) = g[i];
                     accumulate_grad(ps[0], gm);
                   });
}

Var concat_rows(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "concat_rows");
  require_matrix(bv, "concat_rows");
  if (av.cols() != bv.cols()) {
    throw DimensionError("concat_rows: " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()));
  }
  std::vector<double> data(av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const std::size_t na = av.rows();
  return Var::make(Tensor(Shape{na + bv.rows(), av.cols()}, std::move(data)), {a, b},
                   [na](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     const std::size_t c = g.cols();
                     const auto gd = g.data();
                     if (tracked(ps[0]))
                       accumulate_grad(ps[0], Tensor(val(ps[0]).shape(),
                                                     std::vector<double>(gd.begin(), gd.begin() + na * c)));
                     if (tracked(ps[1]))
                       accumulate_grad(ps[1], Tensor(val(ps[1]).shape(),
                                                     std::vector<double>(gd.begin() + na * c, gd.end())));
                   });
}

Var slice_rows(const Var& m, std::size_t begin, std::size_t end) {
  const Tensor& mv = m.value();
  require_matrix(mv, "slice_rows");
  if (begin > end || end > mv.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of " + shape_string(mv.shape()));
  }
  const std::size_t c = mv.cols();
  const auto md = mv.data();
  Tensor out(Shape{end - begin, c},
             std::vector<double>(md.begin() + begin * c, md.begin() + end * c));
  return Var::make(std::move(out), {m},
                   [begin, c](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     Tensor gm(val(ps[0]).shape());
                     std::copy(g.data().begin(), g.data().end(), gm.data().begin() + begin * c);
                     accumulate_grad(ps[0], gm);
                   });
}

Var reshape(const Var& a, Shape shape) {
  const auto ad = a.value().data();
  Tensor out(std::move(shape), std::vector<double>(ad.begin(), ad.end()));
  return Var::make(std::move(out), {a},
                   [](const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
                     accumulate_grad(ps[0], g);
                   });
}

}  // namespace gpldla
