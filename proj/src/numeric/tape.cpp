/*
 * Copyright 2026 The Anchorfuse Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "anchorfuse/numeric/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "kernels.hpp"

namespace anchorfuse::numeric {

const Array& Var::value() const { return tape_->value(id_); }

const Array& Gradients::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no gradient for parameter '" + name + "'");
  return it->second;
}

Var Tape::push(Array value, std::vector<std::size_t> parents, BackwardFn backward) {
  if (checked_) value.require_finite("traced op output");
  Node node;
  node.requires_grad = std::any_of(parents.begin(), parents.end(),
                                   [&](std::size_t p) { return nodes_[p].requires_grad; });
  node.value = std::move(value);
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Array value) {
  if (checked_) value.require_finite("constant");
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Array value) {
  Var v = constant(std::move(value));
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (store_ != nullptr && store_ != &store) {
    throw std::logic_error("Tape::param: a tape reads from a single ParamStore");
  }
  store_ = &store;
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = variable(store.get(name));
  param_nodes_.emplace(name, v.id());
  return v;
}

Array& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Array(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Array Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  return n.has_grad ? n.grad : Array(n.value.shape());
}

Gradients Tape::backward(Var output) {
  if (output.value().size() != 1) {
    throw DimensionError("backward: output " + shape_str(output.shape()) + " is not a scalar");
  }
  return backward(output, Array(output.shape(), 1.0));
}

Gradients Tape::backward(Var output, const Array& seed) {
  if (seed.shape() != output.shape()) {
    throw DimensionError("backward: seed shape " + shape_str(seed.shape()) + " != output shape " +
                         shape_str(output.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Array();
  }
  grad_buffer(output.id()) = seed;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, id);
  }
  Gradients g;
  if (store_ != nullptr) {
    for (const auto& name : store_->names()) {
      auto it = param_nodes_.find(name);
      g.params.emplace(name, it == param_nodes_.end() ? Array(store_->get(name).shape())
                                                      : grad(Var(this, it->second)));
    }
  }
  return g;
}

namespace {

// Index maps for numpy-style broadcasting of two operands.
struct Broadcast {
  Shape out;
  bool identity = false;
  std::vector<std::size_t> ia, ib;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.identity = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<long>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<long>(rank - b.size()));
  p.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    p.out[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ra = 1, rb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : ra;
    sb[d] = pb[d] == 1 ? 0 : rb;
    ra *= pa[d];
    rb *= pb[d];
  }
  const std::size_t n = shape_size(p.out);
  p.ia.resize(n);
  p.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    p.ia[i] = oa;
    p.ib[i] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < p.out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return p;
}

template <typename F>
Var unary(Var x, F&& f, Tape::BackwardFn bw) {
  const Array& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return x.tape().push(Array::unchecked(xv.shape(), std::move(out)), {x.id()}, std::move(bw));
}

void check_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  return a.tape().push(numeric::matmul(av, bv), {a.id(), b.id()},
                       [n, k, m](Tape& t, std::size_t self) {
                         const std::size_t ia = t.parents(self)[0], ib = t.parents(self)[1];
                         const double* g = t.grad_buffer(self).data().data();
                         if (t.requires_grad(ia)) {
                           kernels::gemm_nt(g, t.value(ib).data().data(),
                                            t.grad_buffer(ia).data().data(), n, m, k);
                         }
                         if (t.requires_grad(ib)) {
                           kernels::gemm_tn(t.value(ia).data().data(), g,
                                            t.grad_buffer(ib).data().data(), n, k, m);
                         }
                       });
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), "add"));
  const Array& av = a.value();
  const Array& bv = b.value();
  const std::size_t n = shape_size(plan->out);
  std::vector<double> out(n);
  if (plan->identity) {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[plan->ia[i]] + bv[plan->ib[i]];
  }
  return a.tape().push(Array::unchecked(plan->out, std::move(out)), {a.id(), b.id()},
                       [plan](Tape& t, std::size_t self) {
                         const Array& g = t.grad_buffer(self);
                         for (int side = 0; side < 2; ++side) {
                           const std::size_t p = t.parents(self)[side];
                           if (!t.requires_grad(p)) continue;
                           Array& gp = t.grad_buffer(p);
                           if (plan->identity) {
                             for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
                           } else {
                             const auto& idx = side == 0 ? plan->ia : plan->ib;
                             for (std::size_t i = 0; i < g.size(); ++i) gp[idx[i]] += g[i];
                           }
                         }
                       });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), "mul"));
  const Array& av = a.value();
  const Array& bv = b.value();
  const std::size_t n = shape_size(plan->out);
  std::vector<double> out(n);
  if (plan->identity) {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[plan->ia[i]] * bv[plan->ib[i]];
  }
  return a.tape().push(
      Array::unchecked(plan->out, std::move(out)), {a.id(), b.id()},
      [plan](Tape& t, std::size_t self) {
        const Array& g = t.grad_buffer(self);
        const std::size_t pa = t.parents(self)[0], pb = t.parents(self)[1];
        const Array& av = t.value(pa);
        const Array& bv = t.value(pb);
        if (t.requires_grad(pa)) {
          Array& ga = t.grad_buffer(pa);
          if (plan->identity) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) ga[plan->ia[i]] += g[i] * bv[plan->ib[i]];
          }
        }
        if (t.requires_grad(pb)) {
          Array& gb = t.grad_buffer(pb);
          if (plan->identity) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[plan->ib[i]] += g[i] * av[plan->ia[i]];
          }
        }
      });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const Array& g = t.grad_buffer(self);
    const Array& xv = t.value(p);
    Array& gx = t.grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        // Split on sign so exp never overflows.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Tape& t, std::size_t self) {
        const std::size_t p = t.parents(self)[0];
        const Array& g = t.grad_buffer(self);
        const Array& y = t.value(self);
        Array& gx = t.grad_buffer(p);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

Var log(Var x) {
  const Array& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(xv[i] > 0.0)) throw NumericalError("log: non-positive input");
  }
  return unary(x, [](double v) { return std::log(v); }, [](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const Array& g = t.grad_buffer(self);
    const Array& xv = t.value(p);
    Array& gx = t.grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
  });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const Array& g = t.grad_buffer(self);
    const Array& y = t.value(self);
    Array& gx = t.grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
}

Var straight_through(Var x, Array value) {
  if (value.shape() != x.shape()) {
    throw DimensionError("straight_through: " + shape_str(value.shape()) + " vs " + shape_str(x.shape()));
  }
  return x.tape().push(std::move(value), {x.id()}, [](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const Array& g = t.grad_buffer(self);
    Array& gx = t.grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var softmax_lastdim(Var x) {
  const Array& xv = x.value();
  const std::size_t rows = xv.outer_size(), cols = xv.last_dim();
  return x.tape().push(numeric::softmax_lastdim(xv), {x.id()}, [rows, cols](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const Array& g = t.grad_buffer(self);
    const Array& y = t.value(self);
    Array& gx = t.grad_buffer(p);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
}

Var bilinear_sample(Var featmap, Var uv) {
  check_same_tape(featmap, uv, "bilinear_sample");
  const Array& fm = featmap.value();
  const Array& pts = uv.value();
  if (fm.rank() != 3) throw DimensionError("bilinear_sample: featmap must be H×W×C, got " + shape_str(fm.shape()));
  if (pts.rank() != 2 || pts.dim(1) != 2) {
    throw DimensionError("bilinear_sample: uv must be [n,2], got " + shape_str(pts.shape()));
  }
  const std::size_t height = fm.dim(0), width = fm.dim(1), channels = fm.dim(2);
  auto result = numeric::bilinear_sample(fm, pts.data());
  return featmap.tape().push(
      std::move(result.values), {featmap.id(), uv.id()},
      [height, width, channels](Tape& t, std::size_t self) {
        const std::size_t pf = t.parents(self)[0], pu = t.parents(self)[1];
        const Array& g = t.grad_buffer(self);
        const Array& fm = t.value(pf);
        const Array& pts = t.value(pu);
        const bool want_fm = t.requires_grad(pf), want_uv = t.requires_grad(pu);
        Array* gfm = want_fm ? &t.grad_buffer(pf) : nullptr;
        Array* guv = want_uv ? &t.grad_buffer(pu) : nullptr;
        const std::size_t n = pts.dim(0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto taps = kernels::bilinear_taps(height, width, pts[2 * i], pts[2 * i + 1]);
          if (!taps.valid) continue;
          const double* gi = g.data().data() + i * channels;
          double du = 0.0, dv = 0.0;
          for (const auto& tap : taps.taps) {
            if (tap.offset < 0) continue;
            const std::size_t base = static_cast<std::size_t>(tap.offset) * channels;
            if (want_fm) {
              for (std::size_t c = 0; c < channels; ++c) (*gfm)[base + c] += tap.weight * gi[c];
            }
            if (want_uv) {
              double dot = 0.0;
              for (std::size_t c = 0; c < channels; ++c) dot += fm[base + c] * gi[c];
              du += tap.dweight_du * dot;
              dv += tap.dweight_dv * dot;
            }
          }
          if (want_uv) {
            (*guv)[2 * i] += du;
            (*guv)[2 * i + 1] += dv;
          }
        }
      });
}

Var sum(Var x) {
  const Array& xv = x.value();
  double total = 0.0;
  for (double v : xv.data()) total += v;
  return x.tape().push(Array::unchecked({1}, {total}), {x.id()}, [](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const double g = t.grad_buffer(self)[0];
    Array& gx = t.grad_buffer(p);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var sum(Var x, std::size_t axis) {
  const Array& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("sum: axis out of range for " + shape_str(xv.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= xv.dim(d);
  for (std::size_t d = axis + 1; d < xv.rank(); ++d) inner *= xv.dim(d);
  const std::size_t extent = xv.dim(axis);
  Shape out_shape = xv.shape();
  out_shape[axis] = 1;
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < extent; ++k) {
      const double* src = xv.data().data() + (o * extent + k) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return x.tape().push(Array::unchecked(std::move(out_shape), std::move(out)), {x.id()},
                       [outer, extent, inner](Tape& t, std::size_t self) {
                         const std::size_t p = t.parents(self)[0];
                         const Array& g = t.grad_buffer(self);
                         Array& gx = t.grad_buffer(p);
                         for (std::size_t o = 0; o < outer; ++o) {
                           for (std::size_t k = 0; k < extent; ++k) {
                             for (std::size_t i = 0; i < inner; ++i) {
                               gx[(o * extent + k) * inner + i] += g[o * inner + i];
                             }
                           }
                         }
                       });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return mul(sum(x), x.tape().constant(Array::scalar(1.0 / n)));
}

Var mean(Var x, std::size_t axis) {
  const double n = static_cast<double>(x.value().dim(axis));
  return mul(sum(x, axis), x.tape().constant(Array::scalar(1.0 / n)));
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Tape& tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> extents;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) throw std::logic_error("concat: operands on different tapes");
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " vs " + shape_str(first));
    extents.push_back(s[axis]);
    ids.push_back(p.id());
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& v = parts[k].value();
    const std::size_t block = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data().data() + o * block, block, out.data() + (o * total + offset) * inner);
    }
    offset += extents[k];
  }
  return tape.push(Array::unchecked(std::move(out_shape), std::move(out)), ids,
                   [extents, outer, inner, total](Tape& t, std::size_t self) {
                     const Array& g = t.grad_buffer(self);
                     std::size_t offset = 0;
                     for (std::size_t k = 0; k < extents.size(); ++k) {
                       const std::size_t p = t.parents(self)[k];
                       const std::size_t block = extents[k] * inner;
                       if (t.requires_grad(p)) {
                         Array& gp = t.grad_buffer(p);
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = g.data().data() + (o * total + offset) * inner;
                           for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += src[i];
                         }
                       }
                       offset += extents[k];
                     }
                   });
}

Var gather(Var x, std::vector<std::size_t> index, Shape shape) {
  const Array& xv = x.value();
  if (shape_size(shape) != index.size()) {
    throw DimensionError("gather: shape " + shape_str(shape) + " does not match " +
                         std::to_string(index.size()) + " indices");
  }
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw DimensionError("gather: index out of range");
    out[i] = xv[index[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(index));
  return x.tape().push(Array::unchecked(std::move(shape), std::move(out)), {x.id()},
                       [idx](Tape& t, std::size_t self) {
                         const std::size_t p = t.parents(self)[0];
                         const Array& g = t.grad_buffer(self);
                         Array& gx = t.grad_buffer(p);
                         for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += g[i];
                       });
}

Var reshape(Var x, Shape shape) {
  const Array& xv = x.value();
  if (shape_size(shape) != xv.size()) {
    throw DimensionError("reshape " + shape_str(xv.shape()) + " -> " + shape_str(shape));
  }
  return x.tape().push(xv.reshaped(std::move(shape)), {x.id()}, [](Tape& t, std::size_t self) {
    const std::size_t p = t.parents(self)[0];
    const Array& g = t.grad_buffer(self);
    Array& gx = t.grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace anchorfuse::numeric
