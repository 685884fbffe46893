// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchfuse/errors.hpp"

namespace patchfuse {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
  return params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs,
                 std::function<void(Tape&, std::size_t)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                             [this](std::size_t i) { return nodes_[i].needs_grad; });
  if (n.needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty() && !n.value.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ConfigError("loss recorded on a different tape");
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward needs a single-element loss, got " + shape_str(value(loss.id()).shape));
  }
  grad_mut(loss.id()).data[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.data.empty()) continue;
    if (n.backprop) n.backprop(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param && n.needs_grad && !n.grad.data.empty()) {
      auto& g = n.param->grad.data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.data[i];
    }
  }
}

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.data[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor softmax_rows(const Tensor& x, const std::vector<char>* key_valid) {
  const std::size_t m = x.rows(), n = x.cols();
  if (key_valid && key_valid->size() != n) throw ShapeError("softmax mask width mismatch");
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (key_valid && !(*key_valid)[j]) continue;
      mx = std::max(mx, x(i, j));
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (key_valid && !(*key_valid)[j]) continue;
      const double e = std::exp(x(i, j) - mx);
      y(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) y(i, j) /= total;
  }
  return y;
}

Tensor softmax(const Tensor& x) {
  Tensor m({1, x.size()}, x.data);
  Tensor y = softmax_rows(m);
  y.shape = x.shape;
  return y;
}

}  // namespace kernels

namespace ops {
namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ConfigError("operands recorded on different tapes");
}

void accumulate(Tape& t, std::size_t target, const Tensor& delta) {
  if (!t.needs_grad(target)) return;
  auto& g = t.grad_mut(target).data;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta.data[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_mut(ia).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g.data[i * n + j] * bv.data[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_mut(ib).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av_ip = av.data[i * k + p];
          if (av_ip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av_ip * g.data[i * n + j];
        }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw ShapeError("matmul_nt inner dimension mismatch: " + shape_str(av.shape) + " x " +
                     shape_str(bv.shape) + "^T");
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av.data[i * k + p] * bv.data[j * k + p];
      out.data[i * n + j] = s;
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_mut(ia).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g.data[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv.data[j * k + p];
        }
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_mut(ib).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g.data[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av.data[i * k + p];
        }
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor g = t.grad(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var add_bias(Var x, Var b) {
  require_same_tape(x, b);
  const Tensor& xv = x.value();
  const std::size_t n = b.value().size();
  if (b.value().rank() != 1 || xv.shape.back() != n) {
    throw ShapeError("bias " + shape_str(b.shape()) + " incompatible with " + shape_str(xv.shape));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i % n];
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape()->record(std::move(out), {ix, ib}, [ix, ib, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ix)) accumulate(t, ix, g);
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_mut(ib).data;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g.data[i];
    }
  });
}

Var scale(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.data) v *= c;
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, c](Tape& t, std::size_t self) {
    if (!t.needs_grad(ix)) return;
    const Tensor& g = t.grad(self);
    auto& gx = t.grad_mut(ix).data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * g.data[i];
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    auto& gx = t.grad_mut(ix).data;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv.data[i] > 0.0) gx[i] += g.data[i];
    }
  });
}

Var dropout(Var x, double p, bool train, CounterRng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(p));
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad_mut(ix).data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += mask[i] * g.data[i];
  });
}

Var softmax_rows(Var x, const std::vector<char>* key_valid) {
  Tensor out = kernels::softmax_rows(x.value(), key_valid);
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    const std::size_t m = y.rows(), n = y.cols();
    auto& gx = t.grad_mut(ix).data;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.data[i * n + j] * y.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y.data[i * n + j] * (g.data[i * n + j] - dot);
    }
  });
}

Var softmax(Var x) {
  if (x.value().rank() != 1) throw ShapeError("softmax expects a vector, got " + shape_str(x.shape()));
  const std::size_t n = x.value().size();
  return reshape(softmax_rows(reshape(x, {1, n})), {n});
}

Var mean_pool_rows(Var x, std::size_t rows) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  const std::size_t used = rows == 0 ? m : rows;
  if (used > m || used == 0) throw ShapeError("mean_pool_rows over " + std::to_string(used) + " of " + std::to_string(m) + " rows");
  Tensor out({n});
  for (std::size_t i = 0; i < used; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j] += xv.data[i * n + j];
  for (double& v : out.data) v /= static_cast<double>(used);
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, used, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad_mut(ix).data;
    const double inv = 1.0 / static_cast<double>(used);
    for (std::size_t i = 0; i < used; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g.data[j] * inv;
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape* tape = parts.front().tape();
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw ConfigError("operands recorded on different tapes");
    ids.push_back(p.id());
  }
  const std::size_t rank = parts.front().value().rank();
  if (axis == 0 && rank == 1) {
    std::vector<double> data;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
      if (p.value().rank() != 1) throw ShapeError("concat mixes vectors and matrices");
      data.insert(data.end(), p.value().data.begin(), p.value().data.end());
      sizes.push_back(p.value().size());
    }
    Tensor out = Tensor::vector(std::move(data));
    return tape->record(std::move(out), ids, [ids, sizes](Tape& t, std::size_t self) {
      const Tensor& g = t.grad(self);
      std::size_t off = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (t.needs_grad(ids[k])) {
          auto& gp = t.grad_mut(ids[k]).data;
          for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g.data[off + i];
        }
        off += sizes[k];
      }
    });
  }
  if (rank != 2 || axis > 1) throw ShapeError("concat supports vectors (axis 0) and matrices (axis 0/1)");
  if (axis == 0) {
    const std::size_t n = parts.front().value().cols();
    std::vector<double> data;
    std::size_t m = 0;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
      if (p.value().rank() != 2 || p.value().cols() != n) {
        throw ShapeError("row concat width mismatch: " + shape_str(p.shape()) + " vs width " + std::to_string(n));
      }
      data.insert(data.end(), p.value().data.begin(), p.value().data.end());
      m += p.value().rows();
      sizes.push_back(p.value().size());
    }
    Tensor out({m, n}, std::move(data));
    return tape->record(std::move(out), ids, [ids, sizes](Tape& t, std::size_t self) {
      const Tensor& g = t.grad(self);
      std::size_t off = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (t.needs_grad(ids[k])) {
          auto& gp = t.grad_mut(ids[k]).data;
          for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g.data[off + i];
        }
        off += sizes[k];
      }
    });
  }
  const std::size_t m = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != m) {
      throw ShapeError("column concat height mismatch: " + shape_str(p.shape()));
    }
    widths.push_back(p.value().cols());
    n += p.value().cols();
  }
  Tensor out({m, n});
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out(i, col + j) = pv(i, j);
    col += widths[k];
  }
  return tape->record(std::move(out), ids, [ids, widths, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t col = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        auto& gp = t.grad_mut(ids[k]).data;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g.data[i * n + col + j];
      }
      col += widths[k];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (begin > end || end > m) throw ShapeError("row slice out of range");
  Tensor out({end - begin, n},
             std::vector<double>(xv.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                 xv.data.begin() + static_cast<std::ptrdiff_t>(end * n)));
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, begin, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad_mut(ix).data;
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g.data[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (begin > end || end > n) throw ShapeError("column slice out of range");
  const std::size_t w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = xv(i, begin + j);
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, begin, m, n, w](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad_mut(ix).data;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g.data[i * w + j];
  });
}

Var row(Var x, std::size_t i) {
  const std::size_t n = x.value().cols();
  return reshape(slice_rows(x, i, i + 1), {n});
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor out = x.value();
  out.shape = std::move(shape);
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    accumulate(t, ix, t.grad(self));
  });
}

Var embedding(Var table, const std::vector<std::size_t>& ids) {
  const Tensor& tv = table.value();
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw LookupError("token id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const std::size_t it = table.id();
  return table.tape()->record(std::move(out), {it}, [it, ids, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gt = t.grad_mut(it).data;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g.data[i * d + j];
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 1) throw ShapeError("cross_entropy expects logits vector, got " + shape_str(lv.shape));
  if (label >= lv.size()) {
    throw LabelError("label " + std::to_string(label) + " out of range for " + std::to_string(lv.size()) + " classes");
  }
  Tensor probs = kernels::softmax(lv);
  // log-sum-exp form keeps the loss finite when the true-class probability underflows.
  const double mx = *std::max_element(lv.data.begin(), lv.data.end());
  double total = 0.0;
  for (double v : lv.data) total += std::exp(v - mx);
  const double loss = -(lv.data[label] - mx - std::log(total));
  const std::size_t il = logits.id();
  return logits.tape()->record(Tensor::vector({loss}), {il},
                               [il, label, probs = std::move(probs)](Tape& t, std::size_t self) {
                                 const double g = t.grad(self).data[0];
                                 auto& gl = t.grad_mut(il).data;
                                 for (std::size_t k = 0; k < gl.size(); ++k) {
                                   gl[k] += g * (probs.data[k] - (k == label ? 1.0 : 0.0));
                                 }
                               });
}

Var sum_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("sum of zero scalars");
  std::vector<Var> flat;
  for (const Var& x : xs) {
    if (x.value().size() != 1) throw ShapeError("sum_scalars expects single-element values");
    flat.push_back(x);
  }
  return sum_all(concat([&] {
    std::vector<Var> v;
    for (const Var& x : flat) v.push_back(reshape(x, {1}));
    return v;
  }(), 0));
}

Var sum_all(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const std::size_t ix = x.id();
  return x.tape()->record(Tensor::vector({s}), {ix}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    for (double& v : t.grad_mut(ix).data) v += g;
  });
}

Var detach(Var x) { return x.tape()->constant(x.value()); }

}  // namespace ops
}  // namespace patchfuse
