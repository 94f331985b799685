#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "transpotter/tensor_ops.hpp"

namespace transpotter {

// Handle to a tape node.
struct Var {
  std::uint32_t i = 0;
};

// Per-parameter accumulated partials of one scalar loss. Shapes mirror the
// parameters; a fresh backward pass starts from zeroed accumulators.
template <typename T>
struct GradientRecord {
  std::map<std::string, Tensor<T>> grads;
};

// Reverse-mode tape. Operations record closures that propagate the gradient
// of a scalar root back to every parameter leaf. All operations are pure
// functions of their inputs; one tape is built per forward pass.
//
// With record=false no backward closures are kept, which turns the tape into
// a plain forward evaluator.
template <typename T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  const Tensor<T>& value(Var v) const { return nodes_[v.i].val(); }
  const Tensor<T>& grad(Var v) const { return grads_[v.i]; }

  // Constant leaf; never receives gradient.
  Var input(Tensor<T> v) {
    Node n;
    n.owned = std::move(v);
    return push(std::move(n), false);
  }

  // Trainable leaf bound to external storage; gradient is collected under `name`.
  // Re-registering a name returns the original node so gradients from every
  // use accumulate into one slot.
  Var param(const std::string& name, const Tensor<T>& storage) {
    if (record_) {
      auto it = param_nodes_.find(name);
      if (it != param_nodes_.end()) {
        if (nodes_[it->second].external != &storage)
          throw std::logic_error("param: '" + name + "' re-registered with different storage");
        return Var{static_cast<std::uint32_t>(it->second)};
      }
    }
    Node n;
    n.external = &storage;
    Var v = push(std::move(n), record_);
    if (record_) {
      params_.emplace_back(name, v.i);
      param_nodes_.emplace(name, v.i);
    }
    return v;
  }

  Var matmul(Var a, Var b) {
    Tensor<T> c = transpotter::matmul(value(a), value(b));
    return make(std::move(c), {a, b}, [a, b](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (t.needs(a)) as_matrix(t.gbuf(a)).noalias() += as_matrix(d) * as_matrix(t.value(b)).transpose();
      if (t.needs(b)) as_matrix(t.gbuf(b)).noalias() += as_matrix(t.value(a)).transpose() * as_matrix(d);
    });
  }

  // A[:, :k] * B[:k, :]. With k counting the leading real attention columns,
  // the weighted sum over values runs over exactly the real rows, so padded
  // rows cannot perturb the result even at rounding level.
  Var matmul_cut(Var a, Var b, std::size_t k) {
    const Tensor<T>&x = value(a), &y = value(b);
    if (x.cols() != y.rows())
      throw ShapeError("matmul_cut: " + x.shape_str() + " vs " + y.shape_str());
    if (k == 0 || k > x.cols()) throw ShapeError("matmul_cut: bad cut " + std::to_string(k));
    Tensor<T> c = Tensor<T>::zeros({x.rows(), y.cols()});
    as_matrix(c).noalias() = as_matrix(x).leftCols(k) * as_matrix(y).topRows(k);
    return make(std::move(c), {a, b}, [a, b, k](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (t.needs(a))
        as_matrix(t.gbuf(a)).leftCols(k).noalias() +=
            as_matrix(d) * as_matrix(t.value(b)).topRows(k).transpose();
      if (t.needs(b))
        as_matrix(t.gbuf(b)).topRows(k).noalias() +=
            as_matrix(t.value(a)).leftCols(k).transpose() * as_matrix(d);
    });
  }

  // A * B^T; saves an explicit transpose in attention.
  Var matmul_nt(Var a, Var b) {
    Tensor<T> c = transpotter::matmul_nt(value(a), value(b));
    return make(std::move(c), {a, b}, [a, b](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (t.needs(a)) as_matrix(t.gbuf(a)).noalias() += as_matrix(d) * as_matrix(t.value(b));
      if (t.needs(b)) as_matrix(t.gbuf(b)).noalias() += as_matrix(d).transpose() * as_matrix(t.value(a));
    });
  }

  Var add(Var a, Var b) {
    const Tensor<T>&x = value(a), &y = value(b);
    if (!x.same_shape(y)) throw ShapeError("add: " + x.shape_str() + " vs " + y.shape_str());
    Tensor<T> c = x;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += y.data[i];
    return make(std::move(c), {a, b}, [a, b](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (t.needs(a)) t.accum(a, d);
      if (t.needs(b)) t.accum(b, d);
    });
  }

  // Broadcast a length-n bias over every row of an m x n matrix.
  Var add_row(Var a, Var bias) {
    const Tensor<T>&x = value(a), &v = value(bias);
    if (x.cols() != v.size())
      throw ShapeError("add_row: " + x.shape_str() + " vs bias " + v.shape_str());
    Tensor<T> c = x;
    for (std::size_t r = 0; r < c.rows(); ++r)
      for (std::size_t k = 0; k < c.cols(); ++k) c.at(r, k) += v.data[k];
    return make(std::move(c), {a, bias}, [a, bias](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (t.needs(a)) t.accum(a, d);
      if (t.needs(bias)) {
        Tensor<T>& g = t.gbuf(bias);
        for (std::size_t r = 0; r < d.rows(); ++r)
          for (std::size_t k = 0; k < d.cols(); ++k) g.data[k] += d.at(r, k);
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&x = value(a), &y = value(b);
    if (!x.same_shape(y)) throw ShapeError("mul: " + x.shape_str() + " vs " + y.shape_str());
    Tensor<T> c = x;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= y.data[i];
    return make(std::move(c), {a, b}, [a, b](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (t.needs(a)) {
        Tensor<T>& g = t.gbuf(a);
        const Tensor<T>& y2 = t.value(b);
        for (std::size_t i = 0; i < d.size(); ++i) g.data[i] += d.data[i] * y2.data[i];
      }
      if (t.needs(b)) {
        Tensor<T>& g = t.gbuf(b);
        const Tensor<T>& x2 = t.value(a);
        for (std::size_t i = 0; i < d.size(); ++i) g.data[i] += d.data[i] * x2.data[i];
      }
    });
  }

  Var affine(Var a, T scale, T shift) {
    Tensor<T> c = value(a);
    for (T& v : c.data) v = v * scale + shift;
    return make(std::move(c), {a}, [a, scale](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      if (!t.needs(a)) return;
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t i = 0; i < d.size(); ++i) g.data[i] += scale * d.data[i];
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    std::size_t cols = value(parts.at(0)).cols(), rows = 0;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
      rows += value(p).rows();
    }
    Tensor<T> c = Tensor<T>::zeros({rows, cols});
    std::size_t r = 0;
    for (Var p : parts) {
      const Tensor<T>& x = value(p);
      std::copy(x.data.begin(), x.data.end(), c.data.begin() + r * cols);
      r += x.rows();
    }
    return make(std::move(c), parts, [parts](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      std::size_t r = 0, cols = d.cols();
      for (Var p : parts) {
        std::size_t pr = t.value(p).rows();
        if (t.needs(p)) {
          Tensor<T>& g = t.gbuf(p);
          for (std::size_t i = 0; i < pr * cols; ++i) g.data[i] += d.data[r * cols + i];
        }
        r += pr;
      }
    });
  }

  Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
    const Tensor<T>& x = value(a);
    if (r0 > r1 || r1 > x.rows()) throw ShapeError("slice_rows: range out of bounds");
    std::size_t cols = x.cols();
    Tensor<T> c = Tensor<T>::zeros({r1 - r0, cols});
    std::copy(x.data.begin() + r0 * cols, x.data.begin() + r1 * cols, c.data.begin());
    return make(std::move(c), {a}, [a, r0](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      Tensor<T>& g = t.gbuf(a);
      std::size_t cols = d.cols();
      for (std::size_t i = 0; i < d.size(); ++i) g.data[r0 * cols + i] += d.data[i];
    });
  }

  Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    const Tensor<T>& x = value(a);
    if (c0 > c1 || c1 > x.cols()) throw ShapeError("slice_cols: range out of bounds");
    Tensor<T> c = Tensor<T>::zeros({x.rows(), c1 - c0});
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t k = c0; k < c1; ++k) c.at(r, k - c0) = x.at(r, k);
    return make(std::move(c), {a}, [a, c0](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t k = 0; k < d.cols(); ++k) g.at(r, c0 + k) += d.at(r, k);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    std::size_t rows = value(parts.at(0)).rows(), cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Tensor<T> c = Tensor<T>::zeros({rows, cols});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor<T>& x = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < x.cols(); ++k) c.at(r, off + k) = x.at(r, k);
      off += x.cols();
    }
    return make(std::move(c), parts, [parts](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      std::size_t off = 0;
      for (Var p : parts) {
        std::size_t pc = t.value(p).cols();
        if (t.needs(p)) {
          Tensor<T>& g = t.gbuf(p);
          for (std::size_t r = 0; r < d.rows(); ++r)
            for (std::size_t k = 0; k < pc; ++k) g.at(r, k) += d.at(r, off + k);
        }
        off += pc;
      }
    });
  }

  // Gather rows of `table` by id. Repeated ids accumulate gradient.
  Var embedding(Var table, std::vector<int> ids) {
    const Tensor<T>& tab = value(table);
    std::size_t cols = tab.cols();
    Tensor<T> c = Tensor<T>::zeros({ids.size(), cols});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      int id = ids[r];
      if (id < 0 || static_cast<std::size_t>(id) >= tab.rows())
        throw std::domain_error("embedding: id " + std::to_string(id) + " out of range");
      std::copy(tab.data.begin() + id * cols, tab.data.begin() + (id + 1) * cols,
                c.data.begin() + r * cols);
    }
    return make(std::move(c), {table}, [table, ids = std::move(ids)](Tape& t) {
      if (!t.needs(table)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      Tensor<T>& g = t.gbuf(table);
      std::size_t cols = d.cols();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t k = 0; k < cols; ++k) g.at(ids[r], k) += d.at(r, k);
    });
  }

  // Row-wise stable softmax. Columns where colmask is 0 get probability exactly
  // zero and are excluded from the normalisation; an empty mask allows all.
  Var softmax_rows(Var a, std::vector<std::uint8_t> colmask = {}) {
    const Tensor<T>& x = value(a);
    if (x.cols() == 0) throw std::domain_error("softmax: empty axis");
    if (!colmask.empty() && colmask.size() != x.cols())
      throw ShapeError("softmax_rows: mask length mismatch");
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < x.cols(); ++k)
        if (colmask.empty() || colmask[k]) mx = std::max(mx, x.at(r, k));
      if (!std::isfinite(static_cast<double>(mx)))
        throw std::domain_error("softmax: row has no unmasked column");
      T sum = T(0);
      for (std::size_t k = 0; k < x.cols(); ++k) {
        if (colmask.empty() || colmask[k]) {
          T e = std::exp(x.at(r, k) - mx);
          y.at(r, k) = e;
          sum += e;
        }
      }
      for (std::size_t k = 0; k < x.cols(); ++k) y.at(r, k) /= sum;
    }
    return make(std::move(y), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      const Tensor<T>& y = t.nodes_[t.last_].val();
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t r = 0; r < d.rows(); ++r) {
        T dot = T(0);
        for (std::size_t k = 0; k < d.cols(); ++k) dot += d.at(r, k) * y.at(r, k);
        for (std::size_t k = 0; k < d.cols(); ++k)
          g.at(r, k) += y.at(r, k) * (d.at(r, k) - dot);
      }
    });
  }

  Var layer_norm_rows(Var a, Var gain, Var bias, T eps) {
    const Tensor<T>& x = value(a);
    const Tensor<T>&gn = value(gain), &bs = value(bias);
    Tensor<T> y = transpotter::layer_norm(x, gn, bs, eps);
    // Stash the normalised activations and 1/sigma per row for the backward pass.
    auto xhat = std::make_shared<Tensor<T>>(Tensor<T>::zeros(x.shape));
    auto inv = std::make_shared<std::vector<T>>(x.rows());
    std::size_t n = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
      T mean = T(0);
      for (std::size_t c = 0; c < n; ++c) mean += x.at(r, c);
      mean /= static_cast<T>(n);
      T var = T(0);
      for (std::size_t c = 0; c < n; ++c) {
        T dv = x.at(r, c) - mean;
        var += dv * dv;
      }
      var /= static_cast<T>(n);
      (*inv)[r] = T(1) / std::sqrt(var + eps);
      for (std::size_t c = 0; c < n; ++c) xhat->at(r, c) = (x.at(r, c) - mean) * (*inv)[r];
    }
    return make(std::move(y), {a, gain, bias}, [a, gain, bias, xhat, inv](Tape& t) {
      const Tensor<T>& d = t.grads_[t.last_];
      const Tensor<T>& gn = t.value(gain);
      std::size_t n = d.cols();
      for (std::size_t r = 0; r < d.rows(); ++r) {
        if (t.needs(gain)) {
          Tensor<T>& gg = t.gbuf(gain);
          for (std::size_t c = 0; c < n; ++c) gg.data[c] += d.at(r, c) * xhat->at(r, c);
        }
        if (t.needs(bias)) {
          Tensor<T>& gb = t.gbuf(bias);
          for (std::size_t c = 0; c < n; ++c) gb.data[c] += d.at(r, c);
        }
        if (t.needs(a)) {
          // dxhat = d * gain; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          Tensor<T>& ga = t.gbuf(a);
          T m1 = T(0), m2 = T(0);
          for (std::size_t c = 0; c < n; ++c) {
            T dh = d.at(r, c) * gn.data[c];
            m1 += dh;
            m2 += dh * xhat->at(r, c);
          }
          m1 /= static_cast<T>(n);
          m2 /= static_cast<T>(n);
          for (std::size_t c = 0; c < n; ++c) {
            T dh = d.at(r, c) * gn.data[c];
            ga.at(r, c) += (*inv)[r] * (dh - m1 - xhat->at(r, c) * m2);
          }
        }
      }
    });
  }

  Var sigmoid(Var a) {
    Tensor<T> y = value(a);
    for (T& v : y.data) v = transpotter::sigmoid(v);
    return make(std::move(y), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      const Tensor<T>& y = t.nodes_[t.last_].val();
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t i = 0; i < d.size(); ++i)
        g.data[i] += d.data[i] * y.data[i] * (T(1) - y.data[i]);
    });
  }

  Var relu(Var a) {
    Tensor<T> y = value(a);
    for (T& v : y.data) v = std::max(v, T(0));
    return make(std::move(y), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      const Tensor<T>& x = t.value(a);
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t i = 0; i < d.size(); ++i)
        if (x.data[i] > T(0)) g.data[i] += d.data[i];
    });
  }

  Var gelu(Var a) {
    Tensor<T> y = value(a);
    for (T& v : y.data) v = T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2))));
    return make(std::move(y), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      const Tensor<T>& x = t.value(a);
      Tensor<T>& g = t.gbuf(a);
      const T inv_sqrt2 = T(1) / std::sqrt(T(2));
      const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
      for (std::size_t i = 0; i < d.size(); ++i) {
        T xv = x.data[i];
        T cdf = T(0.5) * (T(1) + std::erf(xv * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xv * xv);
        g.data[i] += d.data[i] * (cdf + xv * pdf);
      }
    });
  }

  // log with the input clamped to >= kLogFloor; clamped coordinates get zero gradient.
  Var log(Var a) {
    Tensor<T> y = value(a);
    for (T& v : y.data) v = log_clamped(v);
    return make(std::move(y), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      const Tensor<T>& x = t.value(a);
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t i = 0; i < d.size(); ++i)
        if (x.data[i] > static_cast<T>(kLogFloor)) g.data[i] += d.data[i] / x.data[i];
    });
  }

  Var sum_all(Var a) {
    T s = T(0);
    for (T v : value(a).data) s += v;
    return make(Tensor<T>::scalar(s), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      T d = t.grads_[t.last_].data[0];
      for (T& v : t.gbuf(a).data) v += d;
    });
  }

  Var mean_all(Var a) {
    std::size_t n = value(a).size();
    if (n == 0) throw std::domain_error("mean: empty tensor");
    T s = T(0);
    for (T v : value(a).data) s += v;
    s /= static_cast<T>(n);
    return make(Tensor<T>::scalar(s), {a}, [a, n](Tape& t) {
      if (!t.needs(a)) return;
      T d = t.grads_[t.last_].data[0] / static_cast<T>(n);
      for (T& v : t.gbuf(a).data) v += d;
    });
  }

  // Same data, new shape; gradient passes through untouched.
  Var reshape(Var a, std::vector<std::size_t> shape) {
    if (Tensor<T>::count(shape) != value(a).size()) throw ShapeError("reshape: size mismatch");
    Tensor<T> y = value(a);
    y.shape = std::move(shape);
    return make(std::move(y), {a}, [a](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& d = t.grads_[t.last_];
      Tensor<T>& g = t.gbuf(a);
      for (std::size_t i = 0; i < d.size(); ++i) g.data[i] += d.data[i];
    });
  }

  // Pick one entry as a 1-element tensor.
  Var element(Var a, std::size_t r, std::size_t c) {
    const Tensor<T>& x = value(a);
    if (r >= x.rows() || c >= x.cols()) throw ShapeError("element: index out of bounds");
    return make(Tensor<T>::scalar(x.at(r, c)), {a}, [a, r, c](Tape& t) {
      if (!t.needs(a)) return;
      t.gbuf(a).at(r, c) += t.grads_[t.last_].data[0];
    });
  }

  // Reverse sweep from a scalar root. Re-running clears previous accumulators.
  void backward(Var root) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    if (value(root).size() != 1)
      throw std::invalid_argument("backward: root must be scalar, got " +
                                  value(root).shape_str());
    grads_.assign(nodes_.size(), Tensor<T>());
    grads_[root.i] = Tensor<T>::scalar(T(1));
    for (std::size_t i = root.i + 1; i-- > 0;) {
      if (grads_[i].size() == 0 || !nodes_[i].back) continue;
      last_ = i;
      nodes_[i].back(*this);
    }
  }

  // Named parameter gradients; parameters untouched by the root get zeros.
  GradientRecord<T> gradients() const {
    GradientRecord<T> rec;
    for (const auto& [name, idx] : params_) {
      if (idx < grads_.size() && grads_[idx].size() > 0)
        rec.grads[name] = grads_[idx];
      else
        rec.grads[name] = Tensor<T>::zeros(nodes_[idx].val().shape);
    }
    return rec;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    std::function<void(Tape&)> back;
    bool needs_grad = false;
    const Tensor<T>& val() const { return external ? *external : owned; }
  };

  bool needs(Var v) const { return nodes_[v.i].needs_grad; }

  Tensor<T>& gbuf(Var v) {
    Tensor<T>& g = grads_[v.i];
    if (g.size() == 0) g = Tensor<T>::zeros(nodes_[v.i].val().shape);
    return g;
  }

  void accum(Var v, const Tensor<T>& d) {
    Tensor<T>& g = gbuf(v);
    for (std::size_t i = 0; i < d.size(); ++i) g.data[i] += d.data[i];
  }

  Var push(Node n, bool needs_grad) {
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename F>
  Var make(Tensor<T> value, const std::vector<Var>& parents, F&& back) {
    bool needs_grad = false;
    if (record_)
      for (Var p : parents) needs_grad = needs_grad || nodes_[p.i].needs_grad;
    Node n;
    n.owned = std::move(value);
    if (needs_grad) n.back = std::forward<F>(back);
    return push(std::move(n), needs_grad);
  }

  bool record_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<std::pair<std::string, std::size_t>> params_;
  std::map<std::string, std::size_t> param_nodes_;  // dedup index into params_
  std::size_t last_ = 0;  // node whose closure is currently running
};

}  // namespace transpotter
