#pragma once

// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// Every value on the tape is a matrix; vectors are single columns and
// scalars are 1x1. Nodes are appended in evaluation order, so a reverse walk
// over node ids is a valid topological order for the backward pass.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace star::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
class Tape;

template <typename T>
class Var {
public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->node(id_).value; }
  T scalar() const { return value()(0, 0); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
public:
  using Backward = std::function<void(Tape&, int)>;

  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  /// A tape built with record=false never stores backward closures; use it
  /// for inference and reward evaluation.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, {}); }

  Var<T> parameter(Parameter<T>& p) {
    Parameter<T>* ptr = &p;
    return push(p.value, true, [ptr](Tape& t, int self) { ptr->grad += t.node(self).grad; });
  }

  /// Appends a node. `requires_grad` is ignored when not recording.
  Var<T> push(Matrix<T> value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = record_ && requires_grad;
    if (n.requires_grad)
      n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  bool needs(const Var<T>& v) const { return node(v.id()).requires_grad; }
  bool needs(std::initializer_list<Var<T>> vs) const {
    for (const auto& v : vs)
      if (needs(v))
        return true;
    return false;
  }

  /// Adds `g` into the gradient slot of node `id` (allocated on first use).
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = node(id);
    if (!n.requires_grad)
      return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Seeds d(root)/d(root) = seed and propagates to every parameter reached.
  void backward(const Var<T>& root, T seed = T(1)) {
    assert(root.rows() == 1 && root.cols() == 1);
    if (!node(root.id()).requires_grad)
      return;
    accumulate(root.id(), Matrix<T>::Constant(1, 1, seed));
    for (int id = root.id(); id >= 0; --id) {
      Node& n = node(id);
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward)
        continue;
      n.backward(*this, id);
    }
  }

private:
  std::vector<Node> nodes_;
  bool record_;
};

// ---------------------------------------------------------------------------
// Operations

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), t.needs({a, b}), [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.node(self).grad;
    if (t.node(ia).requires_grad)
      t.accumulate(ia, g * t.node(ib).value.transpose());
    if (t.node(ib).requires_grad)
      t.accumulate(ib, t.node(ia).value.transpose() * g);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), t.needs({a, b}), [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.node(self).grad;
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), t.needs({a, b}), [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.node(self).grad;
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

/// Element-wise product.
template <typename T>
Var<T> cmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), t.needs({a, b}),
                [ia, ib](Tape<T>& t, int self) {
                  const Matrix<T>& g = t.node(self).grad;
                  if (t.node(ia).requires_grad)
                    t.accumulate(ia, g.cwiseProduct(t.node(ib).value));
                  if (t.node(ib).requires_grad)
                    t.accumulate(ib, g.cwiseProduct(t.node(ia).value));
                });
}

/// a + b broadcast over columns; b is a column vector.
template <typename T>
Var<T> add_bias(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Matrix<T> v = a.value().colwise() + b.value().col(0);
  return t.push(std::move(v), t.needs({a, b}), [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.node(self).grad;
    t.accumulate(ia, g);
    if (t.node(ib).requires_grad)
      t.accumulate(ib, g.rowwise().sum());
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  return t.push(a.value() * s, t.needs(a),
                [ia, s](Tape<T>& t, int self) { t.accumulate(ia, t.node(self).grad * s); });
}

/// 1 - a, element-wise.
template <typename T>
Var<T> one_minus(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = (T(1) - a.value().array()).matrix();
  return t.push(std::move(v), t.needs(a),
                [ia](Tape<T>& t, int self) { t.accumulate(ia, -t.node(self).grad); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = (T(1) / (T(1) + (-a.value().array()).exp())).matrix();
  return t.push(std::move(v), t.needs(a), [ia](Tape<T>& t, int self) {
    const auto& y = t.node(self).value.array();
    t.accumulate(ia, (t.node(self).grad.array() * y * (T(1) - y)).matrix());
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = a.value().array().tanh().matrix();
  return t.push(std::move(v), t.needs(a), [ia](Tape<T>& t, int self) {
    const auto& y = t.node(self).value.array();
    t.accumulate(ia, (t.node(self).grad.array() * (T(1) - y * y)).matrix());
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = a.value().cwiseMax(T(0));
  return t.push(std::move(v), t.needs(a), [ia](Tape<T>& t, int self) {
    const auto& x = t.node(ia).value.array();
    t.accumulate(ia, (t.node(self).grad.array() * (x > T(0)).template cast<T>()).matrix());
  });
}

/// log(max(a, floor)); entries at or below the floor pass no gradient.
template <typename T>
Var<T> log_clamped(const Var<T>& a, T floor) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = a.value().cwiseMax(floor).array().log().matrix();
  return t.push(std::move(v), t.needs(a), [ia, floor](Tape<T>& t, int self) {
    const auto& x = t.node(ia).value.array();
    auto mask = (x > floor).template cast<T>();
    t.accumulate(ia, (t.node(self).grad.array() * mask / x.max(floor)).matrix());
  });
}

/// Scalar max(a, lo); no gradient when clamped.
template <typename T>
Var<T> clamp_min(const Var<T>& a, T lo) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = a.value().cwiseMax(lo);
  return t.push(std::move(v), t.needs(a), [ia, lo](Tape<T>& t, int self) {
    const auto& x = t.node(ia).value.array();
    auto mask = (x > lo).template cast<T>();
    t.accumulate(ia, (t.node(self).grad.array() * mask).matrix());
  });
}

/// Sum of all entries as a 1x1.
template <typename T>
Var<T> sum(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Index r = a.rows(), c = a.cols();
  return t.push(Matrix<T>::Constant(1, 1, a.value().sum()), t.needs(a),
                [ia, r, c](Tape<T>& t, int self) {
                  t.accumulate(ia, Matrix<T>::Constant(r, c, t.node(self).grad(0, 0)));
                });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = a.value().transpose();
  return t.push(std::move(v), t.needs(a),
                [ia](Tape<T>& t, int self) { t.accumulate(ia, t.node(self).grad.transpose()); });
}

template <typename T>
Var<T> block(const Var<T>& a, Index r0, Index c0, Index nr, Index nc) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Index R = a.rows(), C = a.cols();
  Matrix<T> v = a.value().block(r0, c0, nr, nc);
  return t.push(std::move(v), t.needs(a), [ia, r0, c0, nr, nc, R, C](Tape<T>& t, int self) {
    Matrix<T> g = Matrix<T>::Zero(R, C);
    g.block(r0, c0, nr, nc) = t.node(self).grad;
    t.accumulate(ia, g);
  });
}

template <typename T>
Var<T> col(const Var<T>& a, Index j) {
  return block(a, 0, j, a.rows(), 1);
}

template <typename T>
Var<T> rows(const Var<T>& a, Index r0, Index nr) {
  return block(a, r0, 0, nr, a.cols());
}

/// Vertical stack; all parts share a column count.
template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  assert(!parts.empty());
  Tape<T>& t = *parts.front().tape();
  Index total = 0, cols = parts.front().cols();
  bool need = false;
  for (const auto& p : parts) {
    assert(p.cols() == cols);
    total += p.rows();
    need = need || t.needs(p);
  }
  Matrix<T> v(total, cols);
  std::vector<std::pair<int, Index>> layout;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    layout.emplace_back(p.id(), p.rows());
    off += p.rows();
  }
  return t.push(std::move(v), need, [layout](Tape<T>& t, int self) {
    Index off = 0;
    for (auto [id, nr] : layout) {
      if (t.node(id).requires_grad)
        t.accumulate(id, t.node(self).grad.middleRows(off, nr));
      off += nr;
    }
  });
}

template <typename T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_rows<T>(std::span<const Var<T>>(v));
}

/// Horizontal stack; all parts share a row count.
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  assert(!parts.empty());
  Tape<T>& t = *parts.front().tape();
  Index total = 0, rows = parts.front().rows();
  bool need = false;
  for (const auto& p : parts) {
    assert(p.rows() == rows);
    total += p.cols();
    need = need || t.needs(p);
  }
  Matrix<T> v(rows, total);
  std::vector<std::pair<int, Index>> layout;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    layout.emplace_back(p.id(), p.cols());
    off += p.cols();
  }
  return t.push(std::move(v), need, [layout](Tape<T>& t, int self) {
    Index off = 0;
    for (auto [id, nc] : layout) {
      if (t.node(id).requires_grad)
        t.accumulate(id, t.node(self).grad.middleCols(off, nc));
      off += nc;
    }
  });
}

/// Row-wise maximum over columns (max pooling over positions).
template <typename T>
Var<T> max_cols(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  const Matrix<T>& x = a.value();
  Matrix<T> v(x.rows(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(x.rows()));
  for (Index r = 0; r < x.rows(); ++r) {
    Index best = 0;
    v(r, 0) = x.row(r).maxCoeff(&best);
    arg[static_cast<std::size_t>(r)] = best;
  }
  Index R = x.rows(), C = x.cols();
  return t.push(std::move(v), t.needs(a), [ia, arg, R, C](Tape<T>& t, int self) {
    Matrix<T> g = Matrix<T>::Zero(R, C);
    for (Index r = 0; r < R; ++r)
      g(r, arg[static_cast<std::size_t>(r)]) = t.node(self).grad(r, 0);
    t.accumulate(ia, g);
  });
}

/// Column-wise softmax.
template <typename T>
Var<T> softmax_cols(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  int ia = a.id();
  Matrix<T> v = a.value();
  for (Index j = 0; j < v.cols(); ++j) {
    T m = v.col(j).maxCoeff();
    v.col(j) = (v.col(j).array() - m).exp().matrix();
    v.col(j) /= v.col(j).sum();
  }
  return t.push(std::move(v), t.needs(a), [ia](Tape<T>& t, int self) {
    const Matrix<T>& s = t.node(self).value;
    const Matrix<T>& g = t.node(self).grad;
    Matrix<T> dx(s.rows(), s.cols());
    for (Index j = 0; j < s.cols(); ++j) {
      T dot = s.col(j).dot(g.col(j));
      dx.col(j) = (s.col(j).array() * (g.col(j).array() - dot)).matrix();
    }
    t.accumulate(ia, dx);
  });
}

/// C(i, j) = cos(a_i, b_j) over columns of a and b. A zero-norm column gives
/// similarity 0 and receives no gradient.
template <typename T>
Var<T> cosine_matrix(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  auto normalize = [](const Matrix<T>& m, Matrix<T>& unit, Eigen::Matrix<T, Eigen::Dynamic, 1>& norms) {
    unit = m;
    norms = m.colwise().norm().transpose();
    for (Index j = 0; j < m.cols(); ++j) {
      if (norms(j) > T(0))
        unit.col(j) /= norms(j);
      else
        unit.col(j).setZero();
    }
  };
  Matrix<T> an, bn;
  Eigen::Matrix<T, Eigen::Dynamic, 1> na, nb;
  normalize(a.value(), an, na);
  normalize(b.value(), bn, nb);
  Matrix<T> v = an.transpose() * bn;
  return t.push(std::move(v), t.needs({a, b}),
                [ia, ib, an, bn, na, nb](Tape<T>& t, int self) {
                  const Matrix<T>& g = t.node(self).grad;
                  auto project = [](const Matrix<T>& unit, const Eigen::Matrix<T, Eigen::Dynamic, 1>& norms,
                                    Matrix<T> dunit) {
                    for (Index j = 0; j < unit.cols(); ++j) {
                      if (norms(j) > T(0))
                        dunit.col(j) = (dunit.col(j) - unit.col(j) * unit.col(j).dot(dunit.col(j))) / norms(j);
                      else
                        dunit.col(j).setZero();
                    }
                    return dunit;
                  };
                  if (t.node(ia).requires_grad)
                    t.accumulate(ia, project(an, na, bn * g.transpose()));
                  if (t.node(ib).requires_grad)
                    t.accumulate(ib, project(bn, nb, an * g));
                });
}

/// Gathers rows of an embedding table as columns: result is dim x ids.size().
/// The table is not placed on the tape; gradients scatter straight into it.
template <typename T>
Var<T> lookup(Tape<T>& t, Parameter<T>& table, std::span<const int> ids) {
  Index dim = table.value.cols();
  Matrix<T> v(dim, static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k)
    v.col(static_cast<Index>(k)) = table.value.row(ids[k]).transpose();
  Parameter<T>* p = &table;
  std::vector<int> idv(ids.begin(), ids.end());
  return t.push(std::move(v), true, [p, idv](Tape<T>& t, int self) {
    const Matrix<T>& g = t.node(self).grad;
    for (std::size_t k = 0; k < idv.size(); ++k)
      p->grad.row(idv[k]) += g.col(static_cast<Index>(k)).transpose();
  });
}

/// Convolution input for one word: column k stacks the embeddings of
/// characters ids[k .. k+width-1]. Result is (width*dim) x (ids.size()-width+1).
template <typename T>
Var<T> char_windows(Tape<T>& t, Parameter<T>& table, std::span<const int> ids, int width) {
  Index dim = table.value.cols();
  auto positions = static_cast<Index>(ids.size()) - width + 1;
  assert(positions >= 1);
  Matrix<T> v(width * dim, positions);
  for (Index k = 0; k < positions; ++k)
    for (int w = 0; w < width; ++w)
      v.block(w * dim, k, dim, 1) = table.value.row(ids[static_cast<std::size_t>(k + w)]).transpose();
  Parameter<T>* p = &table;
  std::vector<int> idv(ids.begin(), ids.end());
  return t.push(std::move(v), true, [p, idv, width, dim, positions](Tape<T>& t, int self) {
    const Matrix<T>& g = t.node(self).grad;
    for (Index k = 0; k < positions; ++k)
      for (int w = 0; w < width; ++w)
        p->grad.row(idv[static_cast<std::size_t>(k + w)]) += g.block(w * dim, k, dim, 1).transpose();
  });
}

}  // namespace star::ad
