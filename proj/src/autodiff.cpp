#include "pdgsim/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pdgsim/errors.hpp"

namespace pdgsim::ad {

namespace {

// When set, piecewise ops append the branch taken by each input entry.
thread_local std::vector<std::uint8_t>* g_kink_log = nullptr;

std::string shape(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const std::string& expected, const std::string& found) {
  throw ShapeError(std::string(op) + ": expected " + expected + ", found " + found);
}

template <typename Derived>
void accumulate(Node& n, const Eigen::MatrixBase<Derived>& g) {
  if (!n.requires_grad) return;
  // Gradient expressions never read n.grad, so products can skip the
  // aliasing temporary.
  if (n.grad.size() == 0) {
    n.grad.noalias() = g;
  } else {
    n.grad.noalias() += g;
  }
}

Value make(Matrix data, const char* op, std::vector<std::shared_ptr<Node>> parents,
           std::function<void(Node&)> push) {
  auto node = std::make_shared<Node>();
  node->data = std::move(data);
  node->op = op;
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->push_grad = std::move(push);
  }
  return Value(std::move(node));
}

void require_same_shape(const char* op, const Value& a, const Value& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    shape_error(op, shape(a.rows(), a.cols()), shape(b.rows(), b.cols()));
}

}  // namespace

double Value::scalar() const {
  if (rows() != 1 || cols() != 1) throw NotScalar("value is " + shape(rows(), cols()));
  return node_->data(0, 0);
}

Value constant(Matrix m) {
  auto node = std::make_shared<Node>();
  node->data = std::move(m);
  node->op = "constant";
  return Value(std::move(node));
}

Value parameter(Matrix m) {
  auto node = std::make_shared<Node>();
  node->data = std::move(m);
  node->op = "parameter";
  node->requires_grad = true;
  return Value(std::move(node));
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows())
    shape_error("matmul", "lhs cols == rhs rows (" + std::to_string(a.cols()) + ")",
                std::to_string(b.rows()));
  Matrix out = a.data() * b.data();
  return make(std::move(out), "matmul", {a.node(), b.node()}, [](Node& self) {
    Node& l = *self.parents[0];
    Node& r = *self.parents[1];
    if (l.requires_grad) accumulate(l, self.grad * r.data.transpose());
    if (r.requires_grad) accumulate(r, l.data.transpose() * self.grad);
  });
}

Value add(const Value& a, const Value& b) {
  require_same_shape("add", a, b);
  return make(a.data() + b.data(), "add", {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Value sub(const Value& a, const Value& b) {
  require_same_shape("sub", a, b);
  return make(a.data() - b.data(), "sub", {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  });
}

Value add_row(const Value& a, const Value& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    shape_error("add_row", shape(1, a.cols()), shape(row.rows(), row.cols()));
  Matrix out = a.data().rowwise() + row.data().row(0);
  return make(std::move(out), "add_row", {a.node(), row.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad.colwise().sum());
  });
}

Value hadamard(const Value& a, const Value& b) {
  require_same_shape("hadamard", a, b);
  return make(a.data().cwiseProduct(b.data()), "hadamard", {a.node(), b.node()},
              [](Node& self) {
                Node& l = *self.parents[0];
                Node& r = *self.parents[1];
                if (l.requires_grad) accumulate(l, self.grad.cwiseProduct(r.data));
                if (r.requires_grad) accumulate(r, self.grad.cwiseProduct(l.data));
              });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", std::to_string(rows) + " rows",
                                      std::to_string(p.rows()) + " rows");
    cols += p.cols();
    parents.push_back(p.node());
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.data();
    at += p.cols();
  }
  return make(std::move(out), "concat_cols", std::move(parents), [](Node& self) {
    Eigen::Index offset = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->data.cols();
      if (p->requires_grad) accumulate(*p, self.grad.middleCols(offset, c));
      offset += c;
    }
  });
}

Value row_slice(const Value& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    shape_error("row_slice", "rows within [0, " + std::to_string(a.rows()) + ")",
                "[" + std::to_string(begin) + ", " + std::to_string(begin + count) + ")");
  Matrix out = a.data().middleRows(begin, count);
  return make(std::move(out), "row_slice", {a.node()}, [begin, count](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.data.rows(), p.data.cols());
    p.grad.middleRows(begin, count) += self.grad;
  });
}

Value col_slice(const Value& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    shape_error("col_slice", "columns within [0, " + std::to_string(a.cols()) + ")",
                "[" + std::to_string(begin) + ", " + std::to_string(begin + count) + ")");
  Matrix out = a.data().middleCols(begin, count);
  return make(std::move(out), "col_slice", {a.node()}, [begin, count](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.data.rows(), p.data.cols());
    p.grad.middleCols(begin, count) += self.grad;
  });
}

Value outer_add(const Value& a, const Value& b) {
  if (a.cols() != 1 || b.cols() != 1)
    shape_error("outer_add", "two column vectors",
                shape(a.rows(), a.cols()) + " and " + shape(b.rows(), b.cols()));
  Matrix out = a.data().replicate(1, b.rows()) + b.data().transpose().replicate(a.rows(), 1);
  return make(std::move(out), "outer_add", {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad.rowwise().sum());
    accumulate(*self.parents[1], self.grad.colwise().sum().transpose());
  });
}

Value sum_rows(const Value& a) {
  return make(a.data().colwise().sum(), "sum_rows", {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, self.grad.replicate(p.data.rows(), 1));
  });
}

Value sum(const Value& a) {
  Matrix out(1, 1);
  out(0, 0) = a.data().sum();
  return make(std::move(out), "sum", {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, Matrix::Constant(p.data.rows(), p.data.cols(), self.grad(0, 0)));
  });
}

Value transpose(const Value& a) {
  return make(a.data().transpose(), "transpose", {a.node()},
              [](Node& self) { accumulate(*self.parents[0], self.grad.transpose()); });
}

Value scale(const Value& a, double c) {
  return make(a.data() * c, "scale", {a.node()},
              [c](Node& self) { accumulate(*self.parents[0], self.grad * c); });
}

Value add_scalar(const Value& a, double c) {
  return make(a.data().array() + c, "add_scalar", {a.node()},
              [](Node& self) { accumulate(*self.parents[0], self.grad); });
}

Value sigmoid(const Value& a) {
  // e = exp(-|x|) never overflows; pick the matching branch per sign.
  const auto x = a.data().array();
  const Eigen::ArrayXXd e = (-x.abs()).exp();
  Matrix out = (x >= 0).select(1.0 / (1.0 + e), e / (1.0 + e)).matrix();
  return make(std::move(out), "sigmoid", {a.node()}, [](Node& self) {
    const auto& y = self.data.array();
    accumulate(*self.parents[0], (self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Value tanh(const Value& a) {
  // tanh(x) = sign(x) (1 - e) / (1 + e) with e = exp(-2|x|).
  const auto x = a.data().array();
  const Eigen::ArrayXXd e = (-2.0 * x.abs()).exp();
  const Eigen::ArrayXXd mag = (1.0 - e) / (1.0 + e);
  Matrix out = (x >= 0).select(mag, -mag).matrix();
  return make(std::move(out), "tanh", {a.node()}, [](Node& self) {
    const auto& y = self.data.array();
    accumulate(*self.parents[0], (self.grad.array() * (1.0 - y * y)).matrix());
  });
}

Value leaky_relu(const Value& a, double slope) {
  if (g_kink_log)
    for (Eigen::Index i = 0; i < a.data().size(); ++i) g_kink_log->push_back(a.data()(i) >= 0);
  Matrix out = a.data().unaryExpr([slope](double x) { return x >= 0 ? x : slope * x; });
  return make(std::move(out), "leaky_relu", {a.node()}, [slope](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = p.data.unaryExpr([slope](double x) { return x >= 0 ? 1.0 : slope; });
    accumulate(p, self.grad.cwiseProduct(g));
  });
}

Value log(const Value& a) {
  return make(a.data().array().log().matrix(), "log", {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, (self.grad.array() / p.data.array()).matrix());
  });
}

Value clamp(const Value& a, double lo, double hi) {
  if (g_kink_log)
    for (Eigen::Index i = 0; i < a.data().size(); ++i) {
      const double x = a.data()(i);
      g_kink_log->push_back(x < lo ? 0 : x > hi ? 2 : 1);
    }
  Matrix out = a.data().cwiseMax(lo).cwiseMin(hi);
  return make(std::move(out), "clamp", {a.node()}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    Matrix pass = p.data.unaryExpr([lo, hi](double x) { return x >= lo && x <= hi ? 1.0 : 0.0; });
    accumulate(p, self.grad.cwiseProduct(pass));
  });
}

Value masked_row_softmax(const Value& scores, const Matrix& mask) {
  if (mask.rows() != scores.rows() || mask.cols() != scores.cols())
    shape_error("masked_row_softmax", shape(scores.rows(), scores.cols()),
                shape(mask.rows(), mask.cols()));
  const Matrix& s = scores.data();
  Matrix out = Matrix::Zero(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, s(i, j));
    if (mx == -std::numeric_limits<double>::infinity())
      throw MaskError("mask row " + std::to_string(i) + " is all zero");
    double total = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (mask(i, j) != 0.0) {
        out(i, j) = std::exp(s(i, j) - mx);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return make(std::move(out), "masked_row_softmax", {scores.node()}, [](Node& self) {
    const Matrix& y = self.data;
    Matrix dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
    accumulate(*self.parents[0], g);
  });
}

Value detach(const Value& a) { return constant(a.data()); }

namespace {

void check_segments(const char* op, const Value& x, const std::vector<Eigen::Index>& offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows())
    shape_error(op, "offsets covering 0.." + std::to_string(x.rows()), "mismatched offsets");
  for (std::size_t g = 1; g < offsets.size(); ++g)
    if (offsets[g] < offsets[g - 1]) shape_error(op, "non-decreasing offsets", "decreasing");
}

}  // namespace

Value segment_attention(const Value& z, const Value& attn, const std::vector<Eigen::Index>& offsets,
                        const std::vector<Matrix>& masks, double slope,
                        std::vector<Matrix>* alphas) {
  check_segments("segment_attention", z, offsets);
  const Eigen::Index d = z.cols();
  if (attn.rows() != 2 * d || attn.cols() != 1)
    shape_error("segment_attention", shape(2 * d, 1), shape(attn.rows(), attn.cols()));
  if (masks.size() + 1 != offsets.size())
    shape_error("segment_attention", std::to_string(offsets.size() - 1) + " masks",
                std::to_string(masks.size()));

  const Matrix& zd = z.data();
  const auto a_t = attn.data().topRows(d);
  const auto a_s = attn.data().bottomRows(d);
  auto logits = std::make_shared<std::vector<Matrix>>();
  auto weights = std::make_shared<std::vector<Matrix>>();
  Matrix out(zd.rows(), d);
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    const Eigen::Index o = offsets[g];
    const Eigen::Index n = offsets[g + 1] - o;
    const Matrix& mask = masks[g];
    if (mask.rows() != n || mask.cols() != n)
      shape_error("segment_attention", shape(n, n), shape(mask.rows(), mask.cols()));
    const auto zg = zd.middleRows(o, n);
    const Eigen::VectorXd st = zg * a_t;
    const Eigen::VectorXd ss = zg * a_s;
    Matrix e(n, n);
    Matrix alpha = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double raw = st(i) + ss(j);
        e(i, j) = raw;
        if (mask(i, j) == 0.0) continue;
        if (g_kink_log) g_kink_log->push_back(raw >= 0);
        mx = std::max(mx, raw >= 0 ? raw : slope * raw);
      }
      if (mx == -std::numeric_limits<double>::infinity())
        throw MaskError("mask row " + std::to_string(i) + " of segment " + std::to_string(g) +
                        " is all zero");
      double total = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (mask(i, j) == 0.0) continue;
        const double l = e(i, j) >= 0 ? e(i, j) : slope * e(i, j);
        alpha(i, j) = std::exp(l - mx);
        total += alpha(i, j);
      }
      alpha.row(i) /= total;
    }
    out.middleRows(o, n).noalias() = alpha * zg;
    if (alphas) alphas->push_back(alpha);
    logits->push_back(std::move(e));
    weights->push_back(std::move(alpha));
  }
  return make(std::move(out), "segment_attention", {z.node(), attn.node()},
              [offsets, slope, logits, weights](Node& self) {
                Node& zn = *self.parents[0];
                Node& an = *self.parents[1];
                const Eigen::Index d = zn.data.cols();
                Matrix dz = Matrix::Zero(zn.data.rows(), d);
                Matrix da = Matrix::Zero(2 * d, 1);
                const auto a_t = an.data.topRows(d);
                const auto a_s = an.data.bottomRows(d);
                for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
                  const Eigen::Index o = offsets[g];
                  const Eigen::Index n = offsets[g + 1] - o;
                  const Matrix& alpha = (*weights)[g];
                  const Matrix& e = (*logits)[g];
                  const auto zg = zn.data.middleRows(o, n);
                  const auto gg = self.grad.middleRows(o, n);
                  const Matrix dalpha = gg * zg.transpose();
                  // softmax backward; masked entries have alpha == 0
                  const Eigen::VectorXd dot = alpha.cwiseProduct(dalpha).rowwise().sum();
                  Matrix de = alpha.cwiseProduct(dalpha - dot.replicate(1, n));
                  de = (e.array() >= 0).select(de.array(), slope * de.array()).matrix();
                  const Eigen::VectorXd ds_t = de.rowwise().sum();
                  const Eigen::VectorXd ds_s = de.colwise().sum().transpose();
                  auto dzg = dz.middleRows(o, n);
                  dzg.noalias() += alpha.transpose() * gg;
                  dzg.noalias() += ds_t * a_t.transpose();
                  dzg.noalias() += ds_s * a_s.transpose();
                  da.topRows(d).noalias() += zg.transpose() * ds_t;
                  da.bottomRows(d).noalias() += zg.transpose() * ds_s;
                }
                accumulate(zn, dz);
                accumulate(an, da);
              });
}

Value segment_sum(const Value& x, const std::vector<Eigen::Index>& offsets, bool mean) {
  check_segments("segment_sum", x, offsets);
  const Eigen::Index groups = static_cast<Eigen::Index>(offsets.size()) - 1;
  Matrix out(groups, x.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    const Eigen::Index n = offsets[g + 1] - offsets[g];
    if (n == 0) throw EmptyGraph("segment_sum: segment " + std::to_string(g) + " is empty");
    out.row(g) = x.data().middleRows(offsets[g], n).colwise().sum();
    if (mean) out.row(g) /= static_cast<double>(n);
  }
  return make(std::move(out), "segment_sum", {x.node()}, [offsets, mean](Node& self) {
    Node& p = *self.parents[0];
    Matrix g(p.data.rows(), p.data.cols());
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
      const Eigen::Index n = offsets[k + 1] - offsets[k];
      const double w = mean ? 1.0 / static_cast<double>(n) : 1.0;
      g.middleRows(offsets[k], n) = (w * self.grad.row(static_cast<Eigen::Index>(k))).replicate(n, 1);
    }
    accumulate(p, g);
  });
}

Value gather_rows(const Value& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= x.rows())
      shape_error("gather_rows", "row index < " + std::to_string(x.rows()),
                  std::to_string(rows[k]));
    out.row(static_cast<Eigen::Index>(k)) = x.data().row(rows[k]);
  }
  return make(std::move(out), "gather_rows", {x.node()}, [rows](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.data.rows(), p.data.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      g.row(rows[k]) += self.grad.row(static_cast<Eigen::Index>(k));
    accumulate(p, g);
  });
}

// ---------------------------------------------------------------------------

Value& ParamStore::add(const std::string& name, Matrix init, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Value v = trainable ? parameter(std::move(init)) : constant(std::move(init));
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(v));
  return entries_.back().second;
}

Value& ParamStore::adopt(const std::string& name, const Value& value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, value);
  return entries_.back().second;
}

Value& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

const Value& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : entries_) {
    if (!v.requires_grad()) continue;
    v.mutable_grad() = Matrix::Zero(v.rows(), v.cols());
  }
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_)
    if (v.requires_grad()) n += static_cast<std::size_t>(v.data().size());
  return n;
}

void backward(const Value& loss, ParamStore& params) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw NotScalar("loss is " + shape(loss.rows(), loss.cols()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Value& p = params.at(i);
    if (p.requires_grad() && p.grad().size() == 0)
      p.mutable_grad() = Matrix::Zero(p.rows(), p.cols());
  }
  if (!loss.requires_grad()) return;

  // Post-order DFS over grad-requiring nodes gives a topological order.
  std::vector<Node*> topo;
  std::unordered_map<Node*, bool> visited;
  std::vector<std::pair<Node*, std::size_t>> stack = {{loss.node().get(), 0}};
  visited[loss.node().get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited[p]) {
        visited[p] = true;
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  // Interior nodes start from zero; parameter leaves keep accumulating.
  for (Node* n : topo)
    if (!n->parents.empty()) n->grad = Matrix::Zero(n->data.rows(), n->data.cols());
  loss.node()->grad = Matrix::Ones(1, 1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->push_grad) n->push_grad(*n);
  }
  // Release interior gradient buffers.
  for (Node* n : topo)
    if (!n->parents.empty()) n->grad.resize(0, 0);
}

GradCheckResult grad_check(const std::function<Value()>& loss_fn, ParamStore& params, double h) {
  params.zero_grads();
  Value loss = loss_fn();
  backward(loss, params);

  // Evaluates the loss and the branch pattern of every piecewise op.
  std::vector<std::uint8_t> pattern;
  auto probe = [&](std::vector<std::uint8_t>& out) {
    out.clear();
    g_kink_log = &out;
    double v = 0.0;
    try {
      v = loss_fn().scalar();
    } catch (...) {
      g_kink_log = nullptr;
      throw;
    }
    g_kink_log = nullptr;
    return v;
  };

  GradCheckResult result;
  std::vector<std::uint8_t> plus_pattern, minus_pattern;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Value& p = params.at(i);
    if (!p.requires_grad()) continue;
    const Matrix analytic = p.grad();
    Matrix& data = p.mutable_data();
    for (Eigen::Index k = 0; k < data.size(); ++k) {
      const double saved = data(k);
      data(k) = saved + h;
      const double plus = probe(plus_pattern);
      data(k) = saved - h;
      const double minus = probe(minus_pattern);
      data(k) = saved;
      if (plus_pattern != minus_pattern) {
        // A kink lies inside [x - h, x + h]; the difference quotient is not
        // an estimate of the derivative there.
        ++result.entries_skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic(k);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = params.name(i);
      }
    }
  }
  return result;
}

}  // namespace pdgsim::ad
