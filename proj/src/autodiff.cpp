#include "pacl/autodiff.hpp"

#include <cmath>

namespace pacl {
namespace ad {

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& row) {
  const double m = row.maxCoeff();
  Eigen::RowVectorXd e = (row.array() - m).exp();
  return e / e.sum();
}

}  // namespace

const Eigen::MatrixXd& Value::val() const {
  if (!tape_) throw std::logic_error("use of undefined Value");
  return tape_->node(*this).value;
}

double Value::scalar() const {
  const auto& v = val();
  check(v.rows() == 1 && v.cols() == 1, "scalar() on non-1x1 value");
  return v(0, 0);
}

Value Tape::make(Eigen::MatrixXd value, bool needs_grad,
                 std::function<void(Tape&, const Eigen::MatrixXd&)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(Value v, const Eigen::MatrixXd& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Value Tape::constant(Eigen::MatrixXd v) { return make(std::move(v), false, nullptr); }

Value Tape::input(Eigen::MatrixXd v) { return make(std::move(v), true, nullptr); }

Value Tape::param(Param& p) {
  Value v = make(p.value, true, nullptr);
  param_bindings_.emplace_back(&p, v.index_);
  return v;
}

Value Tape::stop_gradient(Value a) { return constant(a.val()); }

Value Tape::add(Value a, Value b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const bool needs = node(a).needs_grad || node(b).needs_grad;
  return make(a.val() + b.val(), needs, [a, b](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Value Tape::sub(Value a, Value b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  const bool needs = node(a).needs_grad || node(b).needs_grad;
  return make(a.val() - b.val(), needs, [a, b](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Value Tape::mul(Value a, Value b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  const bool needs = node(a).needs_grad || node(b).needs_grad;
  return make(a.val().cwiseProduct(b.val()), needs, [a, b](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g.cwiseProduct(b.val()));
    t.accumulate(b, g.cwiseProduct(a.val()));
  });
}

Value Tape::scale(Value a, double c) {
  return make(a.val() * c, node(a).needs_grad,
              [a, c](Tape& t, const Eigen::MatrixXd& g) { t.accumulate(a, g * c); });
}

Value Tape::add_scalar(Value a, double c) {
  return make(a.val().array() + c, node(a).needs_grad,
              [a](Tape& t, const Eigen::MatrixXd& g) { t.accumulate(a, g); });
}

Value Tape::mul_constant(Value a, const Eigen::MatrixXd& mask) {
  check(a.rows() == mask.rows() && a.cols() == mask.cols(), "mul_constant: shape mismatch");
  return make(a.val().cwiseProduct(mask), node(a).needs_grad,
              [a, mask](Tape& t, const Eigen::MatrixXd& g) {
                t.accumulate(a, g.cwiseProduct(mask));
              });
}

Value Tape::relu(Value a) {
  return make(a.val().cwiseMax(0.0), node(a).needs_grad,
              [a](Tape& t, const Eigen::MatrixXd& g) {
                t.accumulate(a, (a.val().array() > 0.0).cast<double>().matrix().cwiseProduct(g));
              });
}

Value Tape::sigmoid(Value a) {
  Eigen::MatrixXd y = a.val().unaryExpr([](double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  });
  return make(y, node(a).needs_grad, [a, y](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Value Tape::matmul(Value a, Value b) {
  check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const bool needs = node(a).needs_grad || node(b).needs_grad;
  return make(a.val() * b.val(), needs, [a, b](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g * b.val().transpose());
    t.accumulate(b, a.val().transpose() * g);
  });
}

Value Tape::matmul_bt(Value a, Value b) {
  check(a.cols() == b.cols(), "matmul_bt: inner dimension mismatch");
  const bool needs = node(a).needs_grad || node(b).needs_grad;
  return make(a.val() * b.val().transpose(), needs, [a, b](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g * b.val());
    t.accumulate(b, g.transpose() * a.val());
  });
}

Value Tape::add_row_broadcast(Value a, Value row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row_broadcast: shape mismatch");
  Eigen::MatrixXd out = a.val();
  out.rowwise() += Eigen::RowVectorXd(row.val().row(0));
  const bool needs = node(a).needs_grad || node(row).needs_grad;
  return make(std::move(out), needs, [a, row](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    check(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || node(p).needs_grad;
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.val();
    at += p.cols();
  }
  return make(std::move(out), needs, [parts](Tape& t, const Eigen::MatrixXd& g) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Value Tape::row_range(Value a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && count >= 1 && start + count <= a.rows(), "row_range: out of range");
  return make(a.val().middleRows(start, count), node(a).needs_grad,
              [a, start, count](Tape& t, const Eigen::MatrixXd& g) {
                Eigen::MatrixXd full = Eigen::MatrixXd::Zero(a.rows(), a.cols());
                full.middleRows(start, count) = g;
                t.accumulate(a, full);
              });
}

Value Tape::col_range(Value a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && count >= 1 && start + count <= a.cols(), "col_range: out of range");
  return make(a.val().middleCols(start, count), node(a).needs_grad,
              [a, start, count](Tape& t, const Eigen::MatrixXd& g) {
                Eigen::MatrixXd full = Eigen::MatrixXd::Zero(a.rows(), a.cols());
                full.middleCols(start, count) = g;
                t.accumulate(a, full);
              });
}

Value Tape::gather_rows(Value table, std::vector<int> ids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.val().row(ids[i]);
  }
  return make(std::move(out), node(table).needs_grad,
              [table, ids](Tape& t, const Eigen::MatrixXd& g) {
                Eigen::MatrixXd full = Eigen::MatrixXd::Zero(table.rows(), table.cols());
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  full.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                }
                t.accumulate(table, full);
              });
}

Value Tape::softmax_rows(Value a) {
  Eigen::MatrixXd y(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) y.row(r) = softmax_row(a.val().row(r));
  return make(y, node(a).needs_grad, [a, y](Tape& t, const Eigen::MatrixXd& g) {
    Eigen::MatrixXd da(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      da.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    t.accumulate(a, da);
  });
}

Value Tape::layer_norm_rows(Value a, Value gamma, Value beta, double eps) {
  const Eigen::Index cols = a.cols();
  check(gamma.rows() == 1 && gamma.cols() == cols, "layer_norm: gamma shape");
  check(beta.rows() == 1 && beta.cols() == cols, "layer_norm: beta shape");
  Eigen::MatrixXd xhat(a.rows(), cols);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mean = a.val().row(r).mean();
    const double var = (a.val().row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = ((a.val().row(r).array() - mean) * is).matrix();
  }
  Eigen::MatrixXd y = xhat;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    y.row(r) = y.row(r).cwiseProduct(gamma.val().row(0)) + beta.val().row(0);
  }
  const bool needs = node(a).needs_grad || node(gamma).needs_grad || node(beta).needs_grad;
  return make(std::move(y), needs,
              [a, gamma, beta, xhat, inv_std](Tape& t, const Eigen::MatrixXd& g) {
                Eigen::MatrixXd da(xhat.rows(), xhat.cols());
                Eigen::RowVectorXd dgamma = Eigen::RowVectorXd::Zero(xhat.cols());
                Eigen::RowVectorXd dbeta = Eigen::RowVectorXd::Zero(xhat.cols());
                for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                  dgamma += g.row(r).cwiseProduct(xhat.row(r));
                  dbeta += g.row(r);
                  const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gamma.val().row(0));
                  const double m1 = dxhat.mean();
                  const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                  da.row(r) =
                      inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                }
                t.accumulate(a, da);
                t.accumulate(gamma, dgamma);
                t.accumulate(beta, dbeta);
              });
}

Value Tape::mean_all(Value a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.val().sum() / n;
  return make(out, node(a).needs_grad, [a, n](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(a, Eigen::MatrixXd::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Value Tape::sum_list(const std::vector<Value>& scalars) {
  check(!scalars.empty(), "sum_list: empty");
  double total = 0.0;
  bool needs = false;
  for (const auto& s : scalars) {
    total += s.scalar();
    needs = needs || node(s).needs_grad;
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = total;
  return make(out, needs, [scalars](Tape& t, const Eigen::MatrixXd& g) {
    for (const auto& s : scalars) t.accumulate(s, g);
  });
}

Value Tape::mean_list(const std::vector<Value>& scalars) {
  Value total = sum_list(scalars);
  return scale(total, 1.0 / static_cast<double>(scalars.size()));
}

Value Tape::cross_entropy_rows(Value logits, std::vector<int> targets) {
  check(static_cast<Eigen::Index>(targets.size()) == logits.rows(),
        "cross_entropy_rows: target count mismatch");
  const Eigen::Index n = logits.rows();
  Eigen::MatrixXd probs(n, logits.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    check(targets[static_cast<std::size_t>(r)] >= 0 &&
              targets[static_cast<std::size_t>(r)] < logits.cols(),
          "cross_entropy_rows: target out of range");
    const Eigen::RowVectorXd row = logits.val().row(r);
    const double m = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - m).exp();
    const double z = e.sum();
    probs.row(r) = e / z;
    loss += std::log(z) + m - row(targets[static_cast<std::size_t>(r)]);
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = loss / static_cast<double>(n);
  return make(out, node(logits).needs_grad,
              [logits, targets, probs, n](Tape& t, const Eigen::MatrixXd& g) {
                Eigen::MatrixXd d = probs;
                for (Eigen::Index r = 0; r < n; ++r) {
                  d(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
                }
                t.accumulate(logits, d * (g(0, 0) / static_cast<double>(n)));
              });
}

Value Tape::bce_with_logits(Value logits, Eigen::RowVectorXd targets) {
  check(logits.rows() == 1 && logits.cols() == targets.cols(), "bce_with_logits: shape mismatch");
  const Eigen::Index v = logits.cols();
  Eigen::RowVectorXd sig(v);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < v; ++j) {
    const double z = logits.val()(0, j);
    const double y = targets(j);
    // max(z,0) - z*y + log(1 + exp(-|z|)): numerically stable BCE.
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    sig(j) = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = loss / static_cast<double>(v);
  return make(out, node(logits).needs_grad,
              [logits, targets, sig, v](Tape& t, const Eigen::MatrixXd& g) {
                Eigen::MatrixXd d = (sig - targets) * (g(0, 0) / static_cast<double>(v));
                t.accumulate(logits, d);
              });
}

Value Tape::cosine_similarity(Value a, Value b) {
  check(a.rows() == 1 && b.rows() == 1 && a.cols() == b.cols(),
        "cosine_similarity: expects equal-length row vectors");
  const double na = a.val().norm();
  const double nb = b.val().norm();
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine_similarity: zero-norm representation");
  const double cos = a.val().row(0).dot(b.val().row(0)) / (na * nb);
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = cos;
  const bool needs = node(a).needs_grad || node(b).needs_grad;
  return make(out, needs, [a, b, na, nb, cos](Tape& t, const Eigen::MatrixXd& g) {
    const double s = g(0, 0);
    t.accumulate(a, s * (b.val() / (na * nb) - a.val() * (cos / (na * na))));
    t.accumulate(b, s * (a.val() / (na * nb) - b.val() * (cos / (nb * nb))));
  });
}

Value Tape::stack_scalars(const std::vector<Value>& scalars) {
  check(!scalars.empty(), "stack_scalars: empty");
  Eigen::MatrixXd out(1, static_cast<Eigen::Index>(scalars.size()));
  bool needs = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    out(0, static_cast<Eigen::Index>(i)) = scalars[i].scalar();
    needs = needs || node(scalars[i]).needs_grad;
  }
  return make(std::move(out), needs, [scalars](Tape& t, const Eigen::MatrixXd& g) {
    Eigen::MatrixXd unit(1, 1);
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      unit(0, 0) = g(0, static_cast<Eigen::Index>(i));
      t.accumulate(scalars[i], unit);
    }
  });
}

Value Tape::logsumexp_row(Value row) {
  check(row.rows() == 1, "logsumexp_row: expects a row vector");
  const Eigen::RowVectorXd r = row.val().row(0);
  const double m = r.maxCoeff();
  const Eigen::RowVectorXd e = (r.array() - m).exp();
  const double z = e.sum();
  Eigen::RowVectorXd soft = e / z;
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = m + std::log(z);
  return make(out, node(row).needs_grad, [row, soft](Tape& t, const Eigen::MatrixXd& g) {
    t.accumulate(row, soft * g(0, 0));
  });
}

Value Tape::get_element(Value row, Eigen::Index col) {
  check(row.rows() == 1 && col >= 0 && col < row.cols(), "get_element: out of range");
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = row.val()(0, col);
  return make(out, node(row).needs_grad, [row, col](Tape& t, const Eigen::MatrixXd& g) {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(1, row.cols());
    full(0, col) = g(0, 0);
    t.accumulate(row, full);
  });
}

void Tape::backward(Value loss) {
  check(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be 1x1");
  Node& top = node(loss);
  if (!top.needs_grad) return;
  if (top.grad.size() == 0) top.grad = Eigen::MatrixXd::Zero(1, 1);
  top.grad(0, 0) += 1.0;
  for (int i = loss.index_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && n.needs_grad && n.grad.size() != 0) {
      n.backward(*this, n.grad);
    }
  }
  for (const auto& [param, idx] : param_bindings_) {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.grad.size() != 0) param->grad += n.grad;
  }
}

Eigen::MatrixXd Tape::grad_of(Value v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace ad
}  // namespace pacl
