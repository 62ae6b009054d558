#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pacl {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroVector : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A trainable tensor with its gradient accumulator and Adam state. Parameters
// outlive tapes; each training step binds them as leaves on a fresh tape.
struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd adam_m;
  Eigen::MatrixXd adam_v;

  Param() = default;
  Param(std::string n, Eigen::MatrixXd v) : name(std::move(n)), value(std::move(v)) {
    grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
    adam_m = grad;
    adam_v = grad;
  }
  void zero_grad() { grad.setZero(); }
};

namespace ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;
  const Eigen::MatrixXd& val() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
  double scalar() const;
  bool defined() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Value(Tape* tape, int index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  int index_ = -1;
};

// Dynamic reverse-mode tape. Nodes are created in topological order; backward
// walks them in reverse with a fixed summation order, so results are
// deterministic.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Value constant(Eigen::MatrixXd v);                  // no gradient tracked
  Value input(Eigen::MatrixXd v);                     // gradient tracked, readable after backward
  Value param(Param& p);                              // gradient flushed into p.grad

  Value stop_gradient(Value a);

  // Elementwise / scalar ops.
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, double c);
  Value add_scalar(Value a, double c);
  Value mul_constant(Value a, const Eigen::MatrixXd& mask);  // dropout-style mask
  Value relu(Value a);
  Value sigmoid(Value a);

  // Linear algebra.
  Value matmul(Value a, Value b);     // a * b
  Value matmul_bt(Value a, Value b);  // a * b^T
  Value add_row_broadcast(Value a, Value row);  // adds a 1xC row to every row of a
  Value concat_cols(const std::vector<Value>& parts);
  Value row_range(Value a, Eigen::Index start, Eigen::Index count);
  Value col_range(Value a, Eigen::Index start, Eigen::Index count);
  Value gather_rows(Value table, std::vector<int> ids);

  // Row-wise nonlinear blocks.
  Value softmax_rows(Value a);
  Value layer_norm_rows(Value a, Value gamma, Value beta, double eps = 1e-5);

  // Losses / reductions.
  Value mean_all(Value a);
  Value sum_list(const std::vector<Value>& scalars);
  Value mean_list(const std::vector<Value>& scalars);
  // Mean categorical cross-entropy over rows of logits against target ids.
  Value cross_entropy_rows(Value logits, std::vector<int> targets);
  // Mean binary cross-entropy with logits against a multi-hot row vector.
  Value bce_with_logits(Value logits, Eigen::RowVectorXd targets);
  // Cosine similarity of two row vectors -> 1x1. Throws ZeroVector on zero norm.
  Value cosine_similarity(Value a, Value b);
  // Stack 1x1 scalars into a 1xN row.
  Value stack_scalars(const std::vector<Value>& scalars);
  // log(sum(exp(row))) of a 1xN row -> 1x1, max-shifted.
  Value logsumexp_row(Value row);
  Value get_element(Value row, Eigen::Index col);  // 1x1 slice of a row vector

  // Runs backward from a 1x1 loss node and flushes parameter gradients.
  void backward(Value loss);

  // Gradient of an input() leaf after backward (zeros if none reached it).
  Eigen::MatrixXd grad_of(Value v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Value;

  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::function<void(Tape&, const Eigen::MatrixXd&)> backward;  // pulls own grad into parents
    bool needs_grad = false;
  };

  Value make(Eigen::MatrixXd value, bool needs_grad,
             std::function<void(Tape&, const Eigen::MatrixXd&)> backward);
  Node& node(Value v) { return nodes_[static_cast<std::size_t>(v.index_)]; }
  const Node& node(Value v) const { return nodes_[static_cast<std::size_t>(v.index_)]; }
  void accumulate(Value v, const Eigen::MatrixXd& g);

  std::vector<Node> nodes_;
  std::vector<std::pair<Param*, int>> param_bindings_;
};

}  // namespace ad
}  // namespace pacl
